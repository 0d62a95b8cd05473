"""Accuracy statistics for point predictions, predictive densities and intervals."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .errors import DataError

RMIL_EPS = 1e-3
DAY_START_MINUTES = 7 * 60
DAY_END_MINUTES = 22 * 60


def _arrays(*values):
    arrs = [np.asarray(v, dtype=float).ravel() for v in values]
    if len({a.size for a in arrs}) != 1:
        raise DataError(f"length mismatch: {[a.size for a in arrs]}")
    return arrs


def nlpd(log_densities) -> float:
    """Mean negative log predictive density."""
    (ld,) = _arrays(log_densities)
    if ld.size == 0:
        raise DataError("nlpd of an empty set")
    bad = np.flatnonzero(~np.isfinite(ld))
    if bad.size:
        shown = ", ".join(str(i) for i in bad[:10]) + (" ..." if bad.size > 10 else "")
        raise DataError(f"non-finite log densities at indices {shown}")
    return float(-ld.mean())


def icp(y, lower, upper) -> float:
    """Fraction of truths inside their interval, both ends inclusive."""
    y, lo, hi = _arrays(y, lower, upper)
    if y.size == 0:
        raise DataError("icp of an empty set")
    return float(np.mean((lo <= y) & (y <= hi)))


def mil(lower, upper) -> float:
    lo, hi = _arrays(lower, upper)
    if lo.size == 0:
        raise DataError("mil of an empty set")
    return float(np.mean(hi - lo))


def rmil(y, yhat, lower, upper, eps: float = RMIL_EPS) -> float:
    """Interval length relative to the absolute error, the error floored at ``eps``."""
    y, yh, lo, hi = _arrays(y, yhat, lower, upper)
    if y.size == 0:
        raise DataError("rmil of an empty set")
    return float(np.mean((hi - lo) / np.maximum(np.abs(y - yh), eps)))


def point_errors(y, yhat) -> dict:
    """``mae``, ``rae`` (percent) and ``r2``; the latter two are None for constant truths."""
    y, yh = _arrays(y, yhat)
    if y.size == 0:
        raise DataError("point errors of an empty set")
    err = yh - y
    dev = y - y.mean()
    sad, ssd = float(np.sum(np.abs(dev))), float(np.sum(dev * dev))
    return {
        "mae": float(np.mean(np.abs(err))),
        "rae": 100.0 * float(np.sum(np.abs(err))) / sad if sad > 0 else None,
        "r2": 1.0 - float(np.sum(err * err)) / ssd if ssd > 0 else None,
    }


def day_period_mask(timestamps) -> np.ndarray:
    """True for wall-clock times in [07:00, 22:00)."""
    ts = np.asarray(timestamps, dtype="datetime64[m]")
    minutes = (ts - ts.astype("datetime64[D]")).astype(int)
    return (minutes >= DAY_START_MINUTES) & (minutes < DAY_END_MINUTES)


@dataclass(frozen=True)
class MetricsReport:
    subset: str
    count: int
    mae: float
    rae: Optional[float]
    r2: Optional[float]
    nlpd: Optional[float] = None
    icp: Optional[float] = None
    mil: Optional[float] = None
    rmil: Optional[float] = None

    def __post_init__(self):
        if self.count <= 0:
            raise DataError("a metrics report needs at least one point")
        if self.icp is not None and not 0.0 <= self.icp <= 1.0:
            raise DataError(f"icp {self.icp} outside [0, 1]")
        if self.mil is not None and self.mil < 0:
            raise DataError(f"negative mil {self.mil}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        return cls(**{k: d.get(k) for k in cls.__dataclass_fields__})


def evaluate(subset: str, y, yhat, y_std=None, yhat_std=None, lower_std=None,
             upper_std=None, log_density=None, eps: float = RMIL_EPS) -> MetricsReport:
    """Bundle every statistic for one subset.

    Point errors use ``y``/``yhat`` in data units. Density and interval
    statistics use the standardized quantities and are skipped when the
    method provides no predictive distribution (``log_density`` is None).
    """
    pe = point_errors(y, yhat)
    count = int(np.asarray(y).size)
    if log_density is None:
        return MetricsReport(subset, count, pe["mae"], pe["rae"], pe["r2"])
    return MetricsReport(
        subset, count, pe["mae"], pe["rae"], pe["r2"],
        nlpd=nlpd(log_density),
        icp=icp(y_std, lower_std, upper_std),
        mil=mil(lower_std, upper_std),
        rmil=rmil(y_std, yhat_std, lower_std, upper_std, eps),
    )


def is_better(a: Optional[float], b: Optional[float]) -> bool:
    """Lower-is-better comparison where None never wins."""
    if a is None or (isinstance(a, float) and math.isnan(a)):
        return False
    return b is None or a < b
