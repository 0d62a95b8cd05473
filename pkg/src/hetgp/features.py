"""Noise-process inputs: gap filling, lagged features and standardization."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DataError

logger = logging.getLogger(__name__)

DECILE_MIN, DECILE_MAX = 1.0, 10.0


def fill_missing_linear(values, missing=None) -> np.ndarray:
    """Linear interpolation across interior gaps, nearest value at the edges.

    ``missing`` defaults to the NaN positions of ``values``. Observed values
    are returned unchanged.
    """
    values = np.asarray(values, dtype=float)
    missing = np.isnan(values) if missing is None else np.asarray(missing, dtype=bool)
    observed = ~missing
    if not observed.any():
        raise DataError("cannot fill a sequence with no observed values")
    out = values.copy()
    if missing.any():
        idx = np.arange(values.size)
        out[missing] = np.interp(idx[missing], idx[observed], values[observed])
    return out


def build_lagged_inputs(x, y, lags: int) -> np.ndarray:
    """Rows ``z_t = (x_{t-1..t-L}, y_{t-1..t-L})`` for ``t = L .. T-1``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise DataError("lag sources must be equal-length 1-d sequences")
    T = x.size
    if lags < 1:
        raise DataError("lag order must be at least 1")
    if T <= lags:
        raise DataError(f"need more than {lags} time steps to build lag-{lags} inputs, got {T}")
    cols = [x[lags - k:T - k] for k in range(1, lags + 1)]
    cols += [y[lags - k:T - k] for k in range(1, lags + 1)]
    return np.column_stack(cols)


def padded_lagged_inputs(x, y, lags: int) -> np.ndarray:
    """Like :func:`build_lagged_inputs` but one row per time step.

    The first ``lags`` rows repeat the first value backwards in time.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xp = np.concatenate([np.full(lags, x[0]), x])
    yp = np.concatenate([np.full(lags, y[0]), y])
    return build_lagged_inputs(xp, yp, lags)


@dataclass(frozen=True)
class StandardizationParams:
    shift: float
    scale: float

    def __post_init__(self):
        if not self.scale > 0:
            raise DataError("standardization scale must be positive")

    @classmethod
    def estimate(cls, values, min_scale: float = 1e-8) -> "StandardizationParams":
        values = np.asarray(values, dtype=float)
        values = values[np.isfinite(values)]
        if values.size == 0:
            raise DataError("cannot estimate standardization from no values")
        mean = float(values.mean())
        sd = float(values.std())
        if sd < min_scale:
            logger.warning("near-constant values (sd=%.3g); using scale 1", sd)
            sd = 1.0
        return cls(mean, sd)

    def apply(self, values):
        return (np.asarray(values, dtype=float) - self.shift) / self.scale

    def invert(self, values):
        return np.asarray(values, dtype=float) * self.scale + self.shift


DECILE_MAP = StandardizationParams(DECILE_MIN, DECILE_MAX - DECILE_MIN)


def standardize(values, params: StandardizationParams):
    return params.apply(values)


def destandardize(values, params: StandardizationParams):
    return params.invert(values)


def noise_inputs(decile_filled, speed_filled, lags: int, speed_params: StandardizationParams):
    """Padded SSRC inputs with deciles mapped to [0, 1] and speeds standardized."""
    return padded_lagged_inputs(DECILE_MAP.apply(decile_filled), speed_params.apply(speed_filled),
                                lags)
