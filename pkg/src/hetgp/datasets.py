"""Speed-series I/O, experiment masks and blocks, synthetic data, decile analysis."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from datetime import datetime
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .errors import DataError

STEP_MINUTES = 5
POINTS_PER_DAY = 24 * 60 // STEP_MINUTES
STEP = np.timedelta64(STEP_MINUTES, "m")

SERIES_HEADER = ["timestamp", "place_id", "speed_kmh", "sample_size_decile"]
PREDICTION_HEADER = ["timestamp", "y_true", "pred_mean", "pred_var", "lower95", "upper95",
                     "log_density", "masked"]
TRUTH_HEADER = ["timestamp", "f_true", "noise_sd_true"]


@dataclass(frozen=True)
class SpeedSeries:
    """A regular 5-minute speed series for one place.

    ``missing`` marks points absent from the source data; ``experiment_mask``
    marks observed points hidden from the models for evaluation.
    """

    place_id: str
    timestamps: np.ndarray
    speed: np.ndarray
    decile: np.ndarray
    missing: Optional[np.ndarray] = None
    experiment_mask: Optional[np.ndarray] = None

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype="datetime64[s]")
        speed = np.asarray(self.speed, dtype=float)
        decile = np.asarray(self.decile, dtype=float)
        n = ts.shape[0]
        if speed.shape != (n,) or decile.shape != (n,):
            raise DataError("timestamps, speeds and deciles must have equal length")
        if n > 1:
            steps = np.diff(ts)
            if np.any(steps <= np.timedelta64(0, "s")):
                raise DataError("timestamps must be strictly increasing")
            if np.any(steps != STEP):
                raise DataError("timestamps must lie on a regular 5-minute grid")
        missing = (np.isnan(speed) | np.isnan(decile)) if self.missing is None \
            else np.asarray(self.missing, dtype=bool)
        if np.any(~missing & np.isnan(speed)):
            raise DataError("observed points need a speed value")
        present = ~np.isnan(decile)
        if np.any((decile[present] < 1) | (decile[present] > 10)
                  | (decile[present] != np.round(decile[present]))):
            raise DataError("sample-size deciles must be integers in 1..10")
        mask = np.zeros(n, dtype=bool) if self.experiment_mask is None \
            else np.asarray(self.experiment_mask, dtype=bool)
        if mask.shape != (n,):
            raise DataError("experiment mask has the wrong length")
        if np.any(mask & missing):
            raise DataError("experiment mask may not cover originally-missing points")
        for name, value in (("timestamps", ts), ("speed", speed), ("decile", decile),
                            ("missing", missing), ("experiment_mask", mask)):
            object.__setattr__(self, name, value)

    def __len__(self) -> int:
        return self.timestamps.shape[0]

    @property
    def observed(self) -> np.ndarray:
        return ~self.missing

    @property
    def visible(self) -> np.ndarray:
        """Points a model may train on: observed and not hidden by the experiment."""
        return ~self.missing & ~self.experiment_mask

    def days(self) -> np.ndarray:
        """Time in fractional days since the first timestamp."""
        return np.arange(len(self), dtype=float) / POINTS_PER_DAY

    def slice(self, start: int, stop: int) -> "SpeedSeries":
        return SpeedSeries(self.place_id, self.timestamps[start:stop], self.speed[start:stop],
                           self.decile[start:stop], self.missing[start:stop],
                           self.experiment_mask[start:stop])

    def with_mask(self, mask) -> "SpeedSeries":
        return replace(self, experiment_mask=np.asarray(mask, dtype=bool))


def format_timestamp(ts) -> str:
    return str(np.datetime64(ts, "s"))


def _parse_timestamp(text: str) -> np.datetime64:
    dt = datetime.fromisoformat(text.strip())
    return np.datetime64(dt.replace(tzinfo=None), "s")


def read_csv(path, place_id: Optional[str] = None) -> SpeedSeries:
    """Parse a ``timestamp,place_id,speed_kmh,sample_size_decile`` file.

    Empty speed or decile fields mark a point as originally missing. Files
    holding several places need ``place_id``.
    """
    path = Path(path)
    stamps, speeds, deciles, places = [], [], [], []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != SERIES_HEADER:
            raise DataError(f"{path}: header must be {','.join(SERIES_HEADER)}")
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != 4:
                raise DataError(f"{path}:{line}: expected 4 fields, got {len(row)}")
            if place_id is not None and row[1].strip() != place_id:
                continue
            try:
                ts = _parse_timestamp(row[0])
                sp = float(row[2]) if row[2].strip() else math.nan
                de = float(row[3]) if row[3].strip() else math.nan
            except ValueError as exc:
                raise DataError(f"{path}:{line}: {exc}") from exc
            if (row[2].strip() and not math.isfinite(sp)) or (row[3].strip() and not math.isfinite(de)):
                raise DataError(f"{path}:{line}: non-finite value")
            if not math.isnan(de) and (de != round(de) or not 1 <= de <= 10):
                raise DataError(f"{path}:{line}: decile {row[3]!r} not an integer in 1..10")
            if stamps:
                step = ts - stamps[-1]
                if step <= np.timedelta64(0, "s"):
                    raise DataError(f"{path}:{line}: timestamp {row[0]} is not after the "
                                    "previous row (duplicate or out of order)")
                if step != STEP:
                    raise DataError(
                        f"{path}:{line}: step of {step.astype(int) // 60} min; the series must be "
                        "on a regular 5-minute grid (insert rows with empty fields for gaps)")
            stamps.append(ts)
            speeds.append(sp)
            deciles.append(de)
            places.append(row[1].strip())
    if not stamps:
        raise DataError(f"{path}: no data rows" + (f" for place {place_id}" if place_id else ""))
    if len(set(places)) > 1:
        raise DataError(f"{path}: several place ids {sorted(set(places))}; select one")
    return SpeedSeries(places[0], np.array(stamps), np.array(speeds), np.array(deciles))


def _fmt(v) -> str:
    if v is None:
        return ""
    v = float(v)
    return "" if math.isnan(v) else repr(v)


def write_csv(path, series: SpeedSeries) -> Path:
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SERIES_HEADER)
            for i in range(len(series)):
                d = series.decile[i]
                w.writerow([format_timestamp(series.timestamps[i]), series.place_id,
                            "" if series.missing[i] else _fmt(series.speed[i]),
                            "" if series.missing[i] or math.isnan(d) else str(int(d))])
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc}") from exc
    return path


def write_predictions_csv(path, rows: Iterable[dict]) -> Path:
    """Rows are dicts keyed by the prediction header; missing keys stay empty."""
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(PREDICTION_HEADER)
            for r in rows:
                w.writerow([format_timestamp(r["timestamp"])]
                           + [_fmt(r.get(k)) for k in PREDICTION_HEADER[1:-1]]
                           + [str(int(bool(r.get("masked", 0))))])
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc}") from exc
    return path


def read_predictions_csv(path) -> dict:
    """Column arrays (NaN for empty fields) from a predictions file."""
    path = Path(path)
    cols = {k: [] for k in PREDICTION_HEADER}
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != PREDICTION_HEADER:
            raise DataError(f"{path}: not a predictions file")
        for row in reader:
            cols["timestamp"].append(_parse_timestamp(row[0]))
            for k, v in zip(PREDICTION_HEADER[1:-1], row[1:-1]):
                cols[k].append(float(v) if v else math.nan)
            cols["masked"].append(row[-1] == "1")
    out = {k: np.array(v, dtype=float) for k, v in cols.items()
           if k not in ("timestamp", "masked")}
    out["timestamp"] = np.array(cols["timestamp"], dtype="datetime64[s]")
    out["masked"] = np.array(cols["masked"], dtype=bool)
    return out


def write_truth_csv(path, timestamps, f_true, noise_sd) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRUTH_HEADER)
        for ts, f, s in zip(timestamps, f_true, noise_sd):
            w.writerow([format_timestamp(ts), _fmt(f), _fmt(s)])
    return path


# -- experiment protocol helpers ---------------------------------------------

def mask_random(series: SpeedSeries, fraction: float, seed: int) -> SpeedSeries:
    """Hide ``round(fraction * n_observed)`` observed points chosen uniformly."""
    if not 0.0 < fraction < 1.0:
        raise DataError("mask fraction must lie in (0, 1)")
    obs = np.flatnonzero(series.observed)
    k = int(math.floor(fraction * obs.size + 0.5))
    if obs.size - k < 2:
        raise DataError(f"masking {k} of {obs.size} observed points leaves fewer than 2")
    rng = np.random.default_rng(seed)
    chosen = rng.choice(obs, size=k, replace=False)
    mask = np.zeros(len(series), dtype=bool)
    mask[chosen] = True
    return series.with_mask(mask)


def block_ranges(n: int, block_days: float) -> list:
    if block_days <= 0:
        raise DataError("block length must be positive")
    size = max(1, int(round(block_days * POINTS_PER_DAY)))
    return [(i, min(i + size, n)) for i in range(0, n, size)]


def split_blocks(series: SpeedSeries, block_days: float) -> list:
    return [series.slice(a, b) for a, b in block_ranges(len(series), block_days)]


# -- synthetic data ------------------------------------------------------------

THREE_REGIMES = (8.0, 8.0, 8.0, 2.5, 2.5, 2.5, 2.5, 0.8, 0.8, 0.8)


@dataclass(frozen=True)
class SyntheticSpec:
    """Generator settings. Noise sds are indexed by decile (entry 0 = decile 1).

    Deciles come from a latent flow: a time-of-day profile peaking in the
    afternoon plus a persistent AR(1) excursion, cut at its own deciles.
    """

    days: float = 30.0
    seed: int = 0
    start: str = "2015-01-05T00:00:00"
    place_id: str = "synthetic"
    mean_speed: float = 70.0
    se_amplitude: float = 6.0
    se_lengthscale: float = 0.05
    periodic_amplitude: float = 10.0
    periodic_lengthscale: float = 0.5
    period: float = 7.0
    noise_sd: tuple = THREE_REGIMES
    flow_daily_amplitude: float = 1.5
    flow_persistence: float = 0.97
    missing_fraction: float = 0.01

    def __post_init__(self):
        if self.days < 1:
            raise DataError("synthetic series must span at least one day")
        if len(self.noise_sd) != 10 or any(s < 0 for s in self.noise_sd):
            raise DataError("noise_sd needs ten non-negative values, one per decile")
        if not 0 <= self.flow_persistence < 1:
            raise DataError("flow persistence must lie in [0, 1)")


@dataclass(frozen=True)
class SyntheticTruth:
    f_true: np.ndarray
    noise_sd: np.ndarray
    flow: np.ndarray = field(repr=False)


def _circulant_draw(first_row: np.ndarray, rng) -> np.ndarray:
    lam = np.fft.fft(first_row).real
    lam = np.clip(lam, 0.0, None)
    m = first_row.size
    z = rng.standard_normal(m) + 1j * rng.standard_normal(m)
    return np.fft.fft(np.sqrt(lam / m) * z).real


def _draw_se(n: int, amplitude: float, lengthscale: float, rng) -> np.ndarray:
    lags = np.arange(n) / POINTS_PER_DAY
    c = amplitude**2 * np.exp(-0.5 * (lags / lengthscale) ** 2)
    row = np.concatenate([c, c[-2:0:-1]]) if n > 2 else c
    return _circulant_draw(row, rng)[:n]


def _draw_periodic(n: int, amplitude: float, lengthscale: float, period: float, rng) -> np.ndarray:
    m = int(round(period * POINTS_PER_DAY))
    lags = np.arange(m) / POINTS_PER_DAY
    c = amplitude**2 * np.exp(-0.5 * np.sin(np.pi * lags / period) ** 2 / lengthscale**2)
    one = _circulant_draw(c, rng)
    return one[np.arange(n) % m]


def generate_synthetic(spec: SyntheticSpec):
    """Returns ``(series, truth)``; the truth never enters the series itself."""
    rng = np.random.default_rng(spec.seed)
    n = int(round(spec.days * POINTS_PER_DAY))
    f = (spec.mean_speed + _draw_se(n, spec.se_amplitude, spec.se_lengthscale, rng)
         + _draw_periodic(n, spec.periodic_amplitude, spec.periodic_lengthscale, spec.period, rng))

    hours = (np.arange(n) % POINTS_PER_DAY) * STEP_MINUTES / 60.0
    profile = spec.flow_daily_amplitude * np.cos(2 * np.pi * (hours - 14.0) / 24.0)
    phi = spec.flow_persistence
    eps = rng.standard_normal(n) * math.sqrt(1 - phi**2)
    u = np.empty(n)
    u[0] = rng.standard_normal()
    for i in range(1, n):
        u[i] = phi * u[i - 1] + eps[i]
    flow = profile + u
    ranks = np.argsort(np.argsort(flow, kind="stable"), kind="stable")
    decile = np.minimum(10, ranks * 10 // n + 1).astype(float)

    sd = np.asarray(spec.noise_sd, dtype=float)[decile.astype(int) - 1]
    y = f + sd * rng.standard_normal(n)

    missing = rng.random(n) < spec.missing_fraction
    speed = np.where(missing, np.nan, y)
    dec = np.where(missing, np.nan, decile)
    start = np.datetime64(spec.start, "s")
    ts = start + np.arange(n) * STEP
    series = SpeedSeries(spec.place_id, ts, speed, dec, missing)
    return series, SyntheticTruth(f, sd, flow)


# -- decile vs spread analysis ----------------------------------------------

def decile_noise_profile(series: SpeedSeries) -> dict:
    """Speed spread per sample-size decile and its correlation with the decile."""
    obs = series.observed & ~np.isnan(series.decile)
    rows = []
    for d in range(1, 11):
        v = series.speed[obs & (series.decile == d)]
        if v.size >= 2:
            rows.append({"decile": d, "count": int(v.size), "mean_speed": float(v.mean()),
                         "speed_sd": float(v.std(ddof=1))})
    if len(rows) < 2:
        raise DataError("need at least two deciles with two or more observations each")
    levels = np.array([r["decile"] for r in rows], dtype=float)
    sds = np.array([r["speed_sd"] for r in rows])
    corr = float(np.corrcoef(levels, sds)[0, 1])
    return {"place_id": series.place_id, "deciles": rows, "correlation": corr}
