"""Experiment protocols: block imputation, rolling one-step forecasting, comparison.

Targets are standardized per block or per refit window before fitting. The
prediction files carry means, variances and interval bounds in km/h and the
log density in standardized units; NLPD, MIL and RMIL are computed in
standardized units, MAE/RAE/R2 in km/h.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import stats

from . import datasets as D
from . import features as F
from . import gp_exact as G
from . import kernels as K
from . import metrics as M
from . import vhgp as V
from .errors import ConfigurationError, DataError, HetGPError

logger = logging.getLogger(__name__)

MODELS = ("lin-interp", "gp", "hgp", "ssrc-hgp")
PROTOCOLS = ("impute", "forecast")
MIN_BLOCK_POINTS = 10
DEFAULT_KERNEL_F = K.format_kernel(K.default_time_kernel(noise=False))


@dataclass(frozen=True)
class RunConfig:
    model: str = "ssrc-hgp"
    models: tuple = ("gp", "hgp", "ssrc-hgp")
    protocol: str = "impute"
    kernel_f: str = DEFAULT_KERNEL_F
    kernel_g: str = ""              # empty: SE + white over the noise inputs
    gp_noise: float = 0.1           # initial white-noise variance of the exact GP
    lags: int = 2
    mask_fraction: float = 0.5
    block_days: float = 15.0
    window_days: float = 8.0
    refit_days: float = 5.0
    bootstrap_days: float = 15.0
    seed: int = 0
    gh_nodes: int = 30
    mc_samples: int = 10_000
    restarts: int = 3
    standardize: bool = True
    max_iters: int = 200
    tol: float = 1e-6
    step_iters: int = 0             # rho-only iterations between refits
    level: float = 0.95
    workers: int = 1
    output_dir: str = "output"

    def __post_init__(self):
        models = tuple(self.models) if not isinstance(self.models, str) else \
            tuple(m.strip() for m in self.models.split(",") if m.strip())
        object.__setattr__(self, "models", models)
        for m in (self.model,) + models:
            if m not in MODELS:
                raise ConfigurationError(f"unknown model {m!r}; choose from {', '.join(MODELS)}")
        if self.protocol not in PROTOCOLS:
            raise ConfigurationError(f"unknown protocol {self.protocol!r}")
        if not 0.0 < self.mask_fraction < 1.0:
            raise ConfigurationError("mask_fraction must lie in (0, 1)")
        for name in ("block_days", "window_days", "refit_days"):
            if getattr(self, name) < 1.0 / D.POINTS_PER_DAY:
                raise ConfigurationError(f"{name} must cover at least one time step")
        if self.bootstrap_days < 0:
            raise ConfigurationError("bootstrap_days must be non-negative")
        if self.lags < 1:
            raise ConfigurationError("lags must be at least 1")
        if self.gh_nodes < 1 or self.mc_samples < 2:
            raise ConfigurationError("need gh_nodes >= 1 and mc_samples >= 2")
        if self.restarts < 0 or self.max_iters < 1 or self.step_iters < 0 or self.workers < 1:
            raise ConfigurationError("restarts/step_iters must be >= 0, max_iters/workers >= 1")
        if not 0.0 < self.level < 1.0:
            raise ConfigurationError("level must lie in (0, 1)")
        if self.gp_noise <= 0:
            raise ConfigurationError("gp_noise must be positive")
        K.parse_kernel(self.kernel_f, 1)

    @classmethod
    def from_mapping(cls, values: dict) -> "RunConfig":
        """Build from string or typed values keyed by field name (dashes allowed)."""
        types = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            name = key.strip().replace("-", "_")
            if name not in types:
                raise ConfigurationError(f"unknown configuration key {key!r}")
            kwargs[name] = _coerce(name, types[name], raw)
        return cls(**kwargs)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["models"] = list(self.models)
        return d


def _coerce(name, typ, raw):
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    try:
        if typ in ("bool", bool):
            low = text.lower()
            if low not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
                raise ValueError(text)
            return low in ("1", "true", "yes", "on")
        if typ in ("int", int):
            return int(text)
        if typ in ("float", float):
            return float(text)
    except ValueError:
        raise ConfigurationError(f"bad value {raw!r} for {name}") from None
    return text


def read_config_file(path) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    out = {}
    for no, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{no}: expected key = value")
        k, v = line.split("=", 1)
        out[k.strip().replace("-", "_")] = v.strip()
    return out


# -- model adapters -----------------------------------------------------------

@dataclass(frozen=True)
class FitData:
    """One standardized training set; ``t`` in days from the set's start."""

    t: np.ndarray
    y: np.ndarray
    z: Optional[np.ndarray] = None


@dataclass(frozen=True)
class StdPrediction:
    """Predictions in standardized units; ``log_density`` is None for point methods."""

    mean: np.ndarray
    var: Optional[np.ndarray] = None
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    log_density: Optional[np.ndarray] = None


class LinearInterpolation:
    name = "lin-interp"
    needs_noise_inputs = False

    def fit(self, data: FitData, previous=None, offset: int = 0, seed: int = 0):
        return data

    def update(self, state, data: FitData, offset: int):
        return data

    def predict(self, state: FitData, t_star, z_star, y_star, seed) -> StdPrediction:
        return StdPrediction(np.interp(np.atleast_1d(t_star), state.t, state.y))


class ExactGP:
    name = "gp"
    needs_noise_inputs = False

    def __init__(self, config: RunConfig):
        self.config = config
        kf = K.parse_kernel(config.kernel_f, 1)
        self.kernel0 = kf if kf.has_white_noise() else kf + K.white(config.gp_noise)
        self.z_level = float(stats.norm.ppf(0.5 + config.level / 2.0))

    def fit(self, data: FitData, previous=None, offset: int = 0, seed: int = 0):
        kernel = previous.kernel if previous is not None else self.kernel0
        model, _ = G.fit(G.ExactGPModel(kernel, data.t, data.y), self.config.max_iters,
                         self.config.tol, restarts=self.config.restarts, seed=seed)
        return model

    def update(self, state: G.ExactGPModel, data: FitData, offset: int):
        t = K.as_inputs(data.t, 1)
        if t.shape == state.t.shape and np.array_equal(t, state.t):
            return state.with_targets(data.y)
        return G.ExactGPModel(state.kernel, t, data.y)

    def predict(self, state, t_star, z_star, y_star, seed) -> StdPrediction:
        pg = G.predict(state, t_star)
        half = self.z_level * np.sqrt(pg.variance)
        ld = None if y_star is None else pg.log_density(y_star)
        return StdPrediction(pg.mean, pg.variance, pg.mean - half, pg.mean + half, ld)


class Heteroscedastic:
    """Plain HGP (noise over time) or SSRC-HGP (noise over lagged deciles and speeds)."""

    def __init__(self, config: RunConfig, conditioned: bool):
        self.config = config
        self.conditioned = conditioned
        self.name = "ssrc-hgp" if conditioned else "hgp"
        self.needs_noise_inputs = conditioned
        self.dim = 2 * config.lags if conditioned else 1
        self.kernel_g = (K.parse_kernel(config.kernel_g, self.dim) if config.kernel_g
                         else K.default_noise_kernel(self.dim))
        self.gp = ExactGP(config)

    def _z(self, data: FitData):
        return data.z if self.conditioned else data.t

    def fit(self, data: FitData, previous=None, offset: int = 0, seed: int = 0):
        z = self._z(data)
        if previous is None:
            gm = self.gp.fit(data, seed=seed)
            model = V.initial_model(data.t, z, data.y, gm.kernel.without_white_noise(),
                                    self.kernel_g, gm.kernel.noise_variance())
        else:
            if isinstance(previous, V.SlidingPosterior):
                previous = previous.to_model()
            model = V.warm_start(previous, data.t, z, data.y, offset)
        fitted, res = V.fit(model, self.config.max_iters, self.config.tol)
        if res.aborted:
            logger.warning("%s fit aborted (%s); keeping the best point reached",
                           self.name, res.message)
        return fitted

    def update(self, state, data: FitData, offset: int):
        """Frozen hyperparameters on the moved window.

        By default the variational parameters ride along with their points
        (exact O(n^2) window update); ``step_iters > 0`` re-optimizes them.
        """
        if self.config.step_iters:
            base = state.to_model() if isinstance(state, V.SlidingPosterior) else state
            model = V.warm_start(base, data.t, self._z(data), data.y, offset)
            model, _ = V.fit(model, self.config.step_iters, self.config.tol,
                             optimize_hypers=False)
            return model
        if isinstance(state, V.VHGPModel):
            state = V.SlidingPosterior.from_model(state)
        return state.slide(data.t, self._z(data), data.y, offset)

    def predict(self, state, t_star, z_star, y_star, seed) -> StdPrediction:
        zs = z_star if self.conditioned else t_star
        lp = (state.predict_latent(t_star, zs) if isinstance(state, V.SlidingPosterior)
              else V.predict_latent(state, t_star, zs))
        mean, var = V.predict_moments(lp)
        lower, upper = V.predictive_interval(lp, self.config.level, self.config.mc_samples, seed)
        ld = None if y_star is None else V.predictive_log_density(lp, y_star,
                                                                  self.config.gh_nodes)
        return StdPrediction(mean, var, np.atleast_1d(lower), np.atleast_1d(upper), ld)


def make_model(name: str, config: RunConfig):
    if name == "lin-interp":
        return LinearInterpolation()
    if name == "gp":
        return ExactGP(config)
    if name in ("hgp", "ssrc-hgp"):
        return Heteroscedastic(config, conditioned=name == "ssrc-hgp")
    raise ConfigurationError(f"unknown model {name!r}")


# -- shared helpers --------------------------------------------------------------

def _std_params(config: RunConfig, values) -> F.StandardizationParams:
    if not config.standardize:
        return F.StandardizationParams(0.0, 1.0)
    return F.StandardizationParams.estimate(values)


def _noise_inputs(speed, decile, known, lags, params, extra: int = 0):
    """Lagged (decile, speed) inputs for each point, plus ``extra`` trailing rows.

    ``known`` flags the entries the model may see; the rest are filled by
    linear interpolation from those. A trailing row only uses earlier values.
    """
    dec_known = known & ~np.isnan(decile)
    dec = F.fill_missing_linear(np.where(dec_known, decile, np.nan), ~dec_known)
    spd = F.fill_missing_linear(np.where(known, speed, np.nan), ~known)
    if extra:
        dec = np.concatenate([dec, np.full(extra, dec[-1])])
        spd = np.concatenate([spd, np.full(extra, spd[-1])])
    return F.noise_inputs(dec, spd, lags, params)


def _row(ts, y_true, pred: StdPrediction, i, params, masked, y_std=None) -> dict:
    scale = params.scale
    row = {"timestamp": ts, "y_true": y_true, "masked": masked,
           "pred_mean": float(params.invert(pred.mean[i])), "mean_std": float(pred.mean[i]),
           "y_std": y_std}
    if pred.var is not None:
        row.update(pred_var=float(pred.var[i]) * scale**2,
                   lower95=float(params.invert(pred.lower[i])),
                   upper95=float(params.invert(pred.upper[i])),
                   lower_std=float(pred.lower[i]), upper_std=float(pred.upper[i]))
    if pred.log_density is not None and y_std is not None:
        row["log_density"] = float(pred.log_density[i])
    return row


@dataclass
class RunResult:
    model: str
    protocol: str
    rows: list
    reports: dict                   # subset -> MetricsReport
    info: dict = field(default_factory=dict)


def evaluate_rows(rows: list, has_density: bool) -> dict:
    """MetricsReport per subset ("all", "day") over masked rows with known truth."""
    scored = [r for r in rows if r["masked"] and r.get("y_true") is not None
              and not math.isnan(r["y_true"])]
    if not scored:
        raise DataError("no evaluable predictions (every target is unknown)")
    day = M.day_period_mask(np.array([r["timestamp"] for r in scored], dtype="datetime64[s]"))
    out = {}
    for subset, keep in (("all", np.ones(len(scored), bool)), ("day", day)):
        sel = [r for r, k in zip(scored, keep) if k]
        if not sel:
            logger.warning("subset %r is empty; no report", subset)
            continue
        col = lambda k: np.array([r[k] for r in sel], dtype=float)  # noqa: E731
        if has_density:
            out[subset] = M.evaluate(subset, col("y_true"), col("pred_mean"), col("y_std"),
                                     col("mean_std"), col("lower_std"), col("upper_std"),
                                     col("log_density"))
        else:
            out[subset] = M.evaluate(subset, col("y_true"), col("pred_mean"))
    return out


# -- imputation ---------------------------------------------------------------------

def _impute_block(args):
    config, name, block, block_no = args
    model = make_model(name, config)
    visible = block.visible
    n_vis = int(visible.sum())
    if n_vis < MIN_BLOCK_POINTS:
        logger.warning("block %d has %d observed points (< %d); skipped", block_no, n_vis,
                       MIN_BLOCK_POINTS)
        return None
    params = _std_params(config, block.speed[visible])
    t = np.arange(len(block)) / D.POINTS_PER_DAY
    y_std_all = params.apply(block.speed)
    z = None
    if model.needs_noise_inputs:
        z = _noise_inputs(block.speed, block.decile, visible, config.lags, params)
    tr = np.flatnonzero(visible)
    data = FitData(t[tr], y_std_all[tr], None if z is None else z[tr])
    state = model.fit(data, seed=config.seed + block_no)
    y_eval = np.where(block.observed, y_std_all, 0.0)
    seed = np.random.SeedSequence([config.seed, block_no])
    pred = model.predict(state, t, z, y_eval, seed)
    rows = []
    for i in range(len(block)):
        known = bool(block.observed[i])
        rows.append(_row(block.timestamps[i], float(block.speed[i]) if known else None,
                         pred, i, params, bool(block.experiment_mask[i]),
                         float(y_std_all[i]) if known else None))
    return rows


def run_imputation(config: RunConfig, series: D.SpeedSeries, model: Optional[str] = None,
                   masked: Optional[D.SpeedSeries] = None) -> RunResult:
    """Mask, split into blocks, fit each block on its visible points, predict everywhere.

    ``masked`` supplies an already-masked series (shared across models).
    """
    name = model or config.model
    masked = masked if masked is not None else D.mask_random(series, config.mask_fraction,
                                                             config.seed)
    blocks = D.split_blocks(masked, config.block_days)
    jobs = [(config, name, b, i) for i, b in enumerate(blocks)]
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_impute_block, jobs))
    else:
        results = [_impute_block(j) for j in jobs]
    rows = [r for res in results if res is not None for r in res]
    skipped = [i for i, res in enumerate(results) if res is None]
    info = {"blocks": len(blocks), "skipped_blocks": skipped,
            "masked_points": int(masked.experiment_mask.sum()),
            "masked_indices_digest": _digest(np.flatnonzero(masked.experiment_mask))}
    reports = evaluate_rows(rows, has_density=name != "lin-interp")
    return RunResult(name, "impute", rows, reports, info)


def _digest(idx) -> str:
    import hashlib
    return hashlib.sha256(np.asarray(idx, dtype=np.int64).tobytes()).hexdigest()[:16]


# -- forecasting --------------------------------------------------------------------

def forecast_schedule(n_points: int, config: RunConfig) -> dict:
    """Step range and refit steps of a rolling forecast over ``n_points``."""
    P = D.POINTS_PER_DAY
    boot = int(round(config.bootstrap_days * P))
    refit = max(1, int(round(config.refit_days * P)))
    if n_points <= boot + P:
        raise DataError(f"forecasting needs more than bootstrap + 1 day of data "
                        f"({boot + P} points), got {n_points}")
    steps = range(boot, n_points)
    return {"start": boot, "stop": n_points, "steps": len(steps),
            "refits": [s for s in steps if (s - boot) % refit == 0]}


def run_forecasting(config: RunConfig, series: D.SpeedSeries,
                    model: Optional[str] = None) -> RunResult:
    """One-step-ahead forecasts from a sliding window of the last ``window_days``.

    Only values strictly before the target index enter each prediction;
    missing values inside the window are filled causally. Hyperparameters
    (and the standardization) change only at refit steps.
    """
    name = model or config.model
    fitter = make_model(name, config)
    sched = forecast_schedule(len(series), config)
    P = D.POINTS_PER_DAY
    W = max(2, int(round(config.window_days * P)))
    refit_every = max(1, int(round(config.refit_days * P)))
    L = config.lags
    obs = series.observed
    state, params, prev_start = None, None, 0
    rows, refits, skipped = [], 0, 0
    for s in range(sched["start"], sched["stop"]):
        start = max(0, s - W)
        win_obs = obs[start:s]
        if not win_obs.any():
            logger.warning("step %d: window has no observed targets; skipped", s)
            skipped += 1
            continue
        refit = state is None or (s - sched["start"]) % refit_every == 0
        if refit:
            params = _std_params(config, series.speed[start:s][win_obs])
        y = params.apply(F.fill_missing_linear(np.where(win_obs, series.speed[start:s], np.nan),
                                               ~win_obs))
        t = np.arange(s - start) / P
        z = z_star = None
        if fitter.needs_noise_inputs:
            a = max(0, start - L)
            zz = _noise_inputs(series.speed[a:s], series.decile[a:s], obs[a:s], L, params,
                               extra=1)[start - a:]
            z, z_star = zz[:-1], zz[-1:]
        data = FitData(t, y, z)
        if refit:
            state = fitter.fit(data, previous=state, offset=start - prev_start,
                               seed=config.seed + refits)
            refits += 1
        else:
            state = fitter.update(state, data, start - prev_start)
        prev_start = start
        known = bool(obs[s])
        y_std = float(params.apply(series.speed[s])) if known else None
        pred = fitter.predict(state, np.array([(s - start) / P]), z_star,
                              None if y_std is None else np.array([y_std]),
                              np.random.SeedSequence([config.seed, s]))
        rows.append(_row(series.timestamps[s], float(series.speed[s]) if known else None,
                         pred, 0, params, True, y_std))
    info = {"steps": sched["steps"], "predictions": len(rows), "skipped_steps": skipped,
            "refits": refits}
    reports = evaluate_rows(rows, has_density=name != "lin-interp")
    return RunResult(name, "forecast", rows, reports, info)


def run_protocol(config: RunConfig, series: D.SpeedSeries, model: Optional[str] = None,
                 masked: Optional[D.SpeedSeries] = None) -> RunResult:
    if config.protocol == "impute":
        return run_imputation(config, series, model, masked)
    return run_forecasting(config, series, model)


# -- outputs ------------------------------------------------------------------------

def _json_dump(obj, path: Path):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_outputs(result: RunResult, output_dir) -> list:
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [D.write_predictions_csv(out / f"predictions_{result.model}.csv", result.rows)]
    for subset, rep in result.reports.items():
        p = out / f"metrics_{result.model}_{subset}.json"
        _json_dump({"model": result.model, "protocol": result.protocol, **rep.to_dict()}, p)
        paths.append(p)
    return paths


METRIC_COLUMNS = ("nlpd", "icp", "mil", "rmil", "mae", "rae", "r2")


def compare_models(config: RunConfig, series: D.SpeedSeries, models=None) -> dict:
    """Run each model under identical masks/windows/seeds and tabulate the metrics.

    A model that fails is recorded with its error and the others continue.
    """
    models = list(models if models is not None else config.models)
    if len(models) < 2:
        raise ConfigurationError("compare needs at least two models")
    masked = None
    if config.protocol == "impute":
        masked = D.mask_random(series, config.mask_fraction, config.seed)
    out_dir = Path(config.output_dir)
    entries, digests = [], set()
    for name in models:
        try:
            res = run_protocol(config, series, name, masked)
        except HetGPError as exc:
            logger.error("model %s failed: %s", name, exc)
            entries.append({"model": name, "error": f"{exc.kind}: {exc}"})
            continue
        write_outputs(res, out_dir)
        digests.add(_digest([i for i, r in enumerate(res.rows) if r["masked"]])
                    + res.info.get("masked_indices_digest", ""))
        entries.append({"model": name, "info": res.info,
                        "metrics": {k: v.to_dict() for k, v in res.reports.items()}})
    ok = [e for e in entries if "metrics" in e]
    if len(digests) > 1:
        raise DataError("models were evaluated on different masked point sets")
    best = {}
    for subset in ("all", "day"):
        best[subset] = {}
        for metric in ("nlpd", "mae"):
            winner = None
            for i, e in enumerate(ok):
                v = e["metrics"].get(subset, {}).get(metric)
                if M.is_better(v, None if winner is None else
                               ok[winner]["metrics"][subset][metric]):
                    winner = i
            best[subset][metric] = None if winner is None else ok[winner]["model"]
    table = {"protocol": config.protocol, "seed": config.seed, "models": entries, "best": best}
    out_dir.mkdir(parents=True, exist_ok=True)
    _json_dump(table, out_dir / "comparison.json")
    (out_dir / "comparison.txt").write_text(format_comparison(table))
    return table


def format_comparison(table: dict) -> str:
    """Aligned text table; ``*`` marks the best NLPD / MAE of each subset."""
    header = ["model", "subset"] + list(METRIC_COLUMNS)
    lines = []
    for e in table["models"]:
        if "error" in e:
            lines.append([e["model"], "-", "failed: " + e["error"]] + [""] * 6)
            continue
        for subset, rep in e["metrics"].items():
            cells = [e["model"], subset]
            for m in METRIC_COLUMNS:
                v = rep.get(m)
                cell = "-" if v is None else f"{v:.4f}"
                if m in ("nlpd", "mae") and table["best"].get(subset, {}).get(m) == e["model"]:
                    cell += "*"
                cells.append(cell)
            lines.append(cells)
    widths = [max(len(str(r[i])) for r in [header] + lines) for i in range(len(header))]
    fmt = lambda r: "  ".join(str(c).ljust(w) for c, w in zip(r, widths)).rstrip()  # noqa: E731
    return "\n".join([fmt(header), fmt(["-" * w for w in widths])] + [fmt(r) for r in lines]) + "\n"


# -- plotting -------------------------------------------------------------------------

def emit_plot(predictions_path, output_path, start=None, end=None, title: str = "") -> Path:
    """Truths as markers, mean as a line, the 95% interval as a band, to an SVG file.

    ``start``/``end`` bound the window (``end`` exclusive); rendering is
    byte-for-byte reproducible.
    """
    import matplotlib
    matplotlib.use("Agg")
    from matplotlib import pyplot as plt

    cols = D.read_predictions_csv(predictions_path)
    ts = cols["timestamp"]
    keep = np.ones(ts.size, bool)
    if start is not None:
        keep &= ts >= np.datetime64(start, "s")
    if end is not None:
        keep &= ts < np.datetime64(end, "s")
    if not keep.any():
        raise DataError("plot window contains no predictions")
    x = (ts[keep] - ts[keep][0]).astype(float) / 3600.0
    mean, lo, hi, y = (cols[k][keep] for k in ("pred_mean", "lower95", "upper95", "y_true"))
    with matplotlib.rc_context({"svg.hashsalt": "hetgp", "svg.fonttype": "none",
                                "path.simplify": False}):
        fig, ax = plt.subplots(figsize=(10, 3.5))
        band = np.isfinite(lo) & np.isfinite(hi)
        if band.any():
            ax.fill_between(x, lo, hi, where=band, color="0.8", lw=0, gid="pred-band")
        ax.plot(x, mean, color="k", lw=1.0, gid="pred-mean")
        truth = np.isfinite(y)
        ax.plot(x[truth], y[truth], ".", ms=2.5, color="tab:red", gid="truth")
        ax.set_xlabel(f"hours from {D.format_timestamp(ts[keep][0])}")
        ax.set_ylabel("speed (km/h)")
        if title:
            ax.set_title(title)
        fig.tight_layout()
        output_path = Path(output_path)
        fig.savefig(output_path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return output_path
