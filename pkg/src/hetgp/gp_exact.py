"""Homoscedastic GP regression with a white-noise term in the kernel."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels as K
from .errors import DataError
from .numerics import (OptimizerResult, PsdFactorization, cholesky_jittered, inverse_psd,
                       maximize, solve_lower, solve_psd)

LOG_2PI = math.log(2.0 * math.pi)
VARIANCE_FLOOR = 1e-12
LOG_BOUNDS = (-12.0, 12.0)


@dataclass(frozen=True)
class PredictiveGaussian:
    mean: np.ndarray
    variance: np.ndarray

    def log_density(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return -0.5 * (LOG_2PI + np.log(self.variance) + (y - self.mean) ** 2 / self.variance)


@dataclass(frozen=True)
class ExactGPModel:
    """Training data plus kernel; the factorization of V = K + noise is cached.

    Changing hyperparameters means building a new model (:meth:`with_kernel`).
    """

    kernel: K.KernelSpec
    t: np.ndarray
    y: np.ndarray
    geom: Optional[K.Geometry] = field(default=None, repr=False, compare=False)
    factor: PsdFactorization = field(init=False, repr=False)
    alpha: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        t = K.as_inputs(self.t, self.kernel.input_dim)
        y = np.asarray(self.y, dtype=float).ravel()
        if t.shape[0] == 0:
            t = np.zeros((0, self.kernel.input_dim))
        if t.shape[0] != y.shape[0]:
            raise DataError(f"{t.shape[0]} inputs but {y.shape[0]} targets")
        if not np.all(np.isfinite(y)):
            raise DataError("training targets must be finite")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "y", y)
        if self.geom is None or self.geom.X is not t:
            object.__setattr__(self, "geom", K.Geometry(t, self.kernel.input_dim))
        F = cholesky_jittered(K.gram(self.kernel, self.geom))
        object.__setattr__(self, "factor", F)
        object.__setattr__(self, "alpha", solve_psd(F, y))

    @property
    def n(self) -> int:
        return self.y.shape[0]

    def with_kernel(self, kernel: K.KernelSpec) -> "ExactGPModel":
        return ExactGPModel(kernel, self.t, self.y, self.geom)

    def with_targets(self, y) -> "ExactGPModel":
        """Same inputs and kernel, new targets; reuses the factorization."""
        y = np.asarray(y, dtype=float).ravel()
        if y.shape[0] != self.n or not np.all(np.isfinite(y)):
            raise DataError("replacement targets must be finite and match the inputs")
        new = object.__new__(ExactGPModel)
        for name, value in (("kernel", self.kernel), ("t", self.t), ("y", y), ("geom", self.geom),
                            ("factor", self.factor), ("alpha", solve_psd(self.factor, y))):
            object.__setattr__(new, name, value)
        return new


def log_marginal_likelihood(model: ExactGPModel, gradient: bool = False):
    """log N(y | 0, V) and optionally its gradient w.r.t. the log-hyperparameters."""
    if model.n == 0:
        raise DataError("log marginal likelihood needs at least one training point")
    F, a = model.factor, model.alpha
    value = -0.5 * float(model.y @ a) - 0.5 * F.logdet - 0.5 * model.n * LOG_2PI
    if not gradient:
        return value
    W = np.outer(a, a) - inverse_psd(F)
    grad = 0.5 * K.weighted_gradient_sums(model.kernel, model.geom, W)
    return value, grad


def objective(model: ExactGPModel):
    """theta -> (log marginal likelihood, gradient) over ``model``'s data."""
    def f(theta):
        return log_marginal_likelihood(model.with_kernel(model.kernel.with_params(theta)), True)
    return f


def fit(model: ExactGPModel, max_iters: int = 200, tol: float = 1e-6, restarts: int = 0,
        seed: int = 0, perturbation: float = 0.5):
    """Maximize the log marginal likelihood; returns ``(fitted_model, OptimizerResult)``.

    With ``restarts > 0`` additional runs start from the initial point plus
    Gaussian noise of scale ``perturbation`` (log units); the best is kept.
    """
    theta0 = model.kernel.params()
    bounds = [LOG_BOUNDS] * theta0.size
    f = objective(model)
    best: Optional[OptimizerResult] = None
    rng = np.random.default_rng(seed)
    starts = [theta0] + [np.clip(theta0 + perturbation * rng.standard_normal(theta0.size),
                                 *LOG_BOUNDS) for _ in range(restarts)]
    for start in starts:
        try:
            res = maximize(f, start, max_iters=max_iters, tol=tol, bounds=bounds)
        except Exception:
            if best is None and start is starts[-1]:
                raise
            continue
        if best is None or res.fun > best.fun:
            best = res
    return model.with_kernel(model.kernel.with_params(best.x)), best


def predict(model: ExactGPModel, t_star) -> PredictiveGaussian:
    """Predictive distribution of a new noisy observation at each test input."""
    ts = K.as_inputs(t_star, model.kernel.input_dim)
    prior = K.kdiag(model.kernel, ts)
    if model.n == 0:
        return PredictiveGaussian(np.zeros(ts.shape[0]), prior)
    Ks = K.cross(model.kernel, model.t, ts)
    mean = Ks.T @ model.alpha
    v = solve_lower(model.factor, Ks)
    var = np.maximum(prior - np.sum(v * v, axis=0), VARIANCE_FLOOR)
    return PredictiveGaussian(mean, var)


def sample_prior(spec: K.KernelSpec, inputs, seed: int = 0, size: Optional[int] = None):
    """Draw(s) from N(0, K + jitter I); deterministic per seed."""
    X = K.as_inputs(inputs, spec.input_dim)
    F = cholesky_jittered(K.gram(spec, X))
    rng = np.random.default_rng(seed)
    shape = (X.shape[0],) if size is None else (X.shape[0], size)
    draws = F.L @ rng.standard_normal(shape)
    return draws
