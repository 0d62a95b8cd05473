"""PSD linear algebra and the gradient-based maximizer shared by the models."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import linalg, optimize

from .errors import NumericalError

logger = logging.getLogger(__name__)

JITTER_SCALE = 1e-6
JITTER_RETRIES = 8


@dataclass(frozen=True)
class PsdFactorization:
    """Lower Cholesky factor of ``M + jitter * I``."""

    L: np.ndarray
    jitter: float
    logdet: float

    @property
    def n(self) -> int:
        return self.L.shape[0]


def cholesky_jittered(M) -> PsdFactorization:
    """Cholesky with escalating diagonal jitter.

    The matrix is first factorized as is. On failure the jitter starts at
    ``1e-6 * mean(diag(M))`` and doubles up to eight times.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise NumericalError(f"expected a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise NumericalError("matrix has non-finite entries")
    n = M.shape[0]
    if n == 0:
        return PsdFactorization(np.zeros((0, 0)), 0.0, 0.0)
    scale = float(np.mean(np.diag(M)))
    base = JITTER_SCALE * (scale if scale > 0 else 1.0)
    jitter = 0.0
    for attempt in range(JITTER_RETRIES + 2):
        A = M if jitter == 0.0 else M + jitter * np.eye(n)
        L, info = linalg.lapack.dpotrf(A, lower=1, clean=1, overwrite_a=0)
        if info == 0:
            if jitter > 0:
                logger.debug("cholesky needed jitter %.3g", jitter)
            return PsdFactorization(L, jitter, 2.0 * float(np.sum(np.log(np.diag(L)))))
        jitter = base if attempt == 0 else 2.0 * jitter
    d = np.diag(M)
    raise NumericalError(
        f"matrix not positive definite after jitter {jitter / 2:.3g} "
        f"(n={n}, diag range [{d.min():.3g}, {d.max():.3g}])")


def solve_psd(F: PsdFactorization, b) -> np.ndarray:
    b = np.asarray(b, dtype=float)
    if b.shape[0] != F.n:
        raise NumericalError(f"rhs has {b.shape[0]} rows, factorization is {F.n}x{F.n}")
    if F.n == 0:
        return b.copy()
    return linalg.cho_solve((F.L, True), b, check_finite=False)


def solve_lower(F: PsdFactorization, b) -> np.ndarray:
    """L^{-1} b."""
    return linalg.solve_triangular(F.L, b, lower=True, check_finite=False)


def inverse_psd(F: PsdFactorization) -> np.ndarray:
    """Full inverse of the jittered matrix from its factor."""
    if F.n == 0:
        return np.zeros((0, 0))
    inv, info = linalg.lapack.dpotri(F.L, lower=1)
    if info != 0:
        raise NumericalError(f"dpotri failed with info={info}")
    inv = np.tril(inv)
    return inv + np.tril(inv, -1).T


@dataclass
class OptimizerResult:
    x: np.ndarray
    fun: float
    n_iter: int
    converged: bool
    trace: list = field(default_factory=list)
    aborted: bool = False
    message: str = ""


class _NonFinite(Exception):
    pass


def maximize(objective: Callable, theta0, max_iters: int = 200, tol: float = 1e-6,
             bounds: Optional[list] = None) -> OptimizerResult:
    """Quasi-Newton ascent (L-BFGS-B with line search) on ``objective``.

    ``objective(theta)`` returns ``(value, gradient)``. Iteration stops when
    the relative improvement per step drops below ``tol`` or after
    ``max_iters`` iterations. A non-finite value or gradient aborts the run;
    the best point seen so far is returned with ``aborted=True``.
    """
    theta0 = np.asarray(theta0, dtype=float).copy()
    f0, g0 = objective(theta0)
    if not np.isfinite(f0) or not np.all(np.isfinite(g0)):
        raise NumericalError("objective is not finite at the starting point")
    best = {"x": theta0.copy(), "f": float(f0)}
    last = {"x": theta0.copy(), "f": float(f0), "g": np.asarray(g0, dtype=float)}
    trace = [float(f0)]

    def neg(theta):
        if np.array_equal(theta, last["x"]):
            return -last["f"], -last["g"]
        f, g = objective(theta)
        g = np.asarray(g, dtype=float)
        if not np.isfinite(f) or not np.all(np.isfinite(g)):
            raise _NonFinite(f"objective non-finite at step {len(trace)}")
        last.update(x=theta.copy(), f=float(f), g=g)
        if f > best["f"]:
            best.update(x=theta.copy(), f=float(f))
        return -f, -g

    def record(intermediate_result):
        trace.append(float(-intermediate_result.fun))

    try:
        res = optimize.minimize(
            neg, theta0, jac=True, method="L-BFGS-B", bounds=bounds, callback=record,
            options={"maxiter": max_iters, "ftol": tol, "gtol": 1e-10, "maxcor": 20})
    except _NonFinite as exc:
        logger.warning("optimizer aborted: %s", exc)
        return OptimizerResult(best["x"], best["f"], len(trace) - 1, False, trace,
                               aborted=True, message=str(exc))
    converged = bool(res.success) or res.nit < max_iters
    return OptimizerResult(best["x"], best["f"], int(res.nit), converged, trace,
                           message=str(res.message))


def finite_difference_gradient(objective: Callable, theta, step: float = 1e-5) -> np.ndarray:
    """Central differences of a scalar function (``objective`` may return a tuple)."""
    theta = np.asarray(theta, dtype=float)

    def value(x):
        out = objective(x)
        return float(out[0] if isinstance(out, tuple) else out)

    grad = np.empty_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = step
        grad[i] = (value(theta + e) - value(theta - e)) / (2.0 * step)
    return grad


def relative_error(a, b) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))
