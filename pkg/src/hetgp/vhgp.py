"""Variational heteroscedastic GP regression.

Model: ``y_t = f(t) + eps_t`` with ``eps_t ~ N(0, exp(g(z_t)))``, a GP prior
on ``f`` over time and a GP prior with constant mean ``mu0`` on the log noise
``g`` over noise inputs ``z`` (time itself for the plain model, lagged
sample-size deciles and speeds for the sample-size-conditioned one).

The variational posterior ``q(g) = N(mu, Sigma)`` is tied to a diagonal
``Lambda`` through

    Sigma = (K_g^{-1} + Lambda)^{-1},   mu = mu0 + K_g (Lambda - I/2) 1,

and the collapsed bound maximized over ``Lambda`` and all hyperparameters is

    F = log N(y | 0, K_f + R) - tr(Sigma)/4 - KL(q(g) || p(g)),
    R = diag(exp(mu_i - Sigma_ii / 2)).

Only ``B = I + S K_g S`` (with ``S = Lambda^{1/2}``) and ``K_f + R`` are ever
factorized, so ``K_g`` may be arbitrarily close to singular.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy import special

from . import kernels as K
from .errors import ConfigurationError, DataError, NumericalError
from .gp_exact import LOG_2PI
from .numerics import (OptimizerResult, cholesky_jittered, inverse_psd, maximize, solve_lower,
                       solve_psd)

HYPER_BOUNDS = (-12.0, 12.0)
MU0_BOUNDS = (-20.0, 20.0)
RHO_BOUNDS = (-20.0, 10.0)


def lambda_from_rho(rho):
    """Lambda_ii = exp(rho_i) / 2, so rho = 0 leaves mu at mu0."""
    return 0.5 * np.exp(rho)


def dlambda_drho(rho, lam):
    return lam


@dataclass(frozen=True)
class LatentPredictive:
    """Posterior moments of f and g at test points (arrays or scalars)."""

    mf: np.ndarray
    vf: np.ndarray
    mg: np.ndarray
    vg: np.ndarray


@dataclass(frozen=True)
class ElboTerms:
    data: float
    trace: float
    kl: float  # stored negated, i.e. -KL <= 0

    @property
    def total(self) -> float:
        return self.data + self.trace + self.kl


@dataclass(frozen=True)
class _Posterior:
    lam: np.ndarray
    s: np.ndarray
    Kg: np.ndarray
    FB: object
    V: np.ndarray
    sigma_diag: np.ndarray
    mu: np.ndarray
    r: np.ndarray
    FA: object
    alpha: np.ndarray


@dataclass(frozen=True)
class VHGPModel:
    kernel_f: K.KernelSpec
    kernel_g: K.KernelSpec
    mu0: float
    rho: np.ndarray
    t: np.ndarray
    z: np.ndarray
    y: np.ndarray
    geom_t: Optional[K.Geometry] = field(default=None, repr=False, compare=False)
    geom_z: Optional[K.Geometry] = field(default=None, repr=False, compare=False)
    post: _Posterior = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        t = K.as_inputs(self.t, self.kernel_f.input_dim)
        z = K.as_inputs(self.z, self.kernel_g.input_dim)
        if self.geom_t is None or self.geom_t.X is not t:
            object.__setattr__(self, "geom_t", K.Geometry(t, self.kernel_f.input_dim))
        if self.geom_z is None or self.geom_z.X is not z:
            object.__setattr__(self, "geom_z", K.Geometry(z, self.kernel_g.input_dim))
        y = np.asarray(self.y, dtype=float).ravel()
        rho = np.asarray(self.rho, dtype=float).ravel()
        n = y.shape[0]
        if n < 2:
            raise DataError("the heteroscedastic model needs at least two training points")
        if t.shape[0] != n or z.shape[0] != n or rho.shape[0] != n:
            raise DataError(f"inconsistent sizes: t={t.shape[0]}, z={z.shape[0]}, "
                            f"rho={rho.shape[0]}, y={n}")
        if not np.all(np.isfinite(y)) or not np.all(np.isfinite(z)):
            raise DataError("training targets and noise inputs must be finite")
        for name, value in (("t", t), ("z", z), ("y", y), ("rho", rho),
                            ("mu0", float(self.mu0))):
            object.__setattr__(self, name, value)
        object.__setattr__(self, "post", _compute_posterior(self))

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def lam(self) -> np.ndarray:
        return self.post.lam

    # -- flat parameter vector: [theta_f, theta_g, mu0, rho] ----------------

    def pack(self) -> np.ndarray:
        return np.concatenate([self.kernel_f.params(), self.kernel_g.params(),
                               [self.mu0], self.rho])

    def unpack(self, theta) -> "VHGPModel":
        nf, ng = self.kernel_f.n_params, self.kernel_g.n_params
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (nf + ng + 1 + self.n,):
            raise ConfigurationError(f"parameter vector has wrong shape {theta.shape}")
        return replace(self, kernel_f=self.kernel_f.with_params(theta[:nf]),
                       kernel_g=self.kernel_g.with_params(theta[nf:nf + ng]),
                       mu0=float(theta[nf + ng]), rho=theta[nf + ng + 1:])

    def bounds(self) -> list:
        nf, ng = self.kernel_f.n_params, self.kernel_g.n_params
        return [HYPER_BOUNDS] * (nf + ng) + [MU0_BOUNDS] + [RHO_BOUNDS] * self.n

    def with_data(self, t, z, y, rho) -> "VHGPModel":
        """Same hyperparameters on a new training set."""
        return replace(self, t=t, z=z, y=y, rho=rho, geom_t=None, geom_z=None)


def _compute_posterior(m: VHGPModel) -> _Posterior:
    n = m.n
    lam = lambda_from_rho(m.rho)
    s = np.sqrt(lam)
    Kg = K.gram(m.kernel_g, m.geom_z)
    B = s[:, None] * Kg * s[None, :]
    B[np.diag_indices(n)] += 1.0
    FB = cholesky_jittered(B)
    V = solve_lower(FB, s[:, None] * Kg)
    sigma_diag = np.diag(Kg) - np.einsum("ij,ij->j", V, V)
    mu = m.mu0 + Kg @ (lam - 0.5)
    log_r = mu - 0.5 * sigma_diag
    if not np.all(np.isfinite(log_r)) or log_r.max() > 700:
        raise NumericalError("noise variances overflow (log R out of range)")
    r = np.exp(log_r)
    A = K.gram(m.kernel_f, m.geom_t)
    A[np.diag_indices(n)] += r
    FA = cholesky_jittered(A)
    alpha = solve_psd(FA, m.y)
    return _Posterior(lam, s, Kg, FB, V, sigma_diag, mu, r, FA, alpha)


def gaussian_kl(m1, S1, m2, S2) -> float:
    """KL(N(m1, S1) || N(m2, S2)) by dense factorizations."""
    F2 = cholesky_jittered(S2)
    F1 = cholesky_jittered(S1)
    d = np.asarray(m1, dtype=float) - np.asarray(m2, dtype=float)
    tr = float(np.trace(solve_psd(F2, S1)))
    quad = float(d @ solve_psd(F2, d))
    return 0.5 * (tr + quad - d.size + F2.logdet - F1.logdet)


def variational_moments(model: VHGPModel):
    """(mu, Sigma) of q(g) at the training inputs."""
    p = model.post
    sigma = p.Kg - p.V.T @ p.V
    return p.mu.copy(), sigma


def elbo(model: VHGPModel, gradient: bool = False):
    """The collapsed bound, as :class:`ElboTerms`, plus its gradient if requested.

    The gradient is ordered like :meth:`VHGPModel.pack`.
    """
    p, n = model.post, model.n
    c = p.lam - 0.5
    data = -0.5 * float(model.y @ p.alpha) - 0.5 * p.FA.logdet - 0.5 * n * LOG_2PI
    trace = -0.25 * float(np.sum(p.sigma_diag))
    kl = 0.5 * (-float(p.lam @ p.sigma_diag) + float(c @ p.Kg @ c) + p.FB.logdet)
    terms = ElboTerms(data, trace, -kl)
    if not np.isfinite(terms.total):
        bad = [k for k, v in (("data", data), ("trace", trace), ("kl", kl)) if not np.isfinite(v)]
        raise NumericalError(f"non-finite bound term(s): {', '.join(bad)}")
    if not gradient:
        return terms

    lam, Kg, r = p.lam, p.Kg, p.r
    Ainv = inverse_psd(p.FA)
    w = p.alpha**2 - np.diag(Ainv)
    b = 0.5 * w * r                      # dF/dmu
    a = -0.25 * w * r - 0.25             # dF/dSigma_ii (data + trace terms)

    W = np.negative(Ainv, out=Ainv)
    W += p.alpha[:, None] * p.alpha[None, :]
    g_f = 0.5 * K.weighted_gradient_sums(model.kernel_f, model.geom_t, W)
    g_mu0 = float(np.sum(b))

    KmS = p.V.T @ p.V                    # K_g - Sigma
    Sigma = Kg - KmS
    SL = Sigma * lam[None, :]
    dkl_dlam = 0.5 * (np.diag(KmS) - np.einsum("ij,ij->i", SL, KmS)) + Kg @ c
    g_lam = Kg @ b - (Sigma * Sigma) @ a - dkl_dlam
    g_rho = g_lam * dlambda_drho(model.rho, lam)

    # sum_ij M_ij dK_g,ij collects the mu, Sigma_ii and KL dependence on K_g;
    # dK_g is symmetric, so only the symmetric part of M matters and the
    # rank-two pieces can be built as single (n x 2)(2 x n) products
    M = np.column_stack([0.5 * b, 0.5 * c]) @ np.column_stack([c, b - c]).T
    P = np.column_stack([lam, a]) @ np.column_stack([a + 0.5 * lam, lam]).T
    P *= Sigma
    M -= P
    M += SL.T @ ((a + 0.5 * lam)[:, None] * SL)
    M[np.diag_indices(n)] += a
    g_g = K.weighted_gradient_sums(model.kernel_g, model.geom_z, M)

    grad = np.concatenate([g_f, g_g, [g_mu0], g_rho])
    return terms, grad


def objective(model: VHGPModel, optimize_hypers: bool = True):
    """theta -> (F, dF/dtheta). With frozen hyperparameters theta is rho only.

    Where the bound cannot be evaluated (noise variances overflowing, failed
    factorizations) the objective returns a finite value below the last
    valid one, rising quadratically toward it, so a line search that
    overshoots backs off instead of stopping the optimizer.
    """
    offset = model.kernel_f.n_params + model.kernel_g.n_params + 1
    base = model.pack()
    anchor = {"theta": (base if optimize_hypers else base[offset:]).copy(), "f": None}

    def f(theta):
        theta = np.asarray(theta, dtype=float)
        full = theta if optimize_hypers else np.concatenate([base[:offset], theta])
        try:
            terms, grad = elbo(model.unpack(full), gradient=True)
        except NumericalError:
            if anchor["f"] is None:
                return -np.inf, np.zeros_like(theta)
            d = theta - anchor["theta"]
            c = 1.0 + abs(anchor["f"])
            return anchor["f"] - c * (1.0 + d @ d), -2.0 * c * d
        anchor.update(theta=theta.copy(), f=terms.total)
        return terms.total, (grad if optimize_hypers else grad[offset:])
    return f


def fit(model: VHGPModel, max_iters: int = 200, tol: float = 1e-6,
        optimize_hypers: bool = True):
    """Jointly maximize the bound; returns ``(fitted_model, OptimizerResult)``.

    The current parameters of ``model`` are the starting point, which is how
    warm starts are expressed (see :func:`warm_start`).
    """
    f = objective(model, optimize_hypers)
    theta0 = model.pack()
    bounds = model.bounds()
    if not optimize_hypers:
        offset = model.kernel_f.n_params + model.kernel_g.n_params + 1
        theta0, bounds = theta0[offset:], bounds[offset:]
    theta0 = np.clip(theta0, [b[0] for b in bounds], [b[1] for b in bounds])
    res: OptimizerResult = maximize(f, theta0, max_iters=max_iters, tol=tol, bounds=bounds)
    x = res.x
    if not optimize_hypers:
        x = np.concatenate([model.pack()[:offset], x])
    return model.unpack(x), res


def initial_model(t, z, y, kernel_f: K.KernelSpec, kernel_g: K.KernelSpec, noise_variance: float,
                  rho: Optional[np.ndarray] = None) -> VHGPModel:
    """Start at the homoscedastic solution: mu0 = log(noise variance), rho = 0."""
    if noise_variance <= 0:
        raise ConfigurationError("initial noise variance must be positive")
    y = np.asarray(y, dtype=float)
    rho = np.zeros(y.shape[0]) if rho is None else rho
    return VHGPModel(kernel_f, kernel_g, math.log(noise_variance), rho, t, z, y)


def shift_rho(rho, offset: int, n_new: int) -> np.ndarray:
    """Re-align per-point variational parameters after the window moves by ``offset``.

    Old index ``i`` becomes ``i - offset``; indices with no predecessor get 0.
    """
    out = np.zeros(n_new)
    src = np.arange(n_new) + offset
    ok = (src >= 0) & (src < len(rho))
    out[ok] = np.asarray(rho)[src[ok]]
    return out


def warm_start(previous: VHGPModel, t, z, y, offset: int) -> VHGPModel:
    """New-window model seeded with ``previous``'s hyperparameters, mu0 and shifted rho."""
    y = np.asarray(y, dtype=float)
    return previous.with_data(t, z, y, shift_rho(previous.rho, offset, y.shape[0]))


def predict_latent(model: VHGPModel, t_star, z_star) -> LatentPredictive:
    p = model.post
    ts = K.as_inputs(t_star, model.kernel_f.input_dim)
    zs = K.as_inputs(z_star, model.kernel_g.input_dim)
    if ts.shape[0] != zs.shape[0]:
        raise DataError("t_star and z_star must describe the same number of points")
    Kfs = K.cross(model.kernel_f, model.t, ts)
    mf = Kfs.T @ p.alpha
    v = solve_lower(p.FA, Kfs)
    vf = np.maximum(K.kdiag(model.kernel_f, ts) - np.einsum("ij,ij->j", v, v), 1e-12)
    Kgs = K.cross(model.kernel_g, model.z, zs)
    mg = model.mu0 + Kgs.T @ (p.lam - 0.5)
    u = solve_lower(p.FB, p.s[:, None] * Kgs)
    vg = np.maximum(K.kdiag(model.kernel_g, zs) - np.einsum("ij,ij->j", u, u), 0.0)
    return LatentPredictive(mf, vf, mg, vg)


def predict_moments(lp: LatentPredictive):
    """Mean and variance of y*: the noise adds the log-normal mean of exp(g*)."""
    mean = np.asarray(lp.mf, dtype=float)
    var = np.asarray(lp.vf, dtype=float) + np.exp(np.asarray(lp.mg) + 0.5 * np.asarray(lp.vg))
    return mean, var


def predictive_log_density(lp: LatentPredictive, y_star, nodes: int = 30,
                           refinements: int = 3) -> np.ndarray:
    """log q(y*) with g* integrated out by Gauss-Hermite quadrature.

    The rule starts on q(g*) and is then re-centred ``refinements`` times on
    the mean and spread of the integrand itself, estimated from the previous
    pass, so outlying y* (whose likelihood peaks in the tail of q(g*)) get
    nodes where the mass is. Points with ``vg == 0`` get the exact Gaussian
    log-density.
    """
    if nodes < 1:
        raise ConfigurationError("need at least one quadrature node")
    mf, vf, mg, vg, y = np.broadcast_arrays(*(np.asarray(a, dtype=float)
                                              for a in (lp.mf, lp.vf, lp.mg, lp.vg, y_star)))
    exact = vg <= 0
    vg_safe = np.where(exact, 1.0, vg)[..., None]
    res2 = ((y - mf) ** 2)[..., None]
    vf_, mg_ = vf[..., None], mg[..., None]
    xi, wts = np.polynomial.hermite.hermgauss(nodes)
    base = np.log(wts) + xi**2 + math.log(math.sqrt(2.0))
    centre, scale = mg_, np.sqrt(vg_safe)
    for it in range(refinements + 1):
        g = centre + math.sqrt(2.0) * scale * xi
        var = vf_ + np.exp(g)
        log_w = (base + np.log(scale) - LOG_2PI - 0.5 * np.log(var * vg_safe)
                 - 0.5 * res2 / var - 0.5 * (g - mg_) ** 2 / vg_safe)
        total = special.logsumexp(log_w, axis=-1, keepdims=True)
        if it == refinements:
            break
        p = np.exp(log_w - total)
        centre = np.sum(p * g, axis=-1, keepdims=True)
        spread = np.sum(p * (g - centre) ** 2, axis=-1, keepdims=True)
        scale = np.sqrt(np.maximum(spread, 1e-10 * vg_safe))
    out = total[..., 0]
    if np.any(exact):
        v0 = vf + np.exp(mg)
        out = np.where(exact, -0.5 * (LOG_2PI + np.log(v0) + res2[..., 0] / v0), out)
    return out[()] if np.ndim(out) == 0 else out


def predictive_interval(lp: LatentPredictive, level: float = 0.95, samples: int = 10_000,
                        seed=0, chunk: int = 512):
    """Monte-Carlo central interval of y*; deterministic per seed."""
    if not 0.0 < level < 1.0:
        raise ConfigurationError("interval level must lie in (0, 1)")
    mf, vf, mg, vg = (np.atleast_1d(np.asarray(a, dtype=float))
                      for a in np.broadcast_arrays(lp.mf, lp.vf, lp.mg, lp.vg))
    rng = np.random.default_rng(seed)
    q = [(1.0 - level) / 2.0, 1.0 - (1.0 - level) / 2.0]
    lower = np.empty(mf.shape[0])
    upper = np.empty(mf.shape[0])
    for i in range(0, mf.shape[0], chunk):
        sl = slice(i, i + chunk)
        m = mf[sl].shape[0]
        g = mg[sl, None] + np.sqrt(vg[sl])[:, None] * rng.standard_normal((m, samples))
        sd = np.sqrt(vf[sl, None] + np.exp(g))
        draws = mf[sl, None] + sd * rng.standard_normal((m, samples))
        lower[sl], upper[sl] = np.quantile(draws, q, axis=1)
    if np.ndim(lp.mf) == 0:
        return float(lower[0]), float(upper[0])
    return lower, upper


@dataclass(frozen=True)
class SlidingPosterior:
    """Posterior of a fixed-hyperparameter model on a window that moves forward.

    Variational parameters stay attached to their points; points entering the
    window get ``rho = 0``. Dropping or adding a point is an exact rank-one
    change of ``Sigma``, so a step costs O(n^2) plus one factorization of
    ``K_f + R``. Use :meth:`from_model` to start and :meth:`to_model` to hand
    the current window back to the optimizer.
    """

    kernel_f: K.KernelSpec
    kernel_g: K.KernelSpec
    mu0: float
    rho: np.ndarray
    t: np.ndarray
    z: np.ndarray
    y: np.ndarray
    Kg: np.ndarray = field(repr=False)
    Sigma: np.ndarray = field(repr=False)
    mu: np.ndarray = field(repr=False)
    geom_t: Optional[K.Geometry] = field(default=None, repr=False, compare=False)
    FA: object = field(default=None, repr=False)
    alpha: Optional[np.ndarray] = field(default=None, repr=False)

    @classmethod
    def from_model(cls, m: VHGPModel) -> "SlidingPosterior":
        p = m.post
        Sigma = p.Kg - p.V.T @ p.V
        return cls(m.kernel_f, m.kernel_g, m.mu0, m.rho, m.t, m.z, m.y, p.Kg.copy(), Sigma,
                   p.mu.copy(), m.geom_t, p.FA, p.alpha)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def lam(self) -> np.ndarray:
        return lambda_from_rho(self.rho)

    def to_model(self) -> VHGPModel:
        return VHGPModel(self.kernel_f, self.kernel_g, self.mu0, self.rho, self.t, self.z, self.y,
                         geom_t=self.geom_t)

    def slide(self, t, z, y, offset: int) -> "SlidingPosterior":
        """Drop the first ``offset`` points, append the new tail of ``t``/``z``/``y``."""
        t = K.as_inputs(t, self.kernel_f.input_dim)
        z = K.as_inputs(z, self.kernel_g.input_dim)
        y = np.asarray(y, dtype=float).ravel()
        kept = self.n - offset
        n_add = y.shape[0] - kept
        if offset < 0 or kept < 1 or n_add < 0:
            raise DataError(f"cannot slide a {self.n}-point window by {offset} to {y.shape[0]}")
        Sigma, Kg, mu, rho = self.Sigma, self.Kg, self.mu, self.rho
        lam = lambda_from_rho(rho)
        for _ in range(offset):                      # remove the oldest site, then marginalize
            c = Sigma[:, 0]
            den = 1.0 - lam[0] * c[0]
            if den < 1e-10:
                return self._rebuild(t, z, y, shift_rho(self.rho, offset, y.shape[0]))
            mu = mu[1:] - Kg[1:, 0] * (lam[0] - 0.5)
            Sigma = Sigma[1:, 1:] + np.outer(c[1:], c[1:]) * (lam[0] / den)
            Kg, lam, rho = Kg[1:, 1:], lam[1:], rho[1:]
        for j in range(kept, y.shape[0]):             # prior-extend, then add the site
            k = K.cross(self.kernel_g, z[:j], z[j:j + 1])[:, 0]
            kpp = float(K.kdiag(self.kernel_g, z[j:j + 1])[0])
            lk = lam * k
            c = k - Sigma @ lk
            v = kpp - float(k @ lk) + float(lk @ Sigma @ lk)
            lp = float(lambda_from_rho(0.0))
            u = np.append(c, v)
            S_aug = np.empty((j + 1, j + 1))
            S_aug[:j, :j], S_aug[:j, j], S_aug[j, :j], S_aug[j, j] = Sigma, c, c, v
            Sigma = S_aug - np.outer(u, u) * (lp / (1.0 + lp * v))
            K_aug = np.empty((j + 1, j + 1))
            K_aug[:j, :j], K_aug[:j, j], K_aug[j, :j], K_aug[j, j] = Kg, k, k, kpp
            Kg = K_aug
            mu = np.append(mu, self.mu0 + float(k @ (lam - 0.5)))
            lam, rho = np.append(lam, lp), np.append(rho, 0.0)
        return self._with_noise(t, z, y, rho, Kg, Sigma, mu)

    def _with_noise(self, t, z, y, rho, Kg, Sigma, mu) -> "SlidingPosterior":
        log_r = mu - 0.5 * np.diag(Sigma)
        if not np.all(np.isfinite(log_r)) or log_r.max() > 700:
            raise NumericalError("noise variances overflow (log R out of range)")
        geom = self.geom_t if self.geom_t is not None and self.geom_t.X.shape == t.shape \
            and np.array_equal(self.geom_t.X, t) else K.Geometry(t, self.kernel_f.input_dim)
        A = K.gram(self.kernel_f, geom)
        A[np.diag_indices_from(A)] += np.exp(log_r)
        FA = cholesky_jittered(A)
        return SlidingPosterior(self.kernel_f, self.kernel_g, self.mu0, rho, geom.X, z, y, Kg,
                                Sigma, mu, geom, FA, solve_psd(FA, y))

    def _rebuild(self, t, z, y, rho) -> "SlidingPosterior":
        fresh = SlidingPosterior.from_model(VHGPModel(self.kernel_f, self.kernel_g, self.mu0,
                                                      rho, t, z, y))
        return fresh

    def predict_latent(self, t_star, z_star) -> LatentPredictive:
        ts = K.as_inputs(t_star, self.kernel_f.input_dim)
        zs = K.as_inputs(z_star, self.kernel_g.input_dim)
        Kfs = K.cross(self.kernel_f, self.t, ts)
        mf = Kfs.T @ self.alpha
        v = solve_lower(self.FA, Kfs)
        vf = np.maximum(K.kdiag(self.kernel_f, ts) - np.einsum("ij,ij->j", v, v), 1e-12)
        lam = self.lam
        Kgs = K.cross(self.kernel_g, self.z, zs)
        mg = self.mu0 + Kgs.T @ (lam - 0.5)
        LK = lam[:, None] * Kgs
        vg = (K.kdiag(self.kernel_g, zs) - np.einsum("ij,ij->j", Kgs, LK)
              + np.einsum("ij,ij->j", LK, self.Sigma @ LK))
        return LatentPredictive(mf, vf, mg, np.maximum(vg, 0.0))
