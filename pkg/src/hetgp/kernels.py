"""Covariance functions, Gram matrices and log-hyperparameter gradients.

A :class:`KernelSpec` is an immutable sum of primitive terms. Every
primitive stores its positive hyperparameters in log space; the flattened
vector returned by :meth:`KernelSpec.params` is what the optimizers see.

White noise is keyed on sample identity, not on input value: it appears on
the diagonal of :func:`gram` and in :func:`kdiag`, never in :func:`cross`.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, replace
from typing import Union

import numpy as np

from .errors import ConfigurationError

WEEK_DAYS = 7.0


def eval_se(amplitude, lengthscale, u, v):
    """Squared-exponential covariance between two points (ARD if vectors)."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    v = np.atleast_1d(np.asarray(v, dtype=float))
    ell = np.broadcast_to(np.asarray(lengthscale, dtype=float), u.shape)
    r2 = float(np.sum(((u - v) / ell) ** 2))
    return amplitude**2 * math.exp(-0.5 * r2)


def eval_periodic(amplitude, lengthscale, period, t, t_prime):
    s = math.sin(math.pi * (t - t_prime) / period)
    return amplitude**2 * math.exp(-0.5 * s * s / lengthscale**2)


def eval_white_noise(variance, i, j):
    return variance if i == j else 0.0


@dataclass(frozen=True)
class SquaredExponential:
    log_amplitude: float
    log_lengthscales: tuple

    @property
    def input_dim(self) -> int:
        return len(self.log_lengthscales)

    @property
    def n_params(self) -> int:
        return 1 + len(self.log_lengthscales)

    def params(self) -> list:
        return [self.log_amplitude, *self.log_lengthscales]

    def with_params(self, p) -> "SquaredExponential":
        return replace(self, log_amplitude=float(p[0]),
                       log_lengthscales=tuple(float(x) for x in p[1:]))

    def param_names(self) -> list:
        names = ["se.log_amplitude"]
        if self.input_dim == 1:
            return names + ["se.log_lengthscale"]
        return names + [f"se.log_lengthscale[{d}]" for d in range(self.input_dim)]


@dataclass(frozen=True)
class Periodic:
    log_amplitude: float
    log_lengthscale: float
    period: float = WEEK_DAYS

    input_dim = 1
    n_params = 2

    def params(self) -> list:
        return [self.log_amplitude, self.log_lengthscale]

    def with_params(self, p) -> "Periodic":
        return replace(self, log_amplitude=float(p[0]), log_lengthscale=float(p[1]))

    def param_names(self) -> list:
        return ["periodic.log_amplitude", "periodic.log_lengthscale"]


@dataclass(frozen=True)
class WhiteNoise:
    log_variance: float

    input_dim = None
    n_params = 1

    def params(self) -> list:
        return [self.log_variance]

    def with_params(self, p) -> "WhiteNoise":
        return replace(self, log_variance=float(p[0]))

    def param_names(self) -> list:
        return ["white.log_variance"]


Primitive = Union[SquaredExponential, Periodic, WhiteNoise]


@dataclass(frozen=True)
class KernelSpec:
    """Sum of primitive covariance terms over ``input_dim``-dimensional inputs."""

    terms: tuple
    input_dim: int = 1

    def __post_init__(self):
        if not self.terms:
            raise ConfigurationError("kernel needs at least one term")
        for term in self.terms:
            d = term.input_dim
            if d is not None and d != self.input_dim:
                raise ConfigurationError(
                    f"{type(term).__name__} expects {d}-d inputs, kernel is {self.input_dim}-d")

    def __add__(self, other: "KernelSpec") -> "KernelSpec":
        if other.input_dim != self.input_dim:
            raise ConfigurationError("cannot add kernels of different input dimension")
        return KernelSpec(self.terms + other.terms, self.input_dim)

    @property
    def n_params(self) -> int:
        return sum(t.n_params for t in self.terms)

    def params(self) -> np.ndarray:
        return np.array([p for t in self.terms for p in t.params()], dtype=float)

    def with_params(self, theta) -> "KernelSpec":
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_params,):
            raise ConfigurationError(
                f"expected {self.n_params} kernel parameters, got shape {theta.shape}")
        terms, i = [], 0
        for t in self.terms:
            terms.append(t.with_params(theta[i:i + t.n_params]))
            i += t.n_params
        return KernelSpec(tuple(terms), self.input_dim)

    def param_names(self) -> list:
        names = []
        for k, t in enumerate(self.terms):
            names += [f"{k}:{n}" for n in t.param_names()]
        return names

    def has_white_noise(self) -> bool:
        return any(isinstance(t, WhiteNoise) for t in self.terms)

    def without_white_noise(self) -> "KernelSpec":
        return KernelSpec(tuple(t for t in self.terms if not isinstance(t, WhiteNoise)),
                          self.input_dim)

    def noise_variance(self) -> float:
        return sum(math.exp(t.log_variance) for t in self.terms if isinstance(t, WhiteNoise))

    def find(self, kind) -> list:
        """Indices of terms of the given primitive type."""
        return [k for k, t in enumerate(self.terms) if isinstance(t, kind)]


# -- constructors in natural units ------------------------------------------

def se(amplitude=1.0, lengthscale=1.0, input_dim=1) -> KernelSpec:
    ell = np.broadcast_to(np.asarray(lengthscale, dtype=float), (input_dim,))
    if amplitude <= 0 or np.any(ell <= 0):
        raise ConfigurationError("SE amplitude and lengthscales must be positive")
    term = SquaredExponential(math.log(amplitude), tuple(float(math.log(x)) for x in ell))
    return KernelSpec((term,), input_dim)


def periodic(amplitude=1.0, lengthscale=1.0, period=WEEK_DAYS) -> KernelSpec:
    if amplitude <= 0 or lengthscale <= 0 or period <= 0:
        raise ConfigurationError("periodic amplitude, lengthscale and period must be positive")
    return KernelSpec((Periodic(math.log(amplitude), math.log(lengthscale), float(period)),), 1)


def white(variance=0.1, input_dim=1) -> KernelSpec:
    if variance <= 0:
        raise ConfigurationError("white-noise variance must be positive")
    return KernelSpec((WhiteNoise(math.log(variance)),), input_dim)


def default_time_kernel(noise=True) -> KernelSpec:
    """SE + weekly periodic (+ white noise) over time in days."""
    k = se(1.0, 0.25) + periodic(1.0, 1.0, WEEK_DAYS)
    return k + white(0.1) if noise else k


def default_noise_kernel(input_dim=1) -> KernelSpec:
    """SE + white noise for the log-noise process."""
    ell = 0.25 if input_dim == 1 else 1.0
    return se(1.0, ell, input_dim) + white(0.1, input_dim)


# -- textual form used by run-config files ----------------------------------

_TERM_RE = re.compile(r"^\s*([a-z_]+)\s*\((.*)\)\s*$")
_ALIASES = {"se": "se", "rbf": "se", "periodic": "periodic", "per": "periodic",
            "white": "white", "wn": "white"}


def parse_kernel(text: str, input_dim: int = 1) -> KernelSpec:
    """Parse e.g. ``se(amplitude=1, lengthscale=0.25) + white(variance=0.1)``.

    ARD lengthscales are written ``lengthscale=0.5;0.5;1;1``.
    """
    spec = None
    for chunk in text.split("+"):
        m = _TERM_RE.match(chunk)
        if not m or m.group(1) not in _ALIASES:
            raise ConfigurationError(f"cannot parse kernel term {chunk.strip()!r}")
        kind = _ALIASES[m.group(1)]
        kwargs = {}
        for arg in filter(None, (a.strip() for a in m.group(2).split(","))):
            key, sep, value = arg.partition("=")
            if not sep:
                raise ConfigurationError(f"kernel argument {arg!r} is not key=value")
            try:
                vals = [float(v) for v in value.split(";")]
            except ValueError as exc:
                raise ConfigurationError(f"non-numeric kernel argument {arg!r}") from exc
            kwargs[key.strip()] = vals if len(vals) > 1 else vals[0]
        try:
            if kind == "se":
                term = se(input_dim=input_dim, **kwargs)
            elif kind == "periodic":
                term = periodic(**kwargs)
            else:
                term = white(input_dim=input_dim, **kwargs)
        except TypeError as exc:
            raise ConfigurationError(f"bad arguments for {kind}: {exc}") from exc
        spec = term if spec is None else spec + term
    if spec is None:
        raise ConfigurationError("empty kernel expression")
    return spec


def format_kernel(spec: KernelSpec) -> str:
    parts = []
    for t in spec.terms:
        if isinstance(t, SquaredExponential):
            ell = ";".join(f"{math.exp(x):.6g}" for x in t.log_lengthscales)
            parts.append(f"se(amplitude={math.exp(t.log_amplitude):.6g}, lengthscale={ell})")
        elif isinstance(t, Periodic):
            parts.append(f"periodic(amplitude={math.exp(t.log_amplitude):.6g}, "
                         f"lengthscale={math.exp(t.log_lengthscale):.6g}, period={t.period:g})")
        else:
            parts.append(f"white(variance={math.exp(t.log_variance):.6g})")
    return " + ".join(parts)


# -- matrix evaluation -------------------------------------------------------

def as_inputs(X, input_dim: int) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 0:
        X = X.reshape(1, 1)
    elif X.ndim == 1:
        X = X[:, None] if input_dim == 1 else X[None, :]
    if X.ndim != 2 or X.shape[1] != input_dim:
        raise ConfigurationError(
            f"inputs of shape {X.shape} do not match kernel input dimension {input_dim}")
    return X


class Geometry:
    """Hyperparameter-free pairwise quantities of one input set.

    Building a kernel matrix for many hyperparameter values over the same
    inputs (an optimizer loop) reuses the squared differences and periodic
    sin^2 terms stored here instead of recomputing them.
    """

    def __init__(self, X, input_dim: int):
        self.X = as_inputs(X, input_dim)
        self._sq = None
        self._sin2 = {}
        self._last = (None, None)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    def squared_differences(self) -> list:
        if self._sq is None:
            X = self.X
            self._sq = [(X[:, d, None] - X[None, :, d]) ** 2 for d in range(X.shape[1])]
        return self._sq

    def sin_squared(self, period: float) -> np.ndarray:
        if period not in self._sin2:
            d = self.X[:, 0, None] - self.X[None, :, 0]
            self._sin2[period] = np.sin(math.pi * d / period) ** 2
        return self._sin2[period]


    def cached_terms(self, spec: "KernelSpec") -> list:
        """Term matrices for ``spec``; the most recent parameter set is memoized."""
        key = (tuple(type(t) for t in spec.terms), tuple(spec.params()))
        if self._last[0] != key:
            self._last = (key, [_term_gram(t, self) for t in spec.terms])
        return self._last[1]


def geometry(X, input_dim: int) -> Geometry:
    return X if isinstance(X, Geometry) else Geometry(X, input_dim)


def _se_parts(term: SquaredExponential, X, Z):
    ell = np.exp(np.asarray(term.log_lengthscales))
    per_dim = [((X[:, d, None] - Z[None, :, d]) / ell[d]) ** 2 for d in range(X.shape[1])]
    K = math.exp(2.0 * term.log_amplitude) * np.exp(-0.5 * sum(per_dim))
    return K, per_dim


def _periodic_parts(term: Periodic, X, Z):
    s2 = np.sin(math.pi * (X[:, 0, None] - Z[None, :, 0]) / term.period) ** 2
    inv_l2 = math.exp(-2.0 * term.log_lengthscale)
    K = math.exp(2.0 * term.log_amplitude) * np.exp(-0.5 * s2 * inv_l2)
    return K, s2 * inv_l2


def _term_gram(term, G: Geometry):
    if isinstance(term, SquaredExponential):
        inv_l2 = np.exp(-2.0 * np.asarray(term.log_lengthscales))
        sq = G.squared_differences()
        r2 = sq[0] * inv_l2[0]
        for d in range(1, len(sq)):
            r2 = r2 + sq[d] * inv_l2[d]
        return math.exp(2.0 * term.log_amplitude) * np.exp(-0.5 * r2)
    if isinstance(term, Periodic):
        inv_l2 = math.exp(-2.0 * term.log_lengthscale)
        return math.exp(2.0 * term.log_amplitude) * np.exp(-0.5 * inv_l2 * G.sin_squared(term.period))
    return None


def term_grams(spec: KernelSpec, X) -> list:
    """One matrix per term over a single input set; ``None`` for white noise."""
    if isinstance(X, Geometry):
        return X.cached_terms(spec)
    G = Geometry(X, spec.input_dim)
    return [_term_gram(t, G) for t in spec.terms]


def cross(spec: KernelSpec, X, Z) -> np.ndarray:
    """Covariance between distinct sample sets (white noise contributes zero)."""
    X = as_inputs(X, spec.input_dim)
    Z = as_inputs(Z, spec.input_dim)
    K = np.zeros((X.shape[0], Z.shape[0]))
    for t in spec.terms:
        if isinstance(t, SquaredExponential):
            K += _se_parts(t, X, Z)[0]
        elif isinstance(t, Periodic):
            K += _periodic_parts(t, X, Z)[0]
    return K


def kdiag(spec: KernelSpec, X) -> np.ndarray:
    """Prior variance k(x, x) of each sample, white noise included."""
    n = X.n if isinstance(X, Geometry) else as_inputs(X, spec.input_dim).shape[0]
    v = 0.0
    for t in spec.terms:
        if isinstance(t, (SquaredExponential, Periodic)):
            v += math.exp(2.0 * t.log_amplitude)
        else:
            v += math.exp(t.log_variance)
    return np.full(n, v)


def gram(spec: KernelSpec, X, terms=None) -> np.ndarray:
    """K(X, X) including white noise; ``terms`` are precomputed :func:`term_grams`."""
    G = geometry(X, spec.input_dim)
    terms = term_grams(spec, G) if terms is None else terms
    K = np.zeros((G.n, G.n))
    for M in terms:
        if M is not None:
            K += M
    noise = spec.noise_variance()
    if noise:
        K[np.diag_indices_from(K)] += noise
    return K


def gram_gradients(spec: KernelSpec, X) -> list:
    """dK/d(theta_i) for every flattened log-hyperparameter, in order."""
    G = geometry(X, spec.input_dim)
    out = []
    for t, K in zip(spec.terms, term_grams(spec, G)):
        if isinstance(t, SquaredExponential):
            inv_l2 = np.exp(-2.0 * np.asarray(t.log_lengthscales))
            out.append(2.0 * K)
            out.extend(K * (sq * c) for sq, c in zip(G.squared_differences(), inv_l2))
        elif isinstance(t, Periodic):
            out.append(2.0 * K)
            out.append(K * (G.sin_squared(t.period) * math.exp(-2.0 * t.log_lengthscale)))
        else:
            out.append(math.exp(t.log_variance) * np.eye(G.n))
    return out


def gram_gradient(spec: KernelSpec, X, index: int) -> np.ndarray:
    if not 0 <= index < spec.n_params:
        raise ConfigurationError(
            f"hyperparameter index {index} out of range for {spec.n_params} parameters")
    return gram_gradients(spec, X)[index]


def weighted_gradient_sums(spec: KernelSpec, X, M: np.ndarray, terms=None) -> np.ndarray:
    """sum_ij M_ij dK_ij/dtheta for every hyperparameter, without keeping all matrices."""
    G = geometry(X, spec.input_dim)
    terms = term_grams(spec, G) if terms is None else terms
    out = []
    for t, K in zip(spec.terms, terms):
        if isinstance(t, SquaredExponential):
            KM = K * M
            out.append(2.0 * KM.sum())
            inv_l2 = np.exp(-2.0 * np.asarray(t.log_lengthscales))
            out.extend(c * float(np.vdot(KM, sq)) for sq, c in zip(G.squared_differences(), inv_l2))
        elif isinstance(t, Periodic):
            KM = K * M
            out.append(2.0 * KM.sum())
            out.append(math.exp(-2.0 * t.log_lengthscale) * float(np.vdot(KM, G.sin_squared(t.period))))
        else:
            out.append(math.exp(t.log_variance) * float(np.trace(M)))
    return np.asarray(out, dtype=float)
