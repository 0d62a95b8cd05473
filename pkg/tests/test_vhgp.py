import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hetgp import gp_exact as G
from hetgp import kernels as K
from hetgp import vhgp as V
from hetgp.errors import ConfigurationError, DataError, NumericalError
from hetgp.numerics import finite_difference_gradient


def _toy(seed, n=30, dim=1):
    rng = np.random.default_rng(seed)
    t = np.sort(rng.uniform(0, 3, n))
    z = t if dim == 1 else rng.uniform(0, 1, (n, dim))
    y = np.sin(2 * t) + (0.2 + 0.5 * (t > 1.5)) * rng.standard_normal(n)
    m = V.VHGPModel(K.se(1.0, 0.7) + K.periodic(0.6, 1.0, 2.0),
                    K.se(0.8, 0.6 if dim == 1 else [0.7] * dim, dim) + K.white(0.05, dim),
                    math.log(0.2), 0.5 * rng.standard_normal(n), t, z, y)
    return m, rng


def test_zero_amplitude_limit_is_homoscedastic():
    m, _ = _toy(0)
    kg = K.se(1e-8, 0.6) + K.white(1e-16)
    lim = V.VHGPModel(m.kernel_f, kg, m.mu0, m.rho, m.t, m.z, m.y)
    _, Sigma = V.variational_moments(lim)
    assert np.abs(Sigma).max() < 1e-12
    np.testing.assert_allclose(lim.post.mu, m.mu0, atol=1e-12)
    ref = G.log_marginal_likelihood(
        G.ExactGPModel(m.kernel_f + K.white(math.exp(m.mu0)), m.t, m.y))
    assert V.elbo(lim).total == pytest.approx(ref, abs=1e-6)


def test_kl_matches_dense_formula():
    m, _ = _toy(1, n=12)
    mu, Sigma = V.variational_moments(m)
    Kg = K.gram(m.kernel_g, m.z)
    dense = V.gaussian_kl(mu, Sigma, np.full(m.n, m.mu0), Kg)
    assert -V.elbo(m).kl == pytest.approx(dense, rel=1e-8)
    assert V.elbo(m).kl <= 0


def test_kl_zero_when_q_is_prior():
    assert V.gaussian_kl(np.ones(3), np.eye(3) * 2, np.ones(3), np.eye(3) * 2) == \
        pytest.approx(0.0, abs=1e-12)


def test_terms_sum_to_total():
    terms = V.elbo(_toy(2)[0])
    assert terms.total == pytest.approx(terms.data + terms.trace + terms.kl)
    assert np.isfinite(terms.total)


@pytest.mark.parametrize("dim", [1, 4])
def test_elbo_gradient(dim):
    for seed in range(5):
        m, _ = _toy(seed, dim=dim)
        f = V.objective(m)
        theta = m.pack()
        _, g = f(theta)
        fd = finite_difference_gradient(f, theta)
        np.testing.assert_allclose(g, fd, rtol=1e-4, atol=1e-6)


def test_rho_only_objective():
    m, _ = _toy(3)
    f = V.objective(m, optimize_hypers=False)
    _, g = f(m.rho)
    np.testing.assert_allclose(g, finite_difference_gradient(f, m.rho), rtol=1e-4, atol=1e-6)


@given(st.integers(0, 10_000))
def test_elbo_permutation_invariance(seed):
    m, rng = _toy(seed % 50, n=15)
    p = rng.permutation(m.n)
    m2 = V.VHGPModel(m.kernel_f, m.kernel_g, m.mu0, m.rho[p], m.t[p], m.z[p], m.y[p])
    assert V.elbo(m2).total == pytest.approx(V.elbo(m).total, abs=1e-9)


def test_lambda_positive():
    lam = V.lambda_from_rho(np.array([-20.0, 0.0, 10.0]))
    assert np.all(lam > 0)
    assert lam[1] == 0.5


def test_fit_trace_and_fixed_point():
    m, _ = _toy(4, n=40)
    fitted, res = V.fit(m, max_iters=3000, tol=1e-12)
    assert all(b >= a - 1e-9 for a, b in zip(res.trace, res.trace[1:]))
    assert V.elbo(fitted).total >= V.elbo(m).total
    _, res2 = V.fit(fitted, max_iters=50, tol=1e-12)
    assert abs(res2.fun - res.fun) < 1e-4


def test_objective_backs_off_where_bound_overflows():
    m, _ = _toy(5, n=20)
    f = V.objective(m)
    theta = m.pack()
    f0, _ = f(theta)
    far = theta.copy()
    far[-m.n:] = 10.0                       # lambda ~ 1e4 pushes log r past overflow
    far[m.kernel_f.n_params + m.kernel_g.n_params] = 15.0
    with pytest.raises(NumericalError):
        V.elbo(m.unpack(far))
    v, g = f(far)
    assert np.isfinite(v) and v < f0
    assert g @ (theta - far) > 0            # ascent direction points back
    assert not V.fit(m.unpack(theta), max_iters=30)[1].aborted


def test_two_regime_noise_ratio():
    # sd 0.1 by day, 1.0 by night, alternating half-day blocks
    rng = np.random.default_rng(5)
    t = np.arange(0, 4, 1 / 48)
    night = (t % 1.0) >= 0.5
    sd = np.where(night, 1.0, 0.1)
    y = np.sin(2 * np.pi * t / 4) + sd * rng.standard_normal(t.size)
    gm, _ = G.fit(G.ExactGPModel(K.se(1.0, 0.5) + K.white(0.3), t, y))
    m0 = V.initial_model(t, t, y, gm.kernel.without_white_noise(), K.default_noise_kernel(1),
                         gm.kernel.noise_variance())
    fitted, _ = V.fit(m0, max_iters=300)
    lp = V.predict_latent(fitted, t, t)
    s = np.exp(lp.mg / 2)
    assert s[night].mean() / s[~night].mean() > 3


def test_homoscedastic_noise_curve_is_flat():
    rng = np.random.default_rng(6)
    t = np.linspace(0, 5, 300)
    y = np.sin(2 * t) + 0.3 * rng.standard_normal(t.size)
    gm, _ = G.fit(G.ExactGPModel(K.se(1.0, 0.5) + K.white(0.1), t, y))
    m0 = V.initial_model(t, t, y, gm.kernel.without_white_noise(), K.default_noise_kernel(1),
                         gm.kernel.noise_variance())
    fitted, _ = V.fit(m0, max_iters=200)
    r = np.exp(V.predict_latent(fitted, t, t).mg)
    assert r.std() / r.mean() < 0.2


def test_predict_latent_limits():
    m, _ = _toy(7)
    # tiny noise: mean interpolates the targets
    t = np.arange(6.0)
    quiet = V.VHGPModel(K.se(1.0, 0.5), m.kernel_g, -25.0, np.zeros(6), t, t, np.cos(t))
    lp = V.predict_latent(quiet, t, t)
    np.testing.assert_allclose(lp.mf, np.cos(t), atol=1e-4)
    far = V.predict_latent(m, [1.0], [1e4])
    assert far.mg[0] == pytest.approx(m.mu0, abs=1e-12)
    assert far.vg[0] == pytest.approx(K.kdiag(m.kernel_g, [1e4])[0])
    lp = V.predict_latent(m, np.linspace(0, 3, 9), np.linspace(0, 3, 9))
    assert np.all(lp.vf > 0) and np.all(lp.vg >= 0)
    with pytest.raises(DataError):
        V.predict_latent(m, [0.0, 1.0], [0.0])


def test_predict_moments_examples():
    mk = lambda mf, vf, mg, vg: V.LatentPredictive(*map(np.asarray, (mf, vf, mg, vg)))  # noqa: E731
    assert V.predict_moments(mk(0.0, 1.0, 0.0, 0.0))[1] == pytest.approx(2.0)
    assert V.predict_moments(mk(0.0, 0.3, 1.0, 0.5))[1] == pytest.approx(3.7903, abs=1e-4)
    _, var = V.predict_moments(mk([0.0], [0.3], [-3.0], [0.0]))
    assert var[0] == pytest.approx(0.3 + math.exp(-3.0)) and var[0] > 0.3


def test_log_density_standard_normal():
    lp = V.LatentPredictive(np.array(0.0), np.array(0.5), np.array(math.log(0.5)), np.array(0.0))
    assert V.predictive_log_density(lp, 0.0) == pytest.approx(-0.918939, abs=1e-6)
    with pytest.raises(ConfigurationError):
        V.predictive_log_density(lp, 0.0, nodes=0)


def test_log_density_against_numerical_integral():
    from scipy import integrate, stats
    mf, vf, mg, vg, y = 0.3, 0.2, -0.5, 1.5, 1.4
    lp = V.LatentPredictive(*(np.array(v) for v in (mf, vf, mg, vg)))

    def integrand(g):
        return stats.norm.pdf(y, mf, math.sqrt(vf + math.exp(g))) * stats.norm.pdf(g, mg, math.sqrt(vg))
    ref = math.log(integrate.quad(integrand, mg - 12 * math.sqrt(vg), mg + 12 * math.sqrt(vg))[0])
    assert float(V.predictive_log_density(lp, y, nodes=50)) == pytest.approx(ref, abs=1e-8)


def test_interval_determinism_and_gaussian_case():
    lp = V.LatentPredictive(np.array(0.0), np.array(0.5), np.array(math.log(0.5)), np.array(0.0))
    lo, hi = V.predictive_interval(lp, 0.95, 100_000, seed=3)
    assert lo == pytest.approx(-1.96, abs=0.02) and hi == pytest.approx(1.96, abs=0.02)
    assert (lo, hi) == V.predictive_interval(lp, 0.95, 100_000, seed=3)
    with pytest.raises(ConfigurationError):
        V.predictive_interval(lp, 1.5)


def test_interval_widens_with_noise_uncertainty():
    base = dict(mf=np.zeros(2), vf=np.full(2, 0.1), mg=np.zeros(2))
    lo, hi = V.predictive_interval(V.LatentPredictive(vg=np.array([0.0, 1.0]), **base), 0.95, 20_000, 0)
    assert hi[1] - lo[1] > hi[0] - lo[0]


def test_shift_rho():
    np.testing.assert_array_equal(V.shift_rho([1.0, 2.0, 3.0], 1, 4), [2.0, 3.0, 0.0, 0.0])
    np.testing.assert_array_equal(V.shift_rho([1.0, 2.0, 3.0], 0, 2), [1.0, 2.0])


@pytest.mark.parametrize("dim", [1, 3])
def test_sliding_posterior_matches_full_recompute(dim):
    m, rng = _toy(8, n=60, dim=dim)
    full_t = np.concatenate([m.t[:, 0], np.sort(rng.uniform(3, 3.5, 5))])
    full_z = full_t[:, None] if dim == 1 else np.vstack([m.z, rng.uniform(0, 1, (5, dim))])
    full_y = np.concatenate([m.y, rng.standard_normal(5)])
    win = V.VHGPModel(m.kernel_f, m.kernel_g, m.mu0, m.rho[:50], m.t[:50], m.z[:50], m.y[:50])
    sp = V.SlidingPosterior.from_model(win)
    for a in range(1, 16):            # window [a, a + 50)
        sl = slice(a, a + 50)
        sp = sp.slide(full_t[sl], full_z[sl], full_y[sl], 1)
    ref = V.VHGPModel(m.kernel_f, m.kernel_g, m.mu0, sp.rho, sp.t, sp.z, sp.y)
    _, Sigma = V.variational_moments(ref)
    np.testing.assert_allclose(sp.Sigma, Sigma, atol=1e-9)
    np.testing.assert_allclose(sp.mu, ref.post.mu, atol=1e-9)
    ts, zs = full_t[-1:] + 0.01, full_z[-1:]
    a, b = sp.predict_latent(ts, zs), V.predict_latent(ref, ts, zs)
    for f in ("mf", "vf", "mg", "vg"):
        np.testing.assert_allclose(getattr(a, f), getattr(b, f), atol=1e-9)
    assert V.elbo(sp.to_model()).total == pytest.approx(V.elbo(ref).total, abs=1e-9)


def test_sliding_rejects_bad_offsets():
    m, _ = _toy(9, n=10)
    sp = V.SlidingPosterior.from_model(m)
    with pytest.raises(DataError):
        sp.slide(m.t, m.z, m.y, -1)
    with pytest.raises(DataError):
        sp.slide(m.t[:3], m.z[:3], m.y[:3], 2)


def test_validation():
    m, _ = _toy(10, n=5)
    with pytest.raises(DataError):
        V.VHGPModel(m.kernel_f, m.kernel_g, 0.0, np.zeros(1), m.t[:1], m.z[:1], m.y[:1])
    with pytest.raises(DataError):
        V.VHGPModel(m.kernel_f, m.kernel_g, 0.0, np.zeros(4), m.t, m.z, m.y)
    with pytest.raises(ConfigurationError):
        m.unpack(np.zeros(3))
    with pytest.raises(ConfigurationError):
        V.initial_model(m.t, m.z, m.y, m.kernel_f, m.kernel_g, 0.0)
