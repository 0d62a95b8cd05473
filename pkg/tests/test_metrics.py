import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hetgp import metrics as M
from hetgp.errors import DataError


def test_nlpd():
    assert M.nlpd([-0.5 * math.log(2 * math.pi)]) == pytest.approx(0.918939, abs=1e-6)
    assert M.nlpd([-1.3, -1.3]) == M.nlpd([-1.3])
    with pytest.raises(DataError, match="1, 3"):
        M.nlpd([0.0, math.nan, 1.0, math.inf])


def test_icp():
    assert M.icp([1, 2, 3], [0, 0, 2], [2, 1, 4]) == pytest.approx(2 / 3)
    assert M.icp([1, 2], [-10, -10], [10, 10]) == 1.0
    assert M.icp([1, 2], [1, 2], [1, 2]) == 1.0


def test_mil_and_rmil():
    assert M.mil([0, 0, 0], [2, 1, 2]) == pytest.approx(5 / 3)
    assert M.mil([1, 2], [1, 2]) == 0.0
    assert M.rmil([1.0], [0.5], [0.0], [2.0]) == 4.0
    assert M.rmil([1, 2], [0, 0], [1, 2], [1, 2]) == 0.0
    assert M.rmil([1.0], [1.0], [0.0], [2.0], eps=1e-3) == pytest.approx(2.0 / 1e-3)


def test_point_errors():
    assert M.point_errors([1, 2], [2, 4])["mae"] == 1.5
    perfect = M.point_errors([1, 2, 5], [1, 2, 5])
    assert perfect == {"mae": 0.0, "rae": 0.0, "r2": 1.0}
    assert M.point_errors([1, 2, 6], [3, 3, 3])["r2"] == pytest.approx(0.0)
    const = M.point_errors([2, 2], [1, 3])
    assert const["rae"] is None and const["r2"] is None


def test_day_mask_boundaries():
    ts = np.array(["2015-01-05T06:55", "2015-01-05T07:00", "2015-01-05T21:55",
                   "2015-01-05T22:00"], dtype="datetime64[m]")
    np.testing.assert_array_equal(M.day_period_mask(ts), [False, True, True, False])


def test_empty_and_mismatched_inputs():
    for f, args in ((M.icp, ([], [], [])), (M.mil, ([], [])), (M.nlpd, ([],)),
                    (M.point_errors, ([], []))):
        with pytest.raises(DataError):
            f(*args)
    with pytest.raises(DataError):
        M.icp([1, 2], [0], [3])


def brute(y, yh, lo, hi, ld, eps):
    n = len(y)
    ybar = sum(y) / n
    inside = sum(1 for i in range(n) if lo[i] <= y[i] <= hi[i])
    sad = sum(abs(y[i] - ybar) for i in range(n))
    ssd = sum((y[i] - ybar) ** 2 for i in range(n))
    return {
        "icp": inside / n,
        "mil": sum(hi[i] - lo[i] for i in range(n)) / n,
        "rmil": sum((hi[i] - lo[i]) / max(abs(y[i] - yh[i]), eps) for i in range(n)) / n,
        "mae": sum(abs(yh[i] - y[i]) for i in range(n)) / n,
        "rae": 100 * sum(abs(yh[i] - y[i]) for i in range(n)) / sad,
        "r2": 1 - sum((yh[i] - y[i]) ** 2 for i in range(n)) / ssd,
        "nlpd": -sum(ld) / n,
    }


def test_against_brute_force_on_random_instances():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n = int(rng.integers(2, 30))
        y = rng.normal(0, 3, n)
        yh = y + rng.normal(0, 1, n)
        half = rng.uniform(0, 3, n)
        lo, hi = yh - half, yh + half
        ld = rng.normal(-1, 1, n)
        rep = M.evaluate("all", y, yh, y, yh, lo, hi, ld)
        ref = brute(list(y), list(yh), list(lo), list(hi), list(ld), M.RMIL_EPS)
        for k, v in ref.items():
            assert getattr(rep, k) == pytest.approx(v, rel=1e-12, abs=1e-12), k


@given(st.integers(0, 10_000), st.floats(0, 5))
def test_icp_monotone_in_width(seed, extra):
    rng = np.random.default_rng(seed)
    y = rng.normal(size=20)
    c = rng.normal(size=20)
    h = rng.uniform(0, 1, 20)
    assert M.icp(y, c - h - extra, c + h + extra) >= M.icp(y, c - h, c + h)


@given(st.integers(0, 10_000), st.floats(0.01, 100) | st.floats(-100, -0.01))
def test_rae_scale_invariant(seed, c):
    rng = np.random.default_rng(seed)
    y, yh = rng.normal(size=10), rng.normal(size=10)
    assert M.point_errors(c * y, c * yh)["rae"] == pytest.approx(M.point_errors(y, yh)["rae"],
                                                                 rel=1e-9)


def test_report_round_trip_and_validation():
    rep = M.evaluate("day", [1, 2, 3], [1, 2, 4], [0, 1, 2], [0, 1, 3], [-1, 0, 1], [1, 2, 3],
                     [-1.0, -1.2, -0.8])
    assert M.MetricsReport.from_dict(rep.to_dict()) == rep
    point = M.evaluate("all", [1, 2], [1, 3])
    assert point.nlpd is None and point.icp is None
    with pytest.raises(DataError):
        M.MetricsReport("all", 0, 0.0, None, None)
    with pytest.raises(DataError):
        M.MetricsReport("all", 1, 0.0, None, None, icp=1.5)


def test_is_better():
    assert M.is_better(0.1, None) and M.is_better(0.1, 0.2)
    assert not M.is_better(None, 0.2) and not M.is_better(math.nan, 0.2)
    assert not M.is_better(0.3, 0.2)
