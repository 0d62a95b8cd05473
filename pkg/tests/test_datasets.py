import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hetgp import datasets as D
from hetgp.errors import DataError

FLAT = dict(se_amplitude=1e-3, periodic_amplitude=1e-3)


def _write(tmp_path, rows, header="timestamp,place_id,speed_kmh,sample_size_decile"):
    p = tmp_path / "s.csv"
    p.write_text("\n".join([header] + rows) + "\n")
    return p


def test_read_small_file(tmp_path):
    s = D.read_csv(_write(tmp_path, ["2015-01-05T00:00:00,a,60.5,3", "2015-01-05T00:05:00,a,61,4",
                                     "2015-01-05T00:10:00,a,59,4"]))
    assert len(s) == 3 and not s.missing.any()
    np.testing.assert_array_equal(s.decile, [3, 4, 4])


def test_empty_speed_is_missing(tmp_path):
    s = D.read_csv(_write(tmp_path, ["2015-01-05T00:00:00,a,60,3", "2015-01-05T00:05:00,a,,4"]))
    np.testing.assert_array_equal(s.missing, [False, True])


@pytest.mark.parametrize("rows, match", [
    (["2015-01-05T00:00:00,a,60,3", "2015-01-05T00:00:00,a,61,3"], ":3: .*duplicate"),
    (["2015-01-05T00:00:00,a,60,3", "2015-01-05T00:10:00,a,61,3"], "regular 5-minute grid"),
    (["2015-01-05T00:00:00,a,60,11"], "decile"),
    (["2015-01-05T00:00:00,a,fast,3"], ":2:"),
    (["2015-01-05T00:00:00,a,60"], "expected 4 fields"),
    (["2015-01-05T00:00:00,a,60,3", "2015-01-05T00:05:00,b,60,3"], "several place ids"),
])
def test_read_errors(tmp_path, rows, match):
    with pytest.raises(DataError, match=match):
        D.read_csv(_write(tmp_path, rows))


def test_bad_header(tmp_path):
    with pytest.raises(DataError, match="header"):
        D.read_csv(_write(tmp_path, ["2015-01-05T00:00:00,a,60,3"], header="time,speed"))


def test_series_round_trip(tmp_path):
    s, _ = D.generate_synthetic(D.SyntheticSpec(days=2, seed=4))
    p = D.write_csv(tmp_path / "x.csv", s)
    back = D.read_csv(p)
    np.testing.assert_array_equal(back.timestamps, s.timestamps)
    np.testing.assert_array_equal(back.missing, s.missing)
    np.testing.assert_allclose(back.speed[s.observed], s.speed[s.observed], rtol=0, atol=1e-9)


def test_mask_counts_and_determinism():
    s, _ = D.generate_synthetic(D.SyntheticSpec(days=1, seed=1, missing_fraction=0.0))
    s = s.slice(0, 100)
    m = D.mask_random(s, 0.5, seed=3)
    assert m.experiment_mask.sum() == 50
    np.testing.assert_array_equal(m.experiment_mask, D.mask_random(s, 0.5, 3).experiment_mask)
    with pytest.raises(DataError):
        D.mask_random(s.slice(0, 3), 0.9, 0)


def test_masks_avoid_missing_over_many_seeds():
    s, _ = D.generate_synthetic(D.SyntheticSpec(days=1, seed=2, missing_fraction=0.2))
    k = int(math.floor(0.5 * s.observed.sum() + 0.5))
    for seed in range(1000):
        m = D.mask_random(s, 0.5, seed).experiment_mask
        assert not np.any(m & s.missing) and m.sum() == k


def test_series_validation():
    ts = np.datetime64("2015-01-05T00:00") + np.arange(3) * D.STEP
    with pytest.raises(DataError):
        D.SpeedSeries("a", ts, np.ones(3), np.array([1, 2, 3.5]))
    with pytest.raises(DataError):
        D.SpeedSeries("a", ts[::-1], np.ones(3), np.ones(3))
    with pytest.raises(DataError):
        D.SpeedSeries("a", ts, np.array([1, np.nan, 1]), np.ones(3),
                      experiment_mask=np.array([0, 1, 0], bool))


def test_blocks():
    assert [b - a for a, b in D.block_ranges(8640, 15)] == [4320, 4320]
    assert [b - a for a, b in D.block_ranges(16 * 288, 15)] == [4320, 288]
    assert D.block_ranges(500, 30) == [(0, 500)]
    s, _ = D.generate_synthetic(D.SyntheticSpec(days=16))
    assert [len(b) for b in D.split_blocks(s, 15)] == [4320, 288]


def test_noiseless_synthetic_equals_truth():
    s, truth = D.generate_synthetic(D.SyntheticSpec(days=2, noise_sd=(0.0,) * 10))
    np.testing.assert_array_equal(s.speed[s.observed], truth.f_true[s.observed])


def test_per_decile_noise_sd():
    spec = D.SyntheticSpec(days=70, seed=5, missing_fraction=0.0)
    s, truth = D.generate_synthetic(spec)
    resid = s.speed - truth.f_true
    for d in range(1, 11):
        sel = s.decile == d
        assert sel.sum() >= 2000
        assert resid[sel].std() == pytest.approx(spec.noise_sd[d - 1], rel=0.1)


def test_synthetic_file_determinism(tmp_path):
    a, _ = D.generate_synthetic(D.SyntheticSpec(days=1, seed=9))
    b, _ = D.generate_synthetic(D.SyntheticSpec(days=1, seed=9))
    pa, pb = D.write_csv(tmp_path / "a.csv", a), D.write_csv(tmp_path / "b.csv", b)
    assert pa.read_bytes() == pb.read_bytes()
    D.read_csv(pa)


def test_synthetic_spec_validation():
    with pytest.raises(DataError):
        D.SyntheticSpec(days=0.5)
    with pytest.raises(DataError):
        D.SyntheticSpec(noise_sd=(1.0,) * 9)


def test_decile_profile_correlations():
    mono = tuple(np.linspace(1.0, 0.1, 10))
    s, _ = D.generate_synthetic(D.SyntheticSpec(days=35, noise_sd=mono, **FLAT))
    assert D.decile_noise_profile(s)["correlation"] < -0.9
    s, _ = D.generate_synthetic(D.SyntheticSpec(days=35, noise_sd=(1.0,) * 10, **FLAT))
    assert len(s) >= 10_000
    assert abs(D.decile_noise_profile(s)["correlation"]) < 0.5
    one = D.SpeedSeries("a", s.timestamps[:50], s.speed[:50], np.full(50, 3.0))
    with pytest.raises(DataError):
        D.decile_noise_profile(one)


def test_predictions_csv(tmp_path):
    p = D.write_predictions_csv(tmp_path / "e.csv", [])
    assert p.read_text() == ",".join(D.PREDICTION_HEADER) + "\n"
    row = {"timestamp": np.datetime64("2015-01-05T07:00"), "y_true": 61.123456789,
           "pred_mean": 60.5, "pred_var": 2.25, "lower95": 57.56, "upper95": 63.44,
           "log_density": -1.1, "masked": True}
    p = D.write_predictions_csv(tmp_path / "r.csv", [row, dict(row, y_true=None, masked=False)])
    lines = p.read_text().splitlines()
    assert len(lines[1].split(",")) == 8
    back = D.read_predictions_csv(p)
    assert back["y_true"][0] == pytest.approx(61.123456789, abs=1e-9)
    assert math.isnan(back["y_true"][1])
    np.testing.assert_array_equal(back["masked"], [True, False])


@given(seed=st.integers(0, 1000), frac=st.floats(0.05, 0.95))
def test_masked_series_round_trip(tmp_path_factory, seed, frac):
    s, _ = D.generate_synthetic(D.SyntheticSpec(days=1, seed=seed % 7))
    m = D.mask_random(s, frac, seed)
    out = tmp_path_factory.mktemp("rt") / "m.csv"
    back = D.read_csv(D.write_csv(out, m)).with_mask(m.experiment_mask)
    np.testing.assert_array_equal(back.visible, m.visible)
