import numpy as np
import pytest
from hypothesis import given, strategies as st

from bifire.errors import ConfigError
from bifire.sampling import ParamBox, lhs_sample, read_samples_csv, write_samples_csv

BOX = ParamBox((("u_w", 2.0, 12.0), ("S_e0", 0.04, 0.16)))


@given(st.integers(1, 60), st.integers(0, 2**31))
def test_lhs_one_point_per_stratum(M, seed):
    s = lhs_sample(BOX, M, seed)
    assert s.values.shape == (M, 2)
    for j, (lo, hi) in enumerate(zip(BOX.lower, BOX.upper)):
        u = (s.values[:, j] - lo) / (hi - lo)
        assert np.all((u >= 0) & (u < 1))
        assert sorted(np.floor(u * M).astype(int)) == list(range(M))


def test_lhs_reproducible_and_seed_sensitive():
    a, b, c = lhs_sample(BOX, 20, 7), lhs_sample(BOX, 20, 7), lhs_sample(BOX, 20, 8)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)


def test_lhs_documented_generator_stream():
    """Permutation then offsets per dimension, from PCG64(seed)."""
    rng = np.random.Generator(np.random.PCG64(5))
    expect = np.empty((6, 2))
    for j, (lo, hi) in enumerate(zip(BOX.lower, BOX.upper)):
        strata, off = rng.permutation(6), rng.random(6)
        expect[:, j] = lo + (strata + off) / 6 * (hi - lo)
    assert np.array_equal(lhs_sample(BOX, 6, 5).values, expect)


def test_box_validation():
    with pytest.raises(ConfigError):
        ParamBox((("a", 1.0, 1.0),))
    with pytest.raises(ConfigError):
        ParamBox((("a", 0, 1), ("a", 0, 2)))
    with pytest.raises(ConfigError):
        ParamBox(())
    with pytest.raises(ConfigError):
        lhs_sample(BOX, 0, 1)
    assert BOX.contains({"u_w": 2.0, "S_e0": 0.16})
    assert not BOX.contains({"u_w": 13.0, "S_e0": 0.1})


def test_samples_csv_roundtrip_is_exact(tmp_path):
    s = lhs_sample(BOX, 9, 3)
    write_samples_csv(s, tmp_path / "s.csv")
    r = read_samples_csv(tmp_path / "s.csv")
    assert r.names == s.names and np.array_equal(r.values, s.values)


def test_malformed_csv_reports_line(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("u_w,S_e0\n1,0.1\n2\n")
    with pytest.raises(ConfigError, match=":3:"):
        read_samples_csv(p)
    p.write_text("u_w,S_e0\n1,abc\n")
    with pytest.raises(ConfigError, match=":2:"):
        read_samples_csv(p)
