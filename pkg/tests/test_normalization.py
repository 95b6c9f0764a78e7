import numpy as np
import pytest
from hypothesis import given, strategies as st

from bifire.errors import ConfigError
from bifire.normalization import Normalization, denormalize, normalize
from bifire.solver import Grid, Snapshot

NORM = Normalization(300.0, 2400.0, 0.16, 1.0)
G = Grid.from_extent(100.0, 10.0, 1.0, 1.0)


@given(st.lists(st.floats(300, 2400), min_size=10, max_size=10),
       st.lists(st.floats(0, 0.16), min_size=10, max_size=10),
       st.lists(st.floats(0, 1), min_size=10, max_size=10))
def test_roundtrip_in_range(T, S_e, S_x):
    v = Snapshot(G, T, S_e, S_x)
    w = denormalize(normalize(v, NORM), NORM)
    for a, b in zip(v.fields, w.fields):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


def test_known_values_and_clipping():
    v = Snapshot(G, [300, 1350, 2400, 3000] + [300] * 6, [0.08] * 10, [0.5] * 10)
    u = normalize(v, NORM)
    np.testing.assert_allclose(u.T[0, :4], [0.0, 0.5, 1.0, 1.0])
    np.testing.assert_allclose(u.S_e, 0.5)
    np.testing.assert_allclose(u.S_x, 0.5)


def test_invalid_scales():
    with pytest.raises(ConfigError):
        Normalization(300.0, 200.0, 0.1)
    with pytest.raises(ConfigError):
        Normalization(300.0, 2000.0, 0.0)
