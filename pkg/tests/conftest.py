"""Shared fixtures: synthetic fronts, tiny configs and the acceptance summary."""
from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from bifire.solver import Grid, Snapshot

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# criterion number -> (passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


def well(x, a, b, depth, delta, top=1.0):
    """Smooth depletion well: ``top`` outside ``[a, b]``, ``top - depth`` inside."""
    return top - depth * 0.5 * (np.tanh((x - a) / delta) - np.tanh((x - b) / delta))


def front_1d(grid, rng, S_e0=0.1):
    """Random non-degenerate 1D front snapshot in physical units."""
    x = grid.x
    L = grid.lx
    peak = rng.uniform(0.35, 0.75) * L
    T = 300.0 + rng.uniform(800, 1600) * np.exp(-0.5 * ((x - peak) / rng.uniform(15, 40)) ** 2)
    a_e = rng.uniform(0.12, 0.3) * L
    b_e = peak + rng.uniform(10, 60)
    a_x = a_e + rng.uniform(0, 30)
    b_x = peak - rng.uniform(0, 40)
    S_e = well(x, a_e, b_e, S_e0 * rng.uniform(0.8, 1.0), rng.uniform(12, 30), S_e0)
    S_x = well(x, a_x, b_x, rng.uniform(0.5, 0.9), rng.uniform(12, 30))
    return Snapshot(grid, T, S_e, S_x, {"u_w": 5.0, "S_e0": S_e0}, "LF")


def front_2d(grid, rng, S_e0=0.1):
    """Random elliptical fire footprint on a 2D grid."""
    X, Y = np.meshgrid(grid.x, grid.y)
    cx = grid.lx * rng.uniform(0.45, 0.55)
    cy = grid.ly * rng.uniform(0.45, 0.55)
    rx, ry = rng.uniform(10, 16), rng.uniform(10, 16)
    r = np.sqrt(((X - cx) / rx) ** 2 + ((Y - cy) / ry) ** 2)
    T = 300.0 + 1500.0 * np.exp(-0.5 * ((r - 1.0) / 0.25) ** 2)
    burned = 0.5 * (1.0 - np.tanh((r - 1.0) / 0.15))
    S_x = 1.0 - 0.8 * burned
    S_e = S_e0 * (1.0 - 0.95 * burned)
    return Snapshot(grid, T, S_e, S_x, {"u_wx": 3.0, "u_wy": 2.0, "S_e0": S_e0, "alpha": 0.005}, "LF")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def grid_1d():
    return Grid.from_extent(1000.0, 10.0, 0.5, 10.0)


@pytest.fixture
def grid_2d():
    return Grid.from_extent(100.0, 2.0, 0.5, 10.0, ly=100.0)


def tiny_config_1d(**over):
    """Fast 1D config for end-to-end checks (seconds, not minutes)."""
    cfg = {
        "case": "1d",
        "lf_grid": {"lx": 1000, "dx": 10, "dt": 0.5, "t_final": 900},
        "hf_grid": {"lx": 1000, "dx": 5, "dt": 0.1, "t_final": 900},
        "physics": {},
        "lf_physics": {"radiation_enabled": False},
        "hf_physics": {"radiation_enabled": True},
        "ignition": {"amplitude": 900, "width": 15},
        "box": [{"name": "u_w", "lower": 4, "upper": 10},
                {"name": "S_e0", "lower": 0.04, "upper": 0.16}],
        "M": 12,
        "m": 3,
        "beta": 1.0,
        "lambda": 1e-6,
        "normalization": {"T_scale": 2400},
        "seeds": {"lhs": 3, "uq": 4},
    }
    cfg.update(over)
    return cfg
