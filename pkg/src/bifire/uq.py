"""Error metrics, scalar quantities of interest and kernel density estimates."""
from __future__ import annotations

import csv
import logging
import math
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BifireError, UndefinedMetricError
from .sampling import lhs_sample

log = logging.getLogger(__name__)

QOIS = ("t_max", "em", "ba")
TIERS = ("LF", "HF", "CF", "MF")


def relative_error(v_h, v_x):
    """``||v_h - v_x|| / ||v_h||``; the reference ``v_h`` sets the scale."""
    v_h = np.asarray(v_h, dtype=np.float64)
    v_x = np.asarray(v_x, dtype=np.float64)
    if v_h.shape != v_x.shape:
        raise UndefinedMetricError(f"shape mismatch {v_h.shape} vs {v_x.shape}")
    den = float(np.sum(v_h * v_h))
    if den == 0.0:
        raise UndefinedMetricError("reference field has zero norm")
    return math.sqrt(float(np.sum((v_h - v_x) ** 2)) / den)


@dataclass(frozen=True)
class QoiSample:
    t_max: float
    em: float
    ba: float
    z: dict = field(default_factory=dict)
    tier: str = ""

    def as_tuple(self):
        return (self.t_max, self.em, self.ba)


def compute_qois(v, S_e0, S_x0=1.0, tier=None):
    """Peak temperature, evaporated moisture and burned extent (midpoint rule)."""
    cell = v.grid.cell_measure
    t_max = float(np.max(v.T))
    em = float(np.sum(S_e0 - v.S_e) * cell)
    ba = float(np.sum(1.0 - v.S_x / S_x0) * cell)
    return QoiSample(t_max, em, ba, dict(v.z), tier or v.fidelity)


# --------------------------------------------------------------------------
# kernel density estimation
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DensityEstimate:
    samples: np.ndarray
    bandwidth: float
    grid: np.ndarray
    density: np.ndarray

    def integral(self):
        return float(np.trapezoid(self.density, self.grid))


def silverman_bandwidth(samples):
    """``0.9 * min(std, IQR/1.34) * N**(-1/5)``, floored at ``1e-6 * range``.

    A zero spread measure is replaced by the other one. Data whose range is
    below float resolution (``eps * max(|x|, 1)``) count as degenerate and
    use ``1e-6 * max(|mean|, 1)`` as the floor.
    """
    x = np.asarray(samples, dtype=np.float64).ravel()
    n = x.size
    if n == 0:
        raise UndefinedMetricError("KDE needs at least one sample")
    spread = float(np.ptp(x))
    if spread <= np.finfo(np.float64).eps * max(float(np.abs(x).max()), 1.0):
        return 1e-6 * max(abs(float(x.mean())), 1.0)
    floor = 1e-6 * spread
    if n < 2:
        return floor
    std = float(np.std(x, ddof=1))
    q75, q25 = np.percentile(x, [75, 25])
    iqr = float(q75 - q25) / 1.34
    pos = [s for s in (std, iqr) if s > 0]
    scale = min(pos) if pos else 0.0
    return max(0.9 * scale * n ** -0.2, floor)


def gaussian_kde(samples, grid, bandwidth=None):
    """``f(x) = 1/(N h) * sum_i phi((x - x_i)/h)`` evaluated on ``grid``."""
    x = np.asarray(samples, dtype=np.float64).ravel()
    g = np.asarray(grid, dtype=np.float64)
    h = silverman_bandwidth(x) if bandwidth is None else float(bandwidth)
    u = (g[:, None] - x[None, :]) / h
    dens = np.exp(-0.5 * u * u).sum(axis=1) / (x.size * h * math.sqrt(2.0 * math.pi))
    return DensityEstimate(x, h, g, dens)


def density_grid(sample_sets, n_max=20001, per_h=8):
    """Sorted grid covering every sample set to +-5 bandwidths.

    The base grid is uniform with at most ``n_max`` points. When its spacing
    exceeds ``h / per_h`` for some set (a tight cluster next to outliers),
    patches of spacing ``h / per_h`` are added over +-5 ``h`` around each of
    that set's samples, so every kernel is resolved by the trapezoid rule.
    """
    sets = []
    lo, hi, h_min = np.inf, -np.inf, np.inf
    for s in sample_sets:
        s = np.asarray(s, dtype=np.float64).ravel()
        if s.size == 0:
            continue
        h = silverman_bandwidth(s)
        sets.append((s, h))
        lo, hi, h_min = min(lo, s.min() - 5 * h), max(hi, s.max() + 5 * h), min(h_min, h)
    if not sets:
        raise UndefinedMetricError("no samples to build a density grid")
    n = int(min(n_max, max(201, math.ceil((hi - lo) / h_min * per_h) + 1)))
    base = np.linspace(lo, hi, n)
    spacing = (hi - lo) / (n - 1)
    patch = np.linspace(-5.0, 5.0, 10 * per_h + 1)
    parts = [base]
    for s, h in sets:
        if spacing > h / per_h:
            parts.append((np.unique(s)[:, None] + h * patch[None, :]).ravel())
    if len(parts) == 1:
        return base
    return np.unique(np.concatenate(parts))


def l1_distance(a, b):
    """Trapezoid L1 distance of two densities on the same grid."""
    if a.grid.shape != b.grid.shape or not np.allclose(a.grid, b.grid):
        raise UndefinedMetricError("densities live on different grids")
    return float(np.trapezoid(np.abs(a.density - b.density), a.grid))


# --------------------------------------------------------------------------
# Monte Carlo propagation
# --------------------------------------------------------------------------

@dataclass
class UqResult:
    names: tuple
    points: np.ndarray
    rows: list  # (index, tier, QoiSample | None, error message | None)
    densities: dict  # (qoi, tier) -> DensityEstimate
    timings: dict

    def values(self, tier, qoi):
        k = QOIS.index(qoi)
        return np.array([q.as_tuple()[k] for _, t, q, _ in self.rows if t == tier and q is not None])


def propagate(model, box, N, seed, with_hf=False):
    """Evaluate every tier on an LHS test set and estimate QoI densities.

    One LF run per point feeds the LF, CF and MF tiers.  HF is optional as it
    dominates the cost.  Failures are recorded per sample and skipped.
    """
    from . import bifidelity as bf

    if N < 1:
        raise BifireError("propagate needs N >= 1")
    if N < 2:
        warnings.warn("a single test point gives floor-bandwidth densities", RuntimeWarning, stacklevel=2)
    tests = lhs_sample(box, N, seed)
    tiers = ("LF", "HF", "CF", "MF") if with_hf else ("LF", "CF", "MF")
    S_x0 = model.config.hf_params.S_x0
    rows, timings = [], {t: [] for t in tiers}
    for i, z in enumerate(tests.rows()):
        S_e0 = z["S_e0"]
        try:
            t0 = time.perf_counter()
            v_lf = bf.run_lf(model, z)
            t_lf = time.perf_counter() - t0
        except BifireError as exc:
            for t in tiers:
                rows.append((i, t, None, str(exc)))
            continue
        timings["LF"].append(t_lf)
        rows.append((i, "LF", compute_qois(v_lf, S_e0, S_x0, "LF"), None))
        for tier, fn in (("CF", bf.conventional_from_lf), ("MF", bf.mapped_from_lf)):
            try:
                t0 = time.perf_counter()
                v = fn(model, v_lf)
                timings[tier].append(t_lf + time.perf_counter() - t0)
                rows.append((i, tier, compute_qois(v, S_e0, S_x0, tier), None))
            except BifireError as exc:
                rows.append((i, tier, None, str(exc)))
        if with_hf:
            try:
                t0 = time.perf_counter()
                v = bf.hf_simulate(model, z)
                timings["HF"].append(time.perf_counter() - t0)
                rows.append((i, "HF", compute_qois(v, S_e0, S_x0, "HF"), None))
            except BifireError as exc:
                rows.append((i, "HF", None, str(exc)))
    rows.sort(key=lambda r: (r[0], TIERS.index(r[1])))
    res = UqResult(tests.names, tests.values, rows, {}, timings)
    res.densities = estimate_densities(res, tiers)
    failures = sum(1 for r in rows if r[2] is None)
    if failures:
        log.warning("%d tier evaluations failed", failures)
    return res


def estimate_densities(res, tiers):
    out = {}
    for qoi in QOIS:
        sets = {t: res.values(t, qoi) for t in tiers}
        sets = {t: s for t, s in sets.items() if s.size}
        if not sets:
            continue
        grid = density_grid(list(sets.values()))
        for t, s in sets.items():
            out[(qoi, t)] = gaussian_kde(s, grid)
    return out


def write_qoi_csv(res, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", *res.names, "tier", *QOIS])
        for i, tier, q, err in res.rows:
            vals = q.as_tuple() if q is not None else (math.nan,) * 3
            w.writerow([i, *(f"{v:.17g}" for v in res.points[i]), tier, *(f"{v:.17g}" for v in vals)])


def write_density_csvs(res, directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for (qoi, tier), d in sorted(res.densities.items()):
        path = directory / f"{qoi}_{tier}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "density"])
            for x, y in zip(d.grid, d.density):
                w.writerow([f"{x:.17g}", f"{y:.17g}"])
        written.append(path)
    return written
