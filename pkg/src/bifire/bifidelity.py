"""Bi-fidelity surrogate: greedy node selection, bases and online reconstruction.

Offline, ``M`` cheap LF runs are mapped to the reference domain and stacked with
weighted geometric descriptors; a pivoted Cholesky factorisation of their
Gramian picks ``m`` nodes where HF runs are performed.  Online, one LF run is
projected onto the LF basis (per state variable, ridge regularised) and the
same coefficients are applied to the HF basis, then mapped back.

The conventional (CF) variant uses the identity in place of the mapping and
selects its own nodes from the unmapped LF Gramian.
"""
from __future__ import annotations

import hashlib
import json
import logging
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import solve_triangular

from . import io
from .config import RunConfig
from .errors import (
    ConfigError,
    DegenerateFrontError,
    DegenerateIndicatorError,
    IllConditionedError,
    RankDeficiencyError,
)
from .mapping import (
    ReferenceConfig,
    apply_map,
    apply_unmap,
    build_reference,
    compute_descriptors,
    descriptor_class,
    fit_descriptor_regression,
    predict_hf_descriptors,
    resample,
    DescriptorRegression,
)
from .normalization import Normalization, denormalize, normalize
from .sampling import SampleSet, lhs_sample
from .solver import Snapshot, simulate

log = logging.getLogger(__name__)

__all__ = [
    "normalize", "denormalize", "snapshot_matrix", "gramian", "select_nodes",
    "project_coefficients", "offline_train", "online_predict", "conventional_predict",
    "load_model", "BiFiModel",
]

COND_WARN = 1e8
COND_ERROR = 1e12
PIVOT_FLOOR = 1e-12
TIE_RTOL = 1e-10
MODEL_VERSION = 1


# --------------------------------------------------------------------------
# linear algebra
# --------------------------------------------------------------------------

def snapshot_matrix(snaps):
    """Columns are flattened ``[T, S_e, S_x]`` of each snapshot."""
    return np.column_stack([np.concatenate([f.ravel() for f in v.fields]) for v in snaps])


def standardize(D):
    """Zero-mean, unit-variance columns; constant columns are only centred."""
    D = np.asarray(D, dtype=np.float64)
    mean = D.mean(axis=0)
    std = D.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    return (D - mean) / std, mean, std


def augmented_matrix(V, D, beta):
    """Stack snapshot columns with ``beta``-weighted standardized descriptors."""
    Z, _, _ = standardize(D)
    return np.vstack([V, beta * Z.T])


def gramian(A):
    """``A.T @ A`` with exact symmetry enforced."""
    A = np.asarray(A, dtype=np.float64)
    G = A.T @ A
    return 0.5 * (G + G.T)


@dataclass(frozen=True)
class NodeSelection:
    indices: tuple
    pivots: tuple  # residual diagonal at each chosen pivot
    cond: float


def select_nodes(G, m, floor=PIVOT_FLOOR, tie_rtol=TIE_RTOL):
    """First ``m`` pivots of a diagonally pivoted Cholesky factorisation of ``G``.

    Each pivot is the column with the largest remaining residual diagonal,
    i.e. the snapshot farthest from the span of those already chosen.
    Residuals within ``tie_rtol`` of the maximum count as ties and the lowest
    index wins.  Selection stops with :class:`RankDeficiencyError` when the
    largest residual falls below ``floor * max(diag(G))``.
    """
    G = np.asarray(G, dtype=np.float64)
    M = G.shape[0]
    if G.shape != (M, M):
        raise ConfigError("Gramian must be square")
    if not 1 <= m <= M:
        raise ConfigError(f"cannot select {m} nodes from {M} columns")
    d = np.diag(G).copy()
    tol = floor * max(d.max(), 0.0)
    L = np.zeros((M, m))
    chosen, pivots = [], []
    free = np.ones(M, dtype=bool)
    for k in range(m):
        r = np.where(free, d, -np.inf)
        top = r.max()
        if not top > tol:
            raise RankDeficiencyError(k, m)
        j = int(np.flatnonzero(r >= top - tie_rtol * abs(top))[0])
        col = (G[:, j] - L[:, :k] @ L[j, :k]) / np.sqrt(d[j])
        L[:, k] = col
        d = np.maximum(d - col * col, 0.0)
        d[j] = 0.0
        free[j] = False
        chosen.append(j)
        pivots.append(float(top))
    cond = float(np.linalg.cond(G[np.ix_(chosen, chosen)]))
    if cond > COND_ERROR:
        raise IllConditionedError(f"selected Gram block condition number {cond:.3g} exceeds {COND_ERROR:g}")
    if cond > COND_WARN:
        warnings.warn(f"selected Gram block condition number {cond:.3g}", RuntimeWarning, stacklevel=2)
    log.info("selected %d nodes, Gram block condition number %.3g", m, cond)
    return NodeSelection(tuple(chosen), tuple(pivots), cond)


class RidgeProjector:
    """Factorised ridge problem for a fixed basis ``B``.

    The QR factorisation of ``[B; sqrt(lam) I]`` is computed once, so each
    target costs one ``Q.T @ t`` and a triangular solve.  Stacking avoids
    squaring the condition number of ``B`` as the normal equations would.
    """

    def __init__(self, B, lam):
        B = np.asarray(B, dtype=np.float64)
        if B.ndim == 1:
            B = B[:, None]
        n, m = B.shape
        if m == 0:
            raise ConfigError("empty basis")
        if lam < 0:
            raise ConfigError("lambda must be non-negative")
        Q, R = np.linalg.qr(np.vstack([B, np.sqrt(lam) * np.eye(m)]))
        diag = np.abs(np.diag(R))
        if diag.min() <= 1e-13 * max(diag.max(), 1e-300):
            raise IllConditionedError("projection system is singular; use lambda > 0")
        self.n = n
        self.Qt = np.ascontiguousarray(Q[:n].T)  # rows of the zero block never contribute
        self.R = R

    def solve(self, t):
        t = np.asarray(t, dtype=np.float64).ravel()
        if t.size != self.n:
            raise ConfigError(f"target length {t.size} does not match basis rows {self.n}")
        return solve_triangular(self.R, self.Qt @ t)


def project_coefficients(B, t, lam):
    """Ridge coefficients solving ``(B.T B + lam I) C = B.T t``."""
    return RidgeProjector(B, lam).solve(t)


def reconstruct(lf_basis, hf_basis, target, lam, projectors=None):
    """Per-variable projection onto ``lf_basis``; same coefficients on ``hf_basis``.

    Bases are ``(3, n, m)``; ``target`` is ``(3, n)``.  Returns the HF fields
    ``(3, n)`` and the coefficient matrix ``(3, m)``.
    """
    if projectors is None:
        projectors = [RidgeProjector(lf_basis[k], lam) for k in range(3)]
    C = np.array([projectors[k].solve(target[k]) for k in range(3)])
    return np.einsum("knm,km->kn", hf_basis, C), C


def _split(V, n_var):
    """``(3n, m)`` stacked columns -> ``(3, n, m)``."""
    return V.reshape(3, n_var, -1)


# --------------------------------------------------------------------------
# ensembles
# --------------------------------------------------------------------------

def _run_one(args):
    grid, params, z, ignition, fidelity, path, provenance = args
    t0 = time.perf_counter()
    snap = simulate(grid, params, z, ignition, fidelity)
    elapsed = time.perf_counter() - t0
    io.write_snapshot(snap, path, provenance)
    return elapsed


def run_key(grid, params, ignition, z):
    """Digest of everything that determines one simulation's output."""
    blob = json.dumps({"grid": grid.to_dict(), "params": params.to_dict(),
                       "ignition": [ignition.amplitude, ignition.width, ignition.center],
                       "z": {k: float(v) for k, v in z.items()}}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def run_ensemble(grid, params, ignition, samples, indices, directory, prefix, fidelity, workers=1):
    """Simulate ``samples`` rows ``indices`` into ``directory``; skip valid files.

    Returns ``{index: seconds}`` for the runs actually performed.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    jobs = []
    for i in indices:
        path = directory / f"{prefix}_{i:05d}.pyro"
        key = run_key(grid, params, ignition, samples.row(i))
        if io.is_valid_snapshot(path) and io.read_provenance(path).get("run_key") == key:
            continue
        prov = {"sample_index": int(i), "fidelity": fidelity, "run_key": key}
        jobs.append((i, (grid, params, samples.row(i), ignition, fidelity, path, prov)))
    if not jobs:
        return {}
    log.info("%s: %d runs to do (%d cached)", fidelity, len(jobs), len(indices) - len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            times = list(pool.map(_run_one, [a for _, a in jobs]))
    else:
        times = [_run_one(a) for _, a in jobs]
    return {int(i): t for (i, _), t in zip(jobs, times)}


def load_ensemble(directory, prefix, indices):
    return [io.read_snapshot(Path(directory) / f"{prefix}_{i:05d}.pyro") for i in indices]


def _merge_timings(out_dir, key, new):
    path = Path(out_dir) / "timings.json"
    data = json.loads(path.read_text()) if path.exists() else {}
    bucket = data.setdefault(key, {})
    bucket.update({str(k): v for k, v in new.items()})
    path.write_text(json.dumps(data, indent=1, sort_keys=True))


# --------------------------------------------------------------------------
# model
# --------------------------------------------------------------------------

@dataclass(eq=False)
class BiFiModel:
    """Trained surrogate.  Bases are ``(3, n_ref, m)`` on the reference grid."""

    config: RunConfig
    ref: ReferenceConfig
    norm: Normalization
    samples: SampleSet
    gamma: tuple
    gamma_cf: tuple
    lf_basis: np.ndarray
    hf_basis: np.ndarray
    lf_basis_cf: np.ndarray
    hf_basis_cf: np.ndarray
    regression: DescriptorRegression
    lf_descriptors: np.ndarray
    hf_descriptors: np.ndarray
    selection: dict = field(default_factory=dict)
    flagged: tuple = ()

    @property
    def lam(self):
        return self.config.lam

    def projectors(self, kind):
        """Cached per-variable :class:`RidgeProjector` for ``"mf"`` or ``"cf"``."""
        cache = self.__dict__.setdefault("_projectors", {})
        if kind not in cache:
            basis = self.lf_basis if kind == "mf" else self.lf_basis_cf
            cache[kind] = [RidgeProjector(basis[k], self.lam) for k in range(3)]
        return cache[kind]

    @property
    def dim(self):
        return self.config.dim

    def manifest(self):
        return {
            "version": MODEL_VERSION,
            "config": self.config.raw,
            "reference": self.ref.to_dict(),
            "normalization": self.norm.to_dict(),
            "samples": {"names": list(self.samples.names), "seed": self.samples.seed,
                        "values": self.samples.values.tolist()},
            "gamma": list(self.gamma),
            "gamma_cf": list(self.gamma_cf),
            "regression": self.regression.to_dict(),
            "lf_descriptors": self.lf_descriptors.tolist(),
            "hf_descriptors": self.hf_descriptors.tolist(),
            "selection": self.selection,
            "flagged_fronts": list(self.flagged),
        }


def _to_unit(v, norm):
    return normalize(v, norm)


def _mapped_lf(v_lf, model_ref, norm):
    """Normalise an LF snapshot and pull it into the reference domain."""
    v = _to_unit(v_lf, norm)
    d = compute_descriptors(v, model_ref)
    return apply_map(v, d, model_ref), d


def offline_train(cfg, out_dir=None, workers=None):
    """Run the full offline stage and persist the model under ``out_dir``."""
    if not isinstance(cfg, RunConfig):
        cfg = RunConfig.from_dict(cfg)
    out = Path(out_dir) if out_dir is not None else cfg.output_dir
    workers = workers or cfg.workers
    out.mkdir(parents=True, exist_ok=True)
    lf_grid, hf_grid = cfg.lf_grid, cfg.hf_grid
    norm = cfg.normalization
    samples = lhs_sample(cfg.box, cfg.M, cfg.seeds["lhs"])
    all_idx = list(range(cfg.M))

    t = run_ensemble(lf_grid, cfg.lf_params, cfg.ignition, samples, all_idx, out / "lf", "lf", "LF", workers)
    _merge_timings(out, "lf", t)
    lf_unit = [_to_unit(v, norm) for v in load_ensemble(out / "lf", "lf", all_idx)]

    ind = cfg.indicator
    ref = build_reference(lf_unit, hf_grid, **ind)
    D_lf = np.empty((cfg.M, len(descriptor_class(cfg.dim).NAMES)))
    flagged = []
    V_ref = np.empty((3 * hf_grid.nx * hf_grid.ny, cfg.M))
    for i, v in enumerate(lf_unit):
        d = compute_descriptors(v, ref)
        if getattr(d, "flags", ()):
            flagged.append(i)
        D_lf[i] = d.as_array()
        V_ref[:, i] = snapshot_matrix([apply_map(v, d, ref)])[:, 0]
    if flagged:
        log.warning("%d LF training fronts used the edge fallback", len(flagged))

    sel = select_nodes(gramian(augmented_matrix(V_ref, D_lf, cfg.beta)), cfg.m)
    gamma = list(sel.indices)
    lf_basis = _split(V_ref[:, gamma], hf_grid.nx * hf_grid.ny).copy()
    del V_ref

    V_cf = snapshot_matrix([resample(v, hf_grid) for v in lf_unit])
    sel_cf = select_nodes(gramian(V_cf), cfg.m)
    gamma_cf = list(sel_cf.indices)
    lf_basis_cf = _split(V_cf[:, gamma_cf], hf_grid.nx * hf_grid.ny).copy()
    del V_cf

    hf_idx = sorted(set(gamma) | set(gamma_cf))
    t = run_ensemble(hf_grid, cfg.hf_params, cfg.ignition, samples, hf_idx, out / "hf", "hf", "HF", workers)
    _merge_timings(out, "hf", t)
    hf_unit = dict(zip(hf_idx, (_to_unit(v, norm) for v in load_ensemble(out / "hf", "hf", hf_idx))))

    hf_mapped, D_hf = [], []
    for i in gamma:
        d = compute_descriptors(hf_unit[i], ref)
        D_hf.append(d.as_array())
        hf_mapped.append(apply_map(hf_unit[i], d, ref))
    D_hf = np.array(D_hf)
    hf_basis = _split(snapshot_matrix(hf_mapped), hf_grid.nx * hf_grid.ny)
    hf_basis_cf = _split(snapshot_matrix([hf_unit[i] for i in gamma_cf]), hf_grid.nx * hf_grid.ny)
    with warnings.catch_warnings():
        warnings.simplefilter("always")
        regression = fit_descriptor_regression(D_lf[gamma], D_hf, cfg.dim)

    model = BiFiModel(
        cfg, ref, norm, samples, tuple(gamma), tuple(gamma_cf), lf_basis, hf_basis,
        lf_basis_cf, hf_basis_cf, regression, D_lf, D_hf,
        selection={"mf": {"pivots": list(sel.pivots), "cond": sel.cond},
                   "cf": {"pivots": list(sel_cf.pivots), "cond": sel_cf.cond}},
        flagged=tuple(flagged),
    )
    save_model(model, out)
    model.projectors("mf"), model.projectors("cf")
    return model


def save_model(model, out):
    out = Path(out)
    bdir = out / "basis"
    bdir.mkdir(parents=True, exist_ok=True)
    grid = model.ref.grid
    for tag, basis, idx in (("mf_lf", model.lf_basis, model.gamma), ("mf_hf", model.hf_basis, model.gamma),
                            ("cf_lf", model.lf_basis_cf, model.gamma_cf),
                            ("cf_hf", model.hf_basis_cf, model.gamma_cf)):
        for j in range(basis.shape[2]):
            fields = [basis[k, :, j].reshape(grid.shape) for k in range(3)]
            snap = Snapshot(grid, *fields, model.samples.row(idx[j]), tag)
            io.write_snapshot(snap, bdir / f"{tag}_{j:03d}.pyro", {"sample_index": int(idx[j])})
    text = json.dumps(model.manifest(), indent=1, sort_keys=True)
    tmp = out / "manifest.json.tmp"
    tmp.write_text(text)
    tmp.replace(out / "manifest.json")


def load_model(path):
    path = Path(path)
    try:
        man = json.loads((path / "manifest.json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read model manifest in {path}: {exc}") from None
    if man.get("version") != MODEL_VERSION:
        raise ConfigError(f"{path}: unsupported model version {man.get('version')}")
    cfg = RunConfig.from_dict(man["config"])
    ref = ReferenceConfig.from_dict(man["reference"])
    s = man["samples"]
    samples = SampleSet(tuple(s["names"]), np.array(s["values"], dtype=np.float64), s["seed"])

    def basis(tag, count):
        snaps = [io.read_snapshot(path / "basis" / f"{tag}_{j:03d}.pyro") for j in range(count)]
        return _split(snapshot_matrix(snaps), ref.grid.nx * ref.grid.ny)

    m, m_cf = len(man["gamma"]), len(man["gamma_cf"])
    model = BiFiModel(
        cfg, ref, Normalization(**man["normalization"]), samples,
        tuple(man["gamma"]), tuple(man["gamma_cf"]),
        basis("mf_lf", m), basis("mf_hf", m), basis("cf_lf", m_cf), basis("cf_hf", m_cf),
        DescriptorRegression.from_dict(man["regression"]),
        np.array(man["lf_descriptors"]), np.array(man["hf_descriptors"]),
        man["selection"], tuple(man["flagged_fronts"]),
    )
    model.projectors("mf"), model.projectors("cf")
    return model


# --------------------------------------------------------------------------
# online stage
# --------------------------------------------------------------------------

def run_lf(model, z):
    z = {n: float(z[n]) for n in model.samples.names}
    if not model.config.box.contains(z):
        warnings.warn(f"query {z} lies outside the training box", RuntimeWarning, stacklevel=3)
    cfg = model.config
    return simulate(cfg.lf_grid, cfg.lf_params, z, cfg.ignition, "LF")


def _finish(model, unit_fields, z, tag):
    grid = model.ref.grid
    v = Snapshot(grid, *(f.reshape(grid.shape) for f in unit_fields), z, tag)
    return denormalize(v, model.norm)


def conventional_from_lf(model, v_lf):
    """CF reconstruction from an already computed LF snapshot."""
    target = _unit_vector(resample(_to_unit(v_lf, model.norm), model.ref.grid))
    fields, _ = reconstruct(model.lf_basis_cf, model.hf_basis_cf, target, model.lam,
                            model.projectors("cf"))
    return _finish(model, fields, dict(v_lf.z), "CF")


def mapped_from_lf(model, v_lf):
    """MF reconstruction from an already computed LF snapshot.

    A degenerate LF front (nothing to align) falls back to the CF answer,
    tagged ``"MF-fallback"``.
    """
    try:
        v_ref, d_lf = _mapped_lf(v_lf, model.ref, model.norm)
    except (DegenerateFrontError, DegenerateIndicatorError) as exc:
        log.warning("MF fallback to CF at %s: %s", v_lf.z, exc)
        cf = conventional_from_lf(model, v_lf)
        return cf.with_fields(*cf.fields, fidelity="MF-fallback")
    fields, _ = reconstruct(model.lf_basis, model.hf_basis, _unit_vector(v_ref), model.lam,
                            model.projectors("mf"))
    cls = descriptor_class(model.dim)
    d_hf = cls.from_array(predict_hf_descriptors(model.regression, d_lf.as_array()))
    grid = model.ref.grid
    v_hf_ref = Snapshot(grid, *(f.reshape(grid.shape) for f in fields), dict(v_lf.z), "MF")
    v_unit = apply_unmap(v_hf_ref, d_hf, model.ref, grid)
    return denormalize(v_unit, model.norm)


def _unit_vector(v):
    return np.stack([f.ravel() for f in v.fields])


def online_predict(model, z):
    """Mapped bi-fidelity prediction at ``z``: one LF run plus reconstruction."""
    return mapped_from_lf(model, run_lf(model, z))


def conventional_predict(model, z):
    """Unmapped bi-fidelity prediction at ``z``."""
    return conventional_from_lf(model, run_lf(model, z))


def lf_predict(model, z):
    """LF solution resampled to the HF grid (for like-for-like comparison)."""
    return resample(run_lf(model, z), model.ref.grid)


def hf_simulate(model, z):
    cfg = model.config
    z = {n: float(z[n]) for n in model.samples.names}
    return simulate(cfg.hf_grid, cfg.hf_params, z, cfg.ignition, "HF")
