"""Bijective physical <-> reference transforms that freeze the combustion front.

1D snapshots are aligned variable by variable: the temperature peak is
translated onto ``x_ref`` and each fuel field is shifted and stretched so its
depletion front spans ``[x_ref - w_ref/2, x_ref + w_ref/2]``.  2D snapshots share
one separable affine map built from the centroid and spread of an activity
indicator.  Reference-domain fields live on the reference (high-fidelity) grid;
resampling is linear with constant extrapolation.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from .errors import (
    ConfigError,
    DegenerateFrontError,
    DegenerateIndicatorError,
    InvalidDescriptorError,
)
from .solver import Grid

FUELS = ("S_e", "S_x")


# --------------------------------------------------------------------------
# resampling
# --------------------------------------------------------------------------

def interp_matrix(src, query):
    """Linear interpolation operator from uniform nodes ``src`` to ``query``.

    Queries outside ``[src[0], src[-1]]`` take the edge value.
    """
    src = np.asarray(src, dtype=np.float64)
    query = np.asarray(query, dtype=np.float64)
    n = src.size
    h = (src[-1] - src[0]) / (n - 1)
    pos = np.clip((query - src[0]) / h, 0.0, n - 1.0)
    near = np.round(pos)
    pos = np.where(np.abs(pos - near) < 1e-9, near, pos)
    i0 = np.minimum(np.floor(pos).astype(np.int64), n - 2)
    w = pos - i0
    W = np.zeros((query.size, n))
    rows = np.arange(query.size)
    W[rows, i0] = 1.0 - w
    W[rows, i0 + 1] += w
    return W


def _resample_2d(field, src_grid, xq, yq):
    Wx = interp_matrix(src_grid.x, xq)
    Wy = interp_matrix(src_grid.y, yq)
    return Wy @ field @ Wx.T


def resample(v, grid):
    """Linearly resample all fields of ``v`` onto ``grid`` (same extents)."""
    if v.grid == grid:
        return v
    if grid.dim == 1:
        fields = [np.interp(grid.x, v.grid.x, f[0]) for f in v.fields]
    else:
        Wx = interp_matrix(v.grid.x, grid.x)
        Wy = interp_matrix(v.grid.y, grid.y)
        fields = [Wy @ f @ Wx.T for f in v.fields]
    return v.with_fields(*fields, grid=grid)


# --------------------------------------------------------------------------
# descriptor containers
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class GeomDescriptors1D:
    s_T: float
    s_Se: float
    s_Sx: float
    kappa_Se: float
    kappa_Sx: float
    flags: tuple = ()

    NAMES = ("s_T", "s_Se", "s_Sx", "kappa_Se", "kappa_Sx")

    def as_array(self):
        return np.array([getattr(self, n) for n in self.NAMES])

    @classmethod
    def from_array(cls, a, flags=()):
        return cls(*(float(v) for v in a), flags=tuple(flags))

    def validate(self):
        for k in (self.kappa_Se, self.kappa_Sx):
            if not (math.isfinite(k) and k > 0):
                raise InvalidDescriptorError(f"stretch factors must be positive and finite, got {k}")
        if not all(math.isfinite(s) for s in (self.s_T, self.s_Se, self.s_Sx)):
            raise InvalidDescriptorError("shifts must be finite")


@dataclass(frozen=True)
class GeomDescriptors2D:
    mu_x: float
    mu_y: float
    sigma_x: float
    sigma_y: float

    NAMES = ("mu_x", "mu_y", "sigma_x", "sigma_y")

    def as_array(self):
        return np.array([self.mu_x, self.mu_y, self.sigma_x, self.sigma_y])

    @classmethod
    def from_array(cls, a, flags=()):
        return cls(*(float(v) for v in a))

    def validate(self):
        if not (self.sigma_x > 0 and self.sigma_y > 0):
            raise InvalidDescriptorError("spreads must be positive")
        if not all(math.isfinite(v) for v in self.as_array()):
            raise InvalidDescriptorError("descriptors must be finite")


@dataclass(frozen=True)
class ReferenceConfig:
    """Reference geometry plus indicator constants.

    1D uses ``x_ref`` and the fuel reference widths; 2D uses the reference
    centroid/spread.  Medians are taken over the low-fidelity training ensemble.
    """

    grid: Grid
    x_ref: float = 0.0
    w_ref_Se: float = 1.0
    w_ref_Sx: float = 1.0
    mu_x_ref: float = 0.0
    mu_y_ref: float = 0.0
    sigma_x_ref: float = 1.0
    sigma_y_ref: float = 1.0
    omega: float = 0.85
    p: float = 2.0
    q: float = 1.0
    edge_band: float = 0.05

    def __post_init__(self):
        if not 0.0 < self.omega < 1.0:
            raise ConfigError("indicator omega must lie in (0, 1)")
        if not (self.p > 0 and self.q > 0):
            raise ConfigError("indicator exponents p, q must be positive")
        if not (self.w_ref_Se > 0 and self.w_ref_Sx > 0):
            raise ConfigError("reference widths must be positive")
        if not (self.sigma_x_ref > 0 and self.sigma_y_ref > 0):
            raise ConfigError("reference spreads must be positive")
        if not 0.0 < self.edge_band < 0.5:
            raise ConfigError("edge_band must lie in (0, 0.5)")

    def w_ref(self, fuel):
        return self.w_ref_Se if fuel == "S_e" else self.w_ref_Sx

    def to_dict(self):
        d = asdict(self)
        d["grid"] = self.grid.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["grid"] = Grid(**d["grid"])
        return cls(**d)


# --------------------------------------------------------------------------
# 1D alignment
# --------------------------------------------------------------------------

def peak_shift_1d(T, x, x_ref):
    """Shift ``x_ref - x_peak`` that moves the (first) maximum onto ``x_ref``."""
    T = np.asarray(T, dtype=np.float64).ravel()
    if not np.all(np.isfinite(T)):
        raise DegenerateFrontError("temperature field is not finite")
    if T.max() == T.min():
        raise DegenerateFrontError("constant temperature field has no peak")
    return float(x_ref - np.asarray(x)[int(np.argmax(T))])


@dataclass(frozen=True)
class FrontAnchors:
    x_L: float
    x_R: float
    width: float
    left_found: bool
    right_found: bool

    @property
    def flagged(self):
        return not (self.left_found and self.right_found)


def _crossing(x, S, i, level):
    return float(x[i] + (level - S[i]) / (S[i + 1] - S[i]) * (x[i + 1] - x[i]))


def front_anchors_1d(S, x, edge_band=0.05, rel_contrast=1e-6):
    """Falling/rising crossings of the mid level of a depletion front.

    The high level is the larger edge-band mean; the low level is the smaller
    edge-band mean or, for a depletion well, the well floor.  Missing crossings
    fall back to the domain edge and are flagged.
    """
    S = np.asarray(S, dtype=np.float64).ravel()
    x = np.asarray(x, dtype=np.float64)
    n = S.size
    band = max(1, int(round(edge_band * n)))
    y_L, y_R = S[:band].mean(), S[-band:].mean()
    hi = max(y_L, y_R)
    lo = min(y_L, y_R, S.min())
    h = x[1] - x[0]
    x_lo, x_hi = x[0] - 0.5 * h, x[-1] + 0.5 * h
    if hi - lo <= rel_contrast * max(abs(hi), 1.0):
        return FrontAnchors(x_lo, x_hi, x_hi - x_lo, False, False)
    mid = 0.5 * (hi + lo)
    above = S >= mid
    falling = np.flatnonzero(above[:-1] & ~above[1:])
    rising = np.flatnonzero(~above[:-1] & above[1:])
    left_found = falling.size > 0
    right_found = rising.size > 0
    x_L = _crossing(x, S, falling[0], mid) if left_found else x_lo
    x_R = _crossing(x, S, rising[-1], mid) if right_found else x_hi
    if left_found and right_found and x_R <= x_L:
        # a bump rather than a well: keep the crossing nearest the edges
        right_found = False
        x_R = x_hi
    return FrontAnchors(x_L, x_R, x_R - x_L, left_found, right_found)


def fuel_alignment(anchors, w_ref, x_ref, dx):
    """Shift/stretch ``(s, kappa)`` putting the front on the reference interval.

    Flagged anchors keep ``kappa = 1`` and align whichever crossing exists.
    """
    X_L = x_ref - 0.5 * w_ref
    if not anchors.flagged:
        kappa = w_ref / max(anchors.width, 2.0 * dx)
        return X_L - x_ref - kappa * (anchors.x_L - x_ref), kappa
    if anchors.right_found:
        return x_ref + 0.5 * w_ref - anchors.x_R, 1.0
    if anchors.left_found:
        return X_L - anchors.x_L, 1.0
    return 0.0, 1.0


def descriptors_1d(v, ref):
    """Geometric descriptors of a 1D snapshot relative to ``ref``."""
    x = v.grid.x
    s_T = peak_shift_1d(v.T, x, ref.x_ref)
    out, flags = {}, []
    for fuel, S in zip(FUELS, (v.S_e, v.S_x)):
        anchors = front_anchors_1d(S, x, ref.edge_band)
        if anchors.flagged:
            flags.append(fuel)
        out[fuel] = fuel_alignment(anchors, ref.w_ref(fuel), ref.x_ref, v.grid.dx)
    return GeomDescriptors1D(s_T, out["S_e"][0], out["S_x"][0],
                             out["S_e"][1], out["S_x"][1], tuple(flags))


def apply_map_1d(v, d, ref):
    """Pull ``v`` back to the reference grid with given descriptors."""
    d.validate()
    xq = ref.grid.x
    xs = v.grid.x
    x_ref = ref.x_ref
    T = np.interp(xq - d.s_T, xs, v.T[0])
    S_e = np.interp(x_ref + (xq - x_ref - d.s_Se) / d.kappa_Se, xs, v.S_e[0])
    S_x = np.interp(x_ref + (xq - x_ref - d.s_Sx) / d.kappa_Sx, xs, v.S_x[0])
    return v.with_fields(T, S_e, S_x, grid=ref.grid)


def map_1d(v, ref):
    """Map a physical 1D snapshot into the reference domain.

    Returns the reference-domain snapshot (on ``ref.grid``) and its descriptors.
    """
    d = descriptors_1d(v, ref)
    return apply_map_1d(v, d, ref), d


def unmap_1d(v_ref, d, grid=None):
    """Inverse of :func:`map_1d`, resampled to ``grid`` (default: the reference grid)."""
    d.validate()
    grid = grid or v_ref.grid
    X = grid.x
    xr = v_ref.grid.x
    x_ref = 0.5 * v_ref.grid.lx
    T = np.interp(X + d.s_T, xr, v_ref.T[0])
    S_e = np.interp(x_ref + d.s_Se + d.kappa_Se * (X - x_ref), xr, v_ref.S_e[0])
    S_x = np.interp(x_ref + d.s_Sx + d.kappa_Sx * (X - x_ref), xr, v_ref.S_x[0])
    return v_ref.with_fields(T, S_e, S_x, grid=grid)


# --------------------------------------------------------------------------
# 2D alignment
# --------------------------------------------------------------------------

def activity_indicator(v, ref, norm=None):
    """``omega * T_n**p + (1 - omega) * (1 - S_x_n)**q`` on unit-scaled fields.

    ``v`` is taken as already normalised unless ``norm`` is given.
    """
    if norm is not None:
        T_n, _, S_x_n = norm.forward(v.T, v.S_e, v.S_x)
    else:
        T_n, S_x_n = v.T, v.S_x
    T_n = np.clip(T_n, 0.0, 1.0)
    S_x_n = np.clip(S_x_n, 0.0, 1.0)
    J = ref.omega * T_n ** ref.p + (1.0 - ref.omega) * (1.0 - S_x_n) ** ref.q
    if not J.sum() > 0.0:
        raise DegenerateIndicatorError("activity indicator has zero total mass")
    return J


def moments_2d(J, grid):
    """Centroid and directional spreads of a non-negative field (midpoint rule).

    Spreads are floored at ``cell / sqrt(12)``, the spread of a single cell.
    """
    J = np.asarray(J, dtype=np.float64).reshape(grid.shape)
    mass = J.sum() * grid.dx * grid.dy
    if not mass > 0.0:
        raise DegenerateIndicatorError("activity indicator has zero total mass")
    wx = J.sum(axis=0)
    wy = J.sum(axis=1)
    tot = wx.sum()
    mu_x = float(wx @ grid.x / tot)
    mu_y = float(wy @ grid.y / tot)
    var_x = float(wx @ (grid.x - mu_x) ** 2 / tot)
    var_y = float(wy @ (grid.y - mu_y) ** 2 / tot)
    sig_x = max(math.sqrt(max(var_x, 0.0)), grid.dx / math.sqrt(12.0))
    sig_y = max(math.sqrt(max(var_y, 0.0)), grid.dy / math.sqrt(12.0))
    return GeomDescriptors2D(mu_x, mu_y, sig_x, sig_y)


def descriptors_2d(v, ref, norm=None):
    return moments_2d(activity_indicator(v, ref, norm), v.grid)


def affine_params(d, ref):
    """``(a_x, b_x, a_y, b_y)`` with ``x = a_x * xi + b_x``, ``y = a_y * eta + b_y``."""
    a_x = d.sigma_x / ref.sigma_x_ref
    a_y = d.sigma_y / ref.sigma_y_ref
    return a_x, d.mu_x - a_x * ref.mu_x_ref, a_y, d.mu_y - a_y * ref.mu_y_ref


def apply_map_2d(v, d, ref):
    d.validate()
    a_x, b_x, a_y, b_y = affine_params(d, ref)
    Wx = interp_matrix(v.grid.x, a_x * ref.grid.x + b_x)
    Wy = interp_matrix(v.grid.y, a_y * ref.grid.y + b_y)
    fields = [Wy @ f @ Wx.T for f in v.fields]
    return v.with_fields(*fields, grid=ref.grid)


def map_2d(v, ref, norm=None):
    """Pull all three fields back through the indicator-driven affine map."""
    d = descriptors_2d(v, ref, norm)
    return apply_map_2d(v, d, ref), d


def unmap_2d(v_ref, d, ref, grid=None):
    """Inverse of :func:`map_2d` onto ``grid`` (default: the reference grid)."""
    d.validate()
    grid = grid or v_ref.grid
    a_x, b_x, a_y, b_y = affine_params(d, ref)
    Wx = interp_matrix(v_ref.grid.x, (grid.x - b_x) / a_x)
    Wy = interp_matrix(v_ref.grid.y, (grid.y - b_y) / a_y)
    fields = [Wy @ f @ Wx.T for f in v_ref.fields]
    return v_ref.with_fields(*fields, grid=grid)


# --------------------------------------------------------------------------
# dimension-generic helpers
# --------------------------------------------------------------------------

def compute_descriptors(v, ref, norm=None):
    return descriptors_1d(v, ref) if v.grid.dim == 1 else descriptors_2d(v, ref, norm)


def apply_map(v, d, ref):
    return apply_map_1d(v, d, ref) if v.grid.dim == 1 else apply_map_2d(v, d, ref)


def apply_unmap(v_ref, d, ref, grid=None):
    if v_ref.grid.dim == 1:
        return unmap_1d(v_ref, d, grid)
    return unmap_2d(v_ref, d, ref, grid)


def descriptor_class(dim):
    return GeomDescriptors1D if dim == 1 else GeomDescriptors2D


def build_reference(snapshots, ref_grid, norm=None, omega=0.85, p=2.0, q=1.0, edge_band=0.05):
    """Reference configuration from the medians of an ensemble's geometry."""
    if ref_grid.dim == 1:
        widths = {fuel: [] for fuel in FUELS}
        for v in snapshots:
            for fuel, S in zip(FUELS, (v.S_e, v.S_x)):
                a = front_anchors_1d(S, v.grid.x, edge_band)
                if not a.flagged:
                    widths[fuel].append(max(a.width, 2.0 * v.grid.dx))
        w = {f: float(np.median(ws)) if ws else 0.5 * ref_grid.lx for f, ws in widths.items()}
        return ReferenceConfig(ref_grid, x_ref=0.5 * ref_grid.lx, w_ref_Se=w["S_e"],
                               w_ref_Sx=w["S_x"], omega=omega, p=p, q=q, edge_band=edge_band)
    probe = ReferenceConfig(ref_grid, omega=omega, p=p, q=q, edge_band=edge_band)
    ds = np.array([descriptors_2d(v, probe, norm).as_array() for v in snapshots])
    med = np.median(ds, axis=0)
    return ReferenceConfig(ref_grid, mu_x_ref=float(med[0]), mu_y_ref=float(med[1]),
                           sigma_x_ref=float(med[2]), sigma_y_ref=float(med[3]),
                           omega=omega, p=p, q=q, edge_band=edge_band)


# --------------------------------------------------------------------------
# LF -> HF descriptor transfer
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DescriptorRegression:
    """Independent polynomial fit per descriptor with clamping bounds.

    ``coeffs[k]`` are ``np.polyfit`` coefficients (highest power first);
    ``log_space[k]`` fits ``log(hf)`` against ``log(lf)``.
    """

    dim: int
    coeffs: tuple
    log_space: tuple
    lower: np.ndarray
    upper: np.ndarray

    def to_dict(self):
        return {"dim": self.dim, "coeffs": [list(map(float, c)) for c in self.coeffs],
                "log_space": list(self.log_space), "lower": self.lower.tolist(),
                "upper": self.upper.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["dim"], tuple(np.array(c) for c in d["coeffs"]), tuple(d["log_space"]),
                   np.array(d["lower"]), np.array(d["upper"]))


def regression_layout(dim):
    """Polynomial degree and log-space flag per descriptor."""
    if dim == 1:
        return (2, 2, 2, 1, 1), (False,) * 5
    return (1, 1, 1, 1), (False, False, True, True)


def fit_descriptor_regression(lf, hf, dim):
    """Least-squares LF -> HF descriptor maps.

    1D: quadratic for shifts, linear for stretches.  2D: linear for centroids,
    linear in log space for spreads.  Too few points lowers the degree.
    """
    lf = np.atleast_2d(np.asarray(lf, dtype=np.float64))
    hf = np.atleast_2d(np.asarray(hf, dtype=np.float64))
    degrees, logs = regression_layout(dim)
    if lf.shape != hf.shape or lf.shape[1] != len(degrees):
        raise ConfigError(f"descriptor arrays must both be (m, {len(degrees)})")
    n = lf.shape[0]
    coeffs = []
    for k, (deg, use_log) in enumerate(zip(degrees, logs)):
        xs, ys = lf[:, k], hf[:, k]
        if use_log:
            xs, ys = np.log(xs), np.log(ys)
        n_distinct = np.unique(xs).size
        d = min(deg, n_distinct - 1)
        if d < deg:
            warnings.warn(f"descriptor {k}: {n} points ({n_distinct} distinct) support "
                          f"degree {d} instead of {deg}", RuntimeWarning, stacklevel=2)
        c = np.polyfit(xs, ys, d) if d > 0 else np.array([ys.mean()])
        coeffs.append(np.concatenate([np.zeros(deg - d), c]))
    return DescriptorRegression(dim, tuple(coeffs), logs, hf.min(axis=0), hf.max(axis=0))


def predict_hf_descriptors(r, lf):
    """Evaluate the regression and clamp into the HF training range."""
    lf = np.asarray(lf, dtype=np.float64)
    out = np.empty(len(r.coeffs))
    for k, (c, use_log) in enumerate(zip(r.coeffs, r.log_space)):
        if use_log:
            out[k] = math.exp(np.polyval(c, math.log(lf[k])))
        else:
            out[k] = np.polyval(c, lf[k])
    return np.clip(out, r.lower, r.upper)
