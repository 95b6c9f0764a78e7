"""Finite-difference advection-diffusion-reaction wildfire solver.

Temperature ``T`` and the endothermic/exothermic fuel mass fractions ``S_e`` and
``S_x`` evolve on a uniform cell-centred grid.  Advection is first-order upwind,
diffusion uses central differences in flux form, time integration is explicit
Euler.  Boundaries are open (zero-gradient ghost cells).

The same code path serves every fidelity level: low/high fidelity differ only
in the :class:`Grid` and the ``radiation_enabled`` switch.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import (
    ConfigError,
    DivergenceError,
    InvalidStateError,
    SingularConfigurationError,
    StabilityError,
)

# Rosseland radiative diffusivity prefactor.
ROSSELAND_FACTOR = 5.33

PARAMS_1D = ("u_w", "S_e0")
PARAMS_2D = ("u_wx", "u_wy", "S_e0", "alpha")


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centred grid plus time stepping.

    Arrays on the grid have shape ``(ny, nx)``; ``ny == 1`` for 1D grids.
    """

    dim: int
    nx: int
    ny: int
    dx: float
    dy: float
    dt: float
    t_final: float

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ConfigError(f"grid dim must be 1 or 2, got {self.dim}")
        if self.nx < 2 or self.ny < 1:
            raise ConfigError("grid needs nx >= 2 and ny >= 1")
        if self.dim == 1 and self.ny != 1:
            raise ConfigError("1D grid must have ny == 1")
        if self.dim == 2 and self.ny < 2:
            raise ConfigError("2D grid needs ny >= 2")
        for name in ("dx", "dy", "dt", "t_final"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"grid {name} must be positive")

    @classmethod
    def from_extent(cls, lx, dx, dt, t_final, ly=None, dy=None):
        """Build a grid from domain extents; ``ly=None`` gives a 1D grid."""
        nx = int(round(lx / dx))
        if not math.isclose(nx * dx, lx, rel_tol=1e-9):
            raise ConfigError(f"lx={lx} is not a multiple of dx={dx}")
        if ly is None:
            return cls(1, nx, 1, float(dx), float(dx), float(dt), float(t_final))
        dy = dx if dy is None else dy
        ny = int(round(ly / dy))
        if not math.isclose(ny * dy, ly, rel_tol=1e-9):
            raise ConfigError(f"ly={ly} is not a multiple of dy={dy}")
        return cls(2, nx, ny, float(dx), float(dy), float(dt), float(t_final))

    @property
    def lx(self):
        return self.nx * self.dx

    @property
    def ly(self):
        return self.ny * self.dy

    @property
    def shape(self):
        return (self.ny, self.nx)

    @property
    def n_steps(self):
        return int(round(self.t_final / self.dt))

    @property
    def x(self):
        return (np.arange(self.nx) + 0.5) * self.dx

    @property
    def y(self):
        return (np.arange(self.ny) + 0.5) * self.dy

    @property
    def cell_measure(self):
        """Length (1D) or area (2D) of one cell."""
        return self.dx if self.dim == 1 else self.dx * self.dy

    def to_dict(self):
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class PhysicalParams:
    """Coefficients of the ADR wildfire model.

    Defaults form a calibrated profile that sustains a travelling front over
    the 1D study box; they are not field-calibrated values.
    """

    c_e: float = 2.0e11  # 1/s
    b_e: float = 12000.0  # K
    c_x: float = 7.0e9  # 1/s
    b_x: float = 15000.0  # K
    r_o: float = 0.01  # 1/s
    kappa1: float = 0.012
    kappa2: float = 1500.0  # K per unit moisture fraction
    kappa3: float = 1700.0  # K per unit combustible fraction
    kappa4: float = 3.0e-4
    T_a: float = 300.0  # K
    U: float = 10.0  # W/m^2K
    D_b: float = 3.0  # m^2/s
    A_d: float = 1.3
    gamma_d: float = 0.1  # 1/m
    L: float = 1.0  # m, fire-layer depth
    w: float = 10.0  # m, fireline width
    sigma_b: float = 5.670374419e-8  # W/m^2K^4
    k_d: float = 1.0  # 1/m
    rho_g: float = 0.35  # kg/m^3
    c_pg: float = 1100.0  # J/kgK
    c_w: float = 1.0
    radiation_enabled: bool = True
    S_x0: float = 1.0
    alpha_ref: float = 0.005
    alpha_exponent: float = 0.5

    def __post_init__(self):
        for name in ("c_e", "b_e", "c_x", "b_x", "kappa1", "kappa2", "kappa3",
                     "kappa4", "U", "D_b", "A_d", "gamma_d", "L", "w", "sigma_b",
                     "k_d", "rho_g", "c_pg", "c_w"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if not self.T_a > 0:
            raise ConfigError("T_a must be positive")
        if not self.r_o > 0:
            raise ConfigError("r_o must be positive")
        if not self.S_x0 > 0 or not self.alpha_ref > 0:
            raise ConfigError("S_x0 and alpha_ref must be positive")

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        return dataclasses.asdict(self)

    def as_array(self):
        return np.array([
            self.c_e, self.b_e, self.c_x, self.b_x, self.r_o,
            self.kappa1, self.kappa2, self.kappa3, self.kappa4,
            self.T_a, self.U, self.D_b, self.A_d, self.gamma_d, self.L, self.w,
            self.sigma_b, self.k_d, self.rho_g, self.c_pg,
            1.0 if self.radiation_enabled else 0.0,
        ], dtype=np.float64)


@dataclass(frozen=True)
class IgnitionSpec:
    """Gaussian temperature bump added to the ambient state.

    ``center=None`` places it at ``0.2 * lx`` in 1D and at the domain centre in 2D.
    """

    amplitude: float = 900.0  # K above ambient
    width: float = 15.0  # m, Gaussian standard deviation
    center: tuple | None = None

    def position(self, grid):
        if self.center is not None:
            c = tuple(float(v) for v in self.center)
            return c if grid.dim == 2 else (c[0], 0.5 * grid.ly)
        if grid.dim == 1:
            return (0.2 * grid.lx, 0.5 * grid.ly)
        return (0.5 * grid.lx, 0.5 * grid.ly)


@dataclass(frozen=True, eq=False)
class Snapshot:
    """Discrete state fields on a grid for one parameter realisation."""

    grid: Grid
    T: np.ndarray
    S_e: np.ndarray
    S_x: np.ndarray
    z: dict = field(default_factory=dict)
    fidelity: str = "LF"

    def __post_init__(self):
        for name in ("T", "S_e", "S_x"):
            arr = np.array(getattr(self, name), dtype=np.float64)
            if arr.size != self.grid.nx * self.grid.ny:
                raise ConfigError(f"field {name} has {arr.size} entries, grid needs "
                                  f"{self.grid.nx * self.grid.ny}")
            arr = arr.reshape(self.grid.shape)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "z", dict(self.z))

    @property
    def fields(self):
        return (self.T, self.S_e, self.S_x)

    def with_fields(self, T, S_e, S_x, grid=None, fidelity=None):
        return Snapshot(grid or self.grid, T, S_e, S_x, self.z,
                        self.fidelity if fidelity is None else fidelity)

    def equals(self, other):
        """Bitwise field equality."""
        return (self.grid == other.grid
                and all(np.array_equal(a, b) for a, b in zip(self.fields, other.fields)))


# --------------------------------------------------------------------------
# pointwise closures
# --------------------------------------------------------------------------

def _check_temperature(T):
    T = np.asarray(T, dtype=np.float64)
    if not np.all(T > 0):
        raise InvalidStateError("temperature must be positive everywhere")
    return T


def endothermic_rate(T, p):
    """Moisture evaporation rate ``c_e * exp(-b_e / T)`` in 1/s."""
    T = _check_temperature(T)
    return p.c_e * np.exp(-p.b_e / T)


def exothermic_rate(T, p):
    """Combustion rate: harmonic combination of Arrhenius kinetics and the
    oxygen-supply limit ``r_o``."""
    T = _check_temperature(T)
    k = p.c_x * np.exp(-p.b_x / T)
    return k * p.r_o / (k + p.r_o)


def radiative_diffusivity(T, p):
    """Rosseland contribution ``k_r / (rho_g c_pg)`` in m^2/s."""
    T = _check_temperature(T)
    opacity = 1.0 - math.exp(-p.k_d * p.L)
    if opacity <= 0.0:
        raise SingularConfigurationError("k_d * L must be positive when radiation is enabled")
    k_r = ROSSELAND_FACTOR * p.sigma_b * T ** 3 / opacity
    return k_r / (p.rho_g * p.c_pg)


def diffusion_coefficient(T, u, p):
    """Effective diffusivity for one direction with velocity component ``u``.

    Buoyancy, wind shear (proportional to ``|u|``) and, when enabled, Rosseland
    radiation.
    """
    T = _check_temperature(T)
    D = p.D_b + p.A_d * np.abs(u) * p.L * (1.0 - math.exp(-p.gamma_d * p.w))
    D = np.broadcast_to(np.asarray(D, dtype=np.float64), T.shape).copy()
    if p.radiation_enabled:
        D += radiative_diffusivity(T, p)
    return D


# --------------------------------------------------------------------------
# time integration kernel
# --------------------------------------------------------------------------

_OK, _UNSTABLE, _NONFINITE, _NONPOSITIVE = 0, 1, 2, 3


@njit(cache=True)
def _advance(T, Se, Sx, n_steps, dt, dx, dy, ux, uy, prm, periodic):
    """Advance the state in place by ``n_steps`` explicit steps.

    Returns ``(status, step, ratio)``; ``status != 0`` aborts before the
    offending step is applied.
    """
    c_e, b_e, c_x, b_x, r_o = prm[0], prm[1], prm[2], prm[3], prm[4]
    k1, k2, k3, k4 = prm[5], prm[6], prm[7], prm[8]
    T_a, U, D_b, A_d, gamma_d = prm[9], prm[10], prm[11], prm[12], prm[13]
    L, w, sigma_b, k_d, rho_g, c_pg, rad = (prm[14], prm[15], prm[16], prm[17],
                                            prm[18], prm[19], prm[20])
    ny, nx = T.shape
    two_d = ny > 1
    shear = A_d * L * (1.0 - np.exp(-gamma_d * w))
    Dx0 = D_b + shear * abs(ux)
    Dy0 = D_b + shear * abs(uy)
    rad_coef = 0.0
    if rad > 0.0:
        rad_coef = 5.33 * sigma_b / (1.0 - np.exp(-k_d * L)) / (rho_g * c_pg)
    relax = k4 * U
    Dx = np.empty_like(T)
    Dy = np.empty_like(T)
    Tn = np.empty_like(T)
    for step in range(n_steps):
        ratio = 0.0
        for j in range(ny):
            for i in range(nx):
                t = T[j, i]
                r = rad_coef * t * t * t
                Dx[j, i] = Dx0 + r
                Dy[j, i] = Dy0 + r
                cfl = abs(ux) * dt / dx + 2.0 * Dx[j, i] * dt / (dx * dx)
                if two_d:
                    cfl += abs(uy) * dt / dy + 2.0 * Dy[j, i] * dt / (dy * dy)
                cfl *= k1
                if cfl > ratio:
                    ratio = cfl
        if ratio > 1.0:
            return _UNSTABLE, step, ratio
        for j in range(ny):
            for i in range(nx):
                t = T[j, i]
                # x-direction neighbours; open boundaries copy the edge cell
                if i > 0:
                    il = i - 1
                elif periodic:
                    il = nx - 1
                else:
                    il = i
                if i < nx - 1:
                    ir = i + 1
                elif periodic:
                    ir = 0
                else:
                    ir = i
                tl = T[j, il]
                tr = T[j, ir]
                flux_r = 0.5 * (Dx[j, i] + Dx[j, ir]) * (tr - t) / dx
                flux_l = 0.5 * (Dx[j, i] + Dx[j, il]) * (t - tl) / dx
                div = (flux_r - flux_l) / dx
                if ux >= 0.0:
                    div -= ux * (t - tl) / dx
                else:
                    div -= ux * (tr - t) / dx
                if two_d:
                    if j > 0:
                        jb = j - 1
                    elif periodic:
                        jb = ny - 1
                    else:
                        jb = j
                    if j < ny - 1:
                        jt = j + 1
                    elif periodic:
                        jt = 0
                    else:
                        jt = j
                    tb = T[jb, i]
                    tt = T[jt, i]
                    flux_t = 0.5 * (Dy[j, i] + Dy[jt, i]) * (tt - t) / dy
                    flux_b = 0.5 * (Dy[j, i] + Dy[jb, i]) * (t - tb) / dy
                    div += (flux_t - flux_b) / dy
                    if uy >= 0.0:
                        div -= uy * (t - tb) / dy
                    else:
                        div -= uy * (tt - t) / dy
                # fuel depletion consistent with the multiplicative update
                se = Se[j, i]
                sx = Sx[j, i]
                de = 0.0
                if se > 0.0 and c_e > 0.0:
                    re = c_e * np.exp(-b_e / t) * dt
                    de = se if re >= 1.0 else se * re
                dxs = 0.0
                if sx > 0.0 and c_x > 0.0:
                    kx = c_x * np.exp(-b_x / t)
                    rx = kx * r_o / (kx + r_o) * dt
                    dxs = sx if rx >= 1.0 else sx * rx
                Se[j, i] = se - de
                Sx[j, i] = sx - dxs
                Tn[j, i] = t + dt * (k1 * div - relax * (t - T_a)) - k2 * de + k3 * dxs
        for j in range(ny):
            for i in range(nx):
                v = Tn[j, i]
                if not np.isfinite(v):
                    return _NONFINITE, step, ratio
                if v <= 0.0:
                    return _NONPOSITIVE, step, ratio
                T[j, i] = v
    return _OK, n_steps, 0.0


def velocity(z, p, dim):
    """Uniform transport velocity ``c_w * u_w`` as ``(ux, uy)``."""
    if dim == 1:
        return (p.c_w * float(z["u_w"]), 0.0)
    return (p.c_w * float(z["u_wx"]), p.c_w * float(z["u_wy"]))


def effective_params(p, z):
    """Fold realisation-dependent inputs into the coefficient set.

    The packing ratio ``alpha`` scales the fuel heat-release and evaporation
    coefficients by ``(alpha / alpha_ref) ** alpha_exponent``.
    """
    if "alpha" in z:
        s = (float(z["alpha"]) / p.alpha_ref) ** p.alpha_exponent
        return p.replace(kappa2=p.kappa2 * s, kappa3=p.kappa3 * s)
    return p


def _run(state, p, u, dt, n_steps, periodic):
    T = np.array(state.T, dtype=np.float64, order="C")
    Se = np.array(state.S_e, dtype=np.float64, order="C")
    Sx = np.array(state.S_x, dtype=np.float64, order="C")
    if p.radiation_enabled and p.k_d * p.L <= 0:
        raise SingularConfigurationError("k_d * L must be positive when radiation is enabled")
    if not np.all(T > 0):
        raise InvalidStateError("temperature must be positive everywhere")
    if p.kappa4 * p.U * dt > 1.0:
        raise StabilityError(p.kappa4 * p.U * dt)
    g = state.grid
    status, at, ratio = _advance(T, Se, Sx, int(n_steps), float(dt), g.dx, g.dy,
                                 float(u[0]), float(u[1]), p.as_array(), bool(periodic))
    if status == _UNSTABLE:
        raise StabilityError(ratio, at)
    if status == _NONFINITE:
        raise DivergenceError(at)
    if status == _NONPOSITIVE:
        raise InvalidStateError(f"temperature became non-positive at step {at}")
    return state.with_fields(T, Se, Sx)


def step(state, p, u, dt, boundary="open"):
    """Advance ``state`` by one explicit step with velocity ``u = (ux, uy)``.

    ``boundary="periodic"`` wraps the domain; it exists for conservation checks.
    """
    if boundary not in ("open", "periodic"):
        raise ConfigError(f"unknown boundary mode {boundary!r}")
    return _run(state, p, u, dt, 1, boundary == "periodic")


def initial_state(grid, p, z, ignition=None, fidelity="LF"):
    """Ambient state with uniform fuel and an optional Gaussian ignition bump."""
    S_e0 = float(z.get("S_e0", 0.0))
    T = np.full(grid.shape, p.T_a)
    if ignition is not None and ignition.amplitude > 0:
        cx, cy = ignition.position(grid)
        if not (0 <= cx <= grid.lx and 0 <= cy <= grid.ly):
            raise ConfigError(f"ignition centre ({cx}, {cy}) outside the domain")
        r2 = (grid.x[None, :] - cx) ** 2
        if grid.dim == 2:
            r2 = r2 + (grid.y[:, None] - cy) ** 2
        T = T + ignition.amplitude * np.exp(-0.5 * r2 / ignition.width ** 2)
    S_e = np.full(grid.shape, S_e0)
    S_x = np.full(grid.shape, p.S_x0)
    return Snapshot(grid, T, S_e, S_x, z, fidelity)


def simulate(grid, p, z, ignition=IgnitionSpec(), fidelity="LF"):
    """Run from the ignited initial state to ``grid.t_final``."""
    p_eff = effective_params(p, z)
    state = initial_state(grid, p_eff, z, ignition, fidelity)
    return _run(state, p_eff, velocity(z, p, grid.dim), grid.dt, grid.n_steps, False)
