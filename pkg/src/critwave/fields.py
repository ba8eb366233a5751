"""Uniform radial grid, field state in v = u / r^k form, and static functionals.

All u-space quantities are reconstructed on the fly from v:

    u = r^k v,   u_r = r^k v_r + k r^(k-1) v,   u / r = r^(k-1) v.

Integrals are composite trapezoid sums over grid nodes with weight r dr.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.integrate import cumulative_simpson

from .geometry import TargetGeometry

BOUNDARY_TOL = 1e-6
PAIR_SCAN_POINTS = 512
CHECKPOINT_FORMAT = "critwave-checkpoint"
CHECKPOINT_VERSION = 1


class FieldDomainError(ValueError):
    pass


class PreconditionError(ValueError):
    pass


@dataclass(frozen=True)
class RadialGrid:
    n_cells: int
    r_max: float

    def __post_init__(self):
        if self.n_cells < 16:
            raise ValueError("n_cells must be >= 16")
        if not self.r_max > 0:
            raise ValueError("r_max must be positive")

    @property
    def h(self) -> float:
        return self.r_max / self.n_cells

    @cached_property
    def r(self) -> np.ndarray:
        r = np.arange(self.n_cells + 1) * self.h
        r.setflags(write=False)
        return r

    def mask(self, a: float, b: float) -> np.ndarray:
        eps = 1e-9 * self.h
        return (self.r >= a - eps) & (self.r <= b + eps)


@dataclass
class FieldState:
    grid: RadialGrid
    t: float
    v: np.ndarray
    v_t: np.ndarray
    k: int

    def __post_init__(self):
        n = self.grid.n_cells + 1
        self.v = np.asarray(self.v, dtype=float)
        self.v_t = np.asarray(self.v_t, dtype=float)
        if self.v.shape != (n,) or self.v_t.shape != (n,):
            raise ValueError(f"field arrays must have length {n}")

    @classmethod
    def from_u(cls, grid: RadialGrid, u, u_t=None, k: int = 1, t: float = 0.0) -> "FieldState":
        """Build a state from u-samples; v(0) is extrapolated from the first nodes."""
        r = grid.r
        u = np.asarray(u, dtype=float)
        u_t = np.zeros_like(u) if u_t is None else np.asarray(u_t, dtype=float)
        return cls(grid, t, _divide_rk(u, r, k), _divide_rk(u_t, r, k), k)

    @classmethod
    def zeros(cls, grid: RadialGrid, k: int) -> "FieldState":
        n = grid.n_cells + 1
        return cls(grid, 0.0, np.zeros(n), np.zeros(n), k)

    def copy(self) -> "FieldState":
        return FieldState(self.grid, self.t, self.v.copy(), self.v_t.copy(), self.k)

    def __sub__(self, other: "FieldState") -> "FieldState":
        return FieldState(self.grid, self.t, self.v - other.v, self.v_t - other.v_t, self.k)


def _divide_rk(u, r, k):
    v = np.empty_like(u)
    v[1:] = u[1:] / r[1:] ** k
    # v is even in r: quadratic extrapolation in r^2 from nodes 1 and 2
    v[0] = (4.0 * v[1] - v[2]) / 3.0 if len(v) > 2 else v[1]
    return v


def u_values(state: FieldState) -> np.ndarray:
    u = state.grid.r ** state.k * state.v
    u[0] = 0.0
    return u


def u_t_values(state: FieldState) -> np.ndarray:
    u_t = state.grid.r ** state.k * state.v_t
    u_t[0] = 0.0
    return u_t


def v_r_values(state: FieldState) -> np.ndarray:
    vr = np.gradient(state.v, state.grid.h, edge_order=2)
    vr[0] = 0.0  # regularity at the origin
    return vr


def v_r_values_4th(state: FieldState) -> np.ndarray:
    """Fourth-order centered v_r, using the even extension v(-r) = v(r) at the origin."""
    v, h = state.v, state.grid.h
    vr = np.gradient(v, h, edge_order=2)
    if len(v) >= 5:
        ext = np.concatenate([v[2:0:-1], v])
        vr[:-2] = (ext[:-4] - 8.0 * ext[1:-3] + 8.0 * ext[3:-1] - ext[4:]) / (12.0 * h)
    vr[0] = 0.0
    return vr


def u_r_values(state: FieldState) -> np.ndarray:
    r, k = state.grid.r, state.k
    return r**k * v_r_values(state) + k * r ** (k - 1) * state.v


def u_over_r(state: FieldState) -> np.ndarray:
    return state.grid.r ** (state.k - 1) * state.v


@dataclass
class Densities:
    """Pointwise integrands, already multiplied by the measure weight r."""
    r: np.ndarray
    kinetic: np.ndarray
    gradient: np.ndarray
    potential: np.ndarray
    virial_potential: np.ndarray
    hardy: np.ndarray

    @property
    def energy(self) -> np.ndarray:
        return self.kinetic + self.gradient + self.potential

    @property
    def static(self) -> np.ndarray:
        return self.gradient + self.potential


def densities(state: FieldState, geometry: TargetGeometry) -> Densities:
    r = state.grid.r
    u = u_values(state)
    u_t = u_t_values(state)
    u_r = u_r_values(state)
    w = u_over_r(state)  # u / r, regular at 0
    safe_r = np.where(r > 0, r, 1.0)
    g_over_r = np.where(r > 0, geometry.g(u) / safe_r, geometry.k * state.v[0] if state.k == 1 else 0.0)
    d_over_r2 = np.where(r > 0, geometry.d(u) / safe_r**2, (geometry.k * state.v[0]) ** 2 if state.k == 1 else 0.0)
    return Densities(
        r=r,
        kinetic=u_t**2 * r,
        gradient=u_r**2 * r,
        potential=g_over_r**2 * r,
        virial_potential=d_over_r2 * r,
        hardy=w**2 * r,
    )


def integrate_nodes(values: np.ndarray, grid: RadialGrid, a: float = 0.0, b: float | None = None) -> float:
    """Composite trapezoid over the nodes lying in [a, b]."""
    b = grid.r_max if b is None else b
    if a < -1e-12 or b > grid.r_max * (1 + 1e-12) or a > b:
        raise FieldDomainError(f"interval [{a}, {b}] not inside [0, {grid.r_max}]")
    m = grid.mask(a, b)
    if m.sum() < 2:
        return 0.0
    return float(np.trapezoid(values[m], dx=grid.h))


@dataclass
class EnergyReport:
    e_total: float
    e_kinetic: float
    e_potential: float
    f_functional: float
    h_norm_sq: float
    sup_u: float
    partials: list = field(default_factory=list)


def energy(state: FieldState, geometry: TargetGeometry, a: float = 0.0, b: float | None = None,
           partials=()) -> EnergyReport:
    """Energy pieces on [a, b]; ``partials`` adds (a', b', E_a'^b') triples."""
    grid = state.grid
    b = grid.r_max if b is None else b
    if not 0.0 <= a < b <= grid.r_max * (1 + 1e-12):
        raise FieldDomainError(f"interval [{a}, {b}] not inside [0, {grid.r_max}]")
    dens = densities(state, geometry)
    e_kin = integrate_nodes(dens.kinetic, grid, a, b)
    e_pot = integrate_nodes(dens.static, grid, a, b)
    f_val = integrate_nodes(dens.gradient + dens.virial_potential, grid, a, b)
    hn = integrate_nodes(dens.kinetic + dens.gradient + dens.hardy, grid, a, b)
    m = grid.mask(a, b)
    sup_u = float(np.max(np.abs(u_values(state)[m])))
    parts = [(pa, pb, integrate_nodes(dens.energy, grid, pa, pb)) for pa, pb in partials]
    return EnergyReport(e_kin + e_pot, e_kin, e_pot, f_val, hn, sup_u, parts)


def total_energy(state: FieldState, geometry: TargetGeometry) -> float:
    dens = densities(state, geometry)
    return float(np.trapezoid(dens.energy, dx=state.grid.h))


def f_functional(state: FieldState, geometry: TargetGeometry) -> float:
    """F(u) = int (u_r^2 + d(u)/r^2) r dr."""
    dens = densities(state, geometry)
    return float(np.trapezoid(dens.gradient + dens.virial_potential, dx=state.grid.h))


def h_norm_sq(state: FieldState, a: float = 0.0, b: float | None = None, velocity: bool = True) -> float:
    """||(u, u_t)||^2 in H x L^2 on [a, b]; ``velocity=False`` gives ||u||_H^2."""
    r = state.grid.r
    dens = u_r_values(state) ** 2 * r + u_over_r(state) ** 2 * r
    if velocity:
        dens = dens + u_t_values(state) ** 2 * r
    return integrate_nodes(dens, state.grid, a, b)


def hxl2_distance(a: FieldState, b: FieldState, lo: float = 0.0, hi: float | None = None,
                  velocity: bool = True) -> float:
    return float(np.sqrt(h_norm_sq(a - b, lo, hi, velocity)))


def boundary_ok(state: FieldState, tol: float = BOUNDARY_TOL) -> bool:
    u = u_values(state)
    return abs(u[-1]) <= tol * max(1.0, float(np.max(np.abs(u))))


@dataclass
class PointwiseBound:
    violation: float
    r_pair: tuple[float, float]
    lhs: float
    rhs: float
    nodes: np.ndarray = field(repr=False)
    lhs_matrix: np.ndarray = field(repr=False)
    rhs_matrix: np.ndarray = field(repr=False)


def check_pointwise_bound(state: FieldState, geometry: TargetGeometry,
                          max_points: int = PAIR_SCAN_POINTS) -> PointwiseBound:
    """Worst case of |G(u(r)) - G(u(r'))| - E_r^r'(u) / 2 over decimated node pairs."""
    grid = state.grid
    r, k, v = grid.r, state.k, state.v
    # the bound is sharp wherever r u_r ~ +-g(u), so the scan uses a
    # higher-order density than the energy: 4th-order v_r, Simpson in r
    u_r = r**k * v_r_values_4th(state) + k * r ** (k - 1) * v
    safe_r = np.where(r > 0, r, 1.0)
    g_over_r = np.where(r > 0, geometry.g(r**k * v) / safe_r, k * v[0] if k == 1 else 0.0)
    cum = cumulative_simpson((u_r**2 + g_over_r**2) * r, dx=grid.h, initial=0.0)
    n = grid.n_cells
    idx = np.unique(np.rint(np.linspace(0, n, min(max_points, n + 1))).astype(int))
    Gu = geometry.G(u_values(state)[idx])
    lhs = np.abs(Gu[:, None] - Gu[None, :])
    rhs = 0.5 * np.abs(cum[idx][:, None] - cum[idx][None, :])
    gap = lhs - rhs
    i, j = np.unravel_index(int(np.argmax(gap)), gap.shape)
    return PointwiseBound(float(gap[i, j]), (float(r[idx[i]]), float(r[idx[j]])), float(lhs[i, j]),
                          float(rhs[i, j]), idx, lhs, rhs)


def sup_bound_check(state: FieldState, geometry: TargetGeometry) -> tuple[float, float]:
    """(sup |u|, K(E)) for a state with trivial endpoints and E < 2 E(Q)."""
    if not boundary_ok(state):
        raise PreconditionError("u(r_max) is not ~0; the sup bound needs u(0) = u(inf) = 0")
    e = total_energy(state, geometry)
    if e >= 2.0 * geometry.e_q:
        raise PreconditionError(f"energy {e} is not below 2 E(Q) = {2 * geometry.e_q}")
    return float(np.max(np.abs(u_values(state)))), geometry.K(e)


def membership_V(state: FieldState, geometry: TargetGeometry, delta: float) -> bool:
    """Discrete test of (u, u_t) in V(delta): E < E(Q) + delta and u(inf) = 0."""
    if not 0.0 < delta <= geometry.e_q:
        raise ValueError("delta must lie in (0, E(Q)]")
    return total_energy(state, geometry) < geometry.e_q + delta and boundary_ok(state)


@dataclass
class Lemma4Check:
    v_gradient: float  # int v_r^2 r^(2k+1) dr
    h_norm: float  # ||u||_H^2
    margin_upper: float  # (k^2+1) ||u||_H^2 - int v_r^2 r^(2k+1)
    margin_lower: float  # (2 + 1/k^2) int v_r^2 r^(2k+1) - ||u||_H^2
    displayed: dict = field(default_factory=dict)


def lemma4_check(state: FieldState) -> Lemma4Check:
    k, r = state.k, state.grid.r
    vr = v_r_values(state)
    a = float(np.trapezoid(vr**2 * r ** (2 * k + 1), dx=state.grid.h))
    b = h_norm_sq(state, velocity=False)
    displayed = {
        "lower": b - a / 3.0,  # (1/3) A <= B as printed
        "upper": (k * k + 1) * a - b,
    }
    return Lemma4Check(a, b, (k * k + 1) * b - a, (2.0 + 1.0 / k**2) * a - b, displayed)


def snapshot_rows(state: FieldState):
    yield ("r", "v", "v_t", "u", "u_t")
    cols = (state.grid.r, state.v, state.v_t, u_values(state), u_t_values(state))
    for row in zip(*cols):
        yield tuple(repr(float(x)) for x in row)


def write_snapshot_csv(state: FieldState, path) -> None:
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerows(snapshot_rows(state))


def save_checkpoint(state: FieldState, path) -> None:
    """Exact binary checkpoint (npz with a versioned header)."""
    with open(path, "wb") as fh:
        np.savez(fh, format=np.array(CHECKPOINT_FORMAT), version=np.array(CHECKPOINT_VERSION),
                 n_cells=np.array(state.grid.n_cells), r_max=np.array(state.grid.r_max),
                 t=np.array(state.t), k=np.array(state.k), v=state.v, v_t=state.v_t)


def load_checkpoint(path) -> FieldState:
    with np.load(path, allow_pickle=False) as z:
        if str(z["format"]) != CHECKPOINT_FORMAT:
            raise ValueError(f"{path} is not a critwave checkpoint")
        if int(z["version"]) != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {int(z['version'])}")
        grid = RadialGrid(int(z["n_cells"]), float(z["r_max"]))
        return FieldState(grid, float(z["t"]), z["v"].copy(), z["v_t"].copy(), int(z["k"]))
