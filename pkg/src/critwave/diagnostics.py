"""Dynamical functionals: cutoff virial identities, exterior tail, S-norm
accumulation, and the empirical coercivity scan for F against E.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .fields import (
    FieldState,
    RadialGrid,
    boundary_ok,
    densities,
    f_functional,
    h_norm_sq,
    integrate_nodes,
    total_energy,
    u_over_r,
    u_r_values,
    u_t_values,
    u_values,
)
from .geometry import TargetGeometry

PHI_D1_MAX = 15.0 / 8.0
PHI_D2_MAX = 10.0 / math.sqrt(3.0)
# proof-level constant of the cutoff error, with a safety factor of 10
C_PHI = 10.0 * (1.0 + 2.0 * PHI_D1_MAX + 4.0 * PHI_D2_MAX)


def smoothstep(y):
    y = np.clip(y, 0.0, 1.0)
    return y**3 * (10.0 - 15.0 * y + 6.0 * y**2)


@dataclass(frozen=True)
class CutoffFunction:
    """phi_R(r) = phi(r/R): 1 on [0, R], 0 beyond 2R, quintic smoothstep between."""
    R: float

    def __call__(self, r):
        return 1.0 - smoothstep(np.asarray(r, dtype=float) / self.R - 1.0)

    def derivative(self, r):
        y = np.clip(np.asarray(r, dtype=float) / self.R - 1.0, 0.0, 1.0)
        return -30.0 * y**2 * (1.0 - y) ** 2 / self.R

    def second_derivative(self, r):
        y = np.clip(np.asarray(r, dtype=float) / self.R - 1.0, 0.0, 1.0)
        return -60.0 * y * (1.0 - y) * (1.0 - 2.0 * y) / self.R**2


def tail(state: FieldState, R: float) -> float:
    """tau(R) = int_R^inf (u_t^2 + u_r^2 + u^2/r^2) r dr, truncated at r_max."""
    grid = state.grid
    if R >= grid.r_max:
        raise ValueError(f"tail radius {R} must be below r_max = {grid.r_max}")
    r = grid.r
    dens = (u_t_values(state) ** 2 + u_r_values(state) ** 2 + u_over_r(state) ** 2) * r
    return integrate_nodes(dens, grid, max(R, 0.0), grid.r_max)


@dataclass
class VirialSample:
    t: float
    v1: float  # int u_t u_r r^2 phi_R dr
    v2: float  # int u u_t r phi_R dr
    main1: float  # -int u_t^2 r dr
    main2: float  # int (u_t^2 - u_r^2 - u f(u)/r^2) r phi_R dr
    tail: float


def virial_sample(state: FieldState, geometry: TargetGeometry, R: float) -> VirialSample:
    grid = state.grid
    if R > grid.r_max / 2 * (1 + 1e-12):
        raise ValueError("virial radius must satisfy R <= r_max / 2")
    r, h = grid.r, grid.h
    phi = CutoffFunction(R)(r)
    u, u_t, u_r = u_values(state), u_t_values(state), u_r_values(state)
    dens = densities(state, geometry)
    v1 = np.trapezoid(u_t * u_r * r**2 * phi, dx=h)
    v2 = np.trapezoid(u * u_t * r * phi, dx=h)
    main1 = -np.trapezoid(dens.kinetic, dx=h)
    main2 = np.trapezoid((dens.kinetic - dens.gradient - dens.virial_potential) * phi, dx=h)
    return VirialSample(state.t, float(v1), float(v2), float(main1), float(main2), tail(state, R))


@dataclass
class VirialResiduals:
    t: np.ndarray
    residual1: np.ndarray
    residual2: np.ndarray
    bound: np.ndarray  # C_phi * tail

    def max_excess(self) -> float:
        """Largest amount by which a residual exceeds the tail bound (<= 0 is good)."""
        worst = np.maximum(np.abs(self.residual1), np.abs(self.residual2)) - self.bound
        return float(worst.max()) if len(worst) else 0.0


def virial_residuals(record, R: float | None = None) -> VirialResiduals:
    """Centered time differences of the virial quantities minus their main terms."""
    if record.virial_radius is None or (R is not None and not math.isclose(R, record.virial_radius)):
        raise ValueError(f"record carries no virial samples at R = {R}")
    t = record.column("t")
    v1, v2 = record.column("virial1"), record.column("virial2")
    m1, m2 = record.column("main1"), record.column("main2")
    if len(t) > 3 and not math.isclose(t[-1] - t[-2], t[1] - t[0], rel_tol=1e-9):
        # short final chunk when t_max is not a multiple of the stride
        t, v1, v2, m1, m2 = t[:-1], v1[:-1], v2[:-1], m1[:-1], m2[:-1]
    if len(t) < 3:
        empty = np.zeros(0)
        return VirialResiduals(empty, empty, empty, empty)
    d1 = (v1[2:] - v1[:-2]) / (t[2:] - t[:-2])
    d2 = (v2[2:] - v2[:-2]) / (t[2:] - t[:-2])
    bound = C_PHI * record.column("virial_tail")[1 : len(t) - 1]
    return VirialResiduals(t[1:-1], d1 - m1[1:-1], d2 - m2[1:-1], bound)


def s_integrand(state: FieldState) -> float:
    """int |v|^(2+3/k) r^(2k+1) dr: the space part of the S-norm."""
    k = state.k
    r = state.grid.r
    return float(np.trapezoid(np.abs(state.v) ** (2.0 + 3.0 / k) * r ** (2 * k + 1), dx=state.grid.h))


def accumulate(t: np.ndarray, density: np.ndarray) -> np.ndarray:
    """Left-rectangle running time integral."""
    t = np.asarray(t, dtype=float)
    density = np.asarray(density, dtype=float)
    acc = np.zeros_like(t)
    if len(t) > 1:
        acc[1:] = np.cumsum(np.diff(t) * density[:-1])
    return acc


def snorm_accumulate(record) -> np.ndarray:
    """Cumulative S-norm power along the run."""
    return accumulate(record.column("t"), record.column("snorm_density"))


def trailing_increment(t: np.ndarray, acc: np.ndarray, window: float = 0.1) -> float:
    """Relative growth of ``acc`` over the last ``window`` fraction of the run."""
    t = np.asarray(t)
    acc = np.asarray(acc)
    total = float(acc[-1])
    if total <= 0.0:
        return 0.0
    t0 = t[0] + (1.0 - window) * (t[-1] - t[0])
    before = float(np.interp(t0, t, acc))
    return (total - before) / total


# ---------------------------------------------------------------- coercivity


@dataclass
class Lemma7Scan:
    c_emp: float
    min_ratio: float
    max_ratio: float
    delta: float
    n: int
    seed: int
    ratios: np.ndarray = field(repr=False)
    energies: np.ndarray = field(repr=False)
    worst_low: dict = field(default_factory=dict)
    worst_high: dict = field(default_factory=dict)
    rejected: int = 0

    def to_json(self) -> dict:
        return {"c_emp": self.c_emp, "delta": self.delta, "n": self.n, "seed": self.seed,
                "min_ratio": self.min_ratio, "max_ratio": self.max_ratio, "rejected": self.rejected,
                "worst_low": self.worst_low, "worst_high": self.worst_high}


class RejectedProfile(ValueError):
    pass


SCAN_GRID = RadialGrid(4000, 40.0)


def random_profile(rng: np.random.Generator, k: int, grid: RadialGrid = SCAN_GRID) -> tuple[np.ndarray, dict]:
    """Sum of 1-3 bumps a_i r^k exp(-b_i (r - c_i)^2) with seeded parameters."""
    n_bumps = int(rng.integers(1, 4))
    a = rng.uniform(-1.0, 1.0, n_bumps)
    b = np.exp(rng.uniform(np.log(0.3), np.log(20.0), n_bumps))
    c = rng.uniform(0.0, 6.0, n_bumps)
    params = {"a": a.tolist(), "b": b.tolist(), "c": c.tolist()}
    return bump_sum(params, k, grid), params


def bump_sum(params: dict, k: int, grid: RadialGrid = SCAN_GRID) -> np.ndarray:
    """u(r) = scale * sum_i a_i r^k exp(-b_i (r - c_i)^2) on the grid nodes."""
    r = grid.r
    u = np.zeros_like(r)
    for ai, bi, ci in zip(params["a"], params["b"], params["c"]):
        u += ai * r**k * np.exp(-bi * (r - ci) ** 2)
    return params.get("scale", 1.0) * u


def scale_to_energy(u: np.ndarray, grid: RadialGrid, geometry: TargetGeometry, target: float) -> tuple[float, FieldState]:
    """Amplitude s with E(s u) = target, by bracketing and bisection."""
    k = geometry.k

    def state_for(s):
        return FieldState.from_u(grid, s * u, k=k)

    def e_of(s):
        return total_energy(state_for(s), geometry)

    peak = float(np.max(np.abs(u)))
    if peak == 0.0:
        raise RejectedProfile("zero profile")
    lo, hi = 0.0, 0.25 * geometry.c_star / peak
    while e_of(hi) < target:
        lo, hi = hi, 2.0 * hi
        if hi * peak > geometry.c_star:
            raise RejectedProfile("amplitude reached C* before the target energy")
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if e_of(mid) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-13 * hi:
            break
    s = 0.5 * (lo + hi)
    return s, state_for(s)


def lemma7_scan(geometry: TargetGeometry, delta: float, n_profiles: int = 200, seed: int = 0,
                grid: RadialGrid = SCAN_GRID) -> Lemma7Scan:
    """Random search for the extremes of F(u)/E(u) over (u, 0) in V(delta).

    Target energies are stratified over (0, E(Q) + delta) so that every batch
    probes the upper end of the admissible range.
    """
    e_q = geometry.e_q
    if not 0.0 < delta <= 0.5 * e_q:
        raise ValueError("delta must lie in (0, E(Q)/2]")
    if n_profiles < 100:
        raise ValueError("n_profiles must be >= 100")
    seeds = np.random.SeedSequence(seed).spawn(n_profiles)
    ratios, energies, params = [], [], []
    rejected = 0
    e_cap = e_q + delta
    for i, ss in enumerate(seeds):
        rng = np.random.default_rng(ss)
        frac = (i + rng.uniform(0.05, 0.95)) / n_profiles
        target = frac * e_cap
        while True:
            u, p = random_profile(rng, geometry.k, grid)
            try:
                s, state = scale_to_energy(u, grid, geometry, target)
            except RejectedProfile:
                rejected += 1
                continue
            if boundary_ok(state) and total_energy(state, geometry) < e_cap:
                break
            rejected += 1
        e = total_energy(state, geometry)
        fv = f_functional(state, geometry)
        if not fv > 0.0:
            raise AssertionError(f"F(u) = {fv} <= 0 for an admissible profile {p}")
        ratios.append(fv / e)
        energies.append(e)
        params.append({**p, "scale": s, "energy": e, "F": fv, "index": i})
    ratios = np.array(ratios)
    lo, hi = int(np.argmin(ratios)), int(np.argmax(ratios))
    c_emp = float(min(ratios[lo], 1.0 / ratios[hi]))
    return Lemma7Scan(c_emp, float(ratios[lo]), float(ratios[hi]), delta, n_profiles, seed, ratios,
                      np.array(energies), params[lo], params[hi], rejected)


def h_norm(state: FieldState) -> float:
    return math.sqrt(h_norm_sq(state))
