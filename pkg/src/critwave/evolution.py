"""Leapfrog evolution of the v-form equation

    v_tt = v_rr + (2k+1)/r v_r - h(r^k v) v^(1+2/k),     u = r^k v,

which is the radial energy-critical wave equation in dimension 2k+2.  The
linear flow is the same scheme without the source term.

The integrator is leapfrog in its kick-drift-kick form, so velocities live on
integer time levels and the first step is v^1 = v^0 + dt v_t^0 + dt^2/2 a^0.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import diagnostics as diag
from .fields import (
    Densities,
    FieldState,
    RadialGrid,
    densities,
    hxl2_distance,
    u_values,
    v_r_values,
)
from .geometry import TargetGeometry, eval_h, h_origin

INSTABILITY_LIMIT = 1e12
BOUNDARIES = ("dirichlet_zero", "dirichlet_frozen")
STENCILS = ("flux", "centered")
CLASSES = ("dispersed", "stationary", "blowup-suspected", "undecided")


class InstabilityError(RuntimeError):
    pass


@dataclass
class EvolutionConfig:
    dt_factor: float = 0.25
    t_max: float = 10.0
    snapshot_stride: int = 10
    field_stride: int = 0  # series samples between stored field snapshots; 0 keeps first and last only
    blowup_gradient_threshold: float = 1e6
    blowup_concentration_radius: float | None = None  # default 4h
    blowup_concentration_fraction: float = 0.5
    boundary: str = "dirichlet_zero"
    nonlinear: bool = True
    stencil: str = "flux"

    def __post_init__(self):
        if not 0.0 < self.dt_factor <= 0.5:
            raise ValueError("dt_factor must lie in (0, 0.5]")
        if not self.t_max > 0:
            raise ValueError("t_max must be positive")
        if self.snapshot_stride < 1:
            raise ValueError("snapshot_stride must be >= 1")
        if self.boundary not in BOUNDARIES:
            raise ValueError(f"boundary must be one of {BOUNDARIES}")
        if self.stencil not in STENCILS:
            raise ValueError(f"stencil must be one of {STENCILS}")


@dataclass
class Thresholds:
    dispersal: float = 0.05
    snorm_trailing: float = 0.01
    trailing_window: float = 0.1
    stationary: float = 1e-2  # times sqrt(E)


class Operator:
    """Discrete right-hand side a(v) of v_tt = a(v) on a fixed grid.

    ``stencil="flux"`` discretizes r^-(d-1) (r^(d-1) v_r)_r in conservation
    form, which is self-adjoint in the cell-volume weight and so has a real,
    nonpositive spectrum.  ``stencil="centered"`` is the textbook
    second difference plus centered drift; for k = 2 it carries a complex
    eigenvalue pair near the origin and leapfrog grows like exp(c t / h).
    Both share the origin row d * 2 (v_1 - v_0) / h^2.
    """

    def __init__(self, grid: RadialGrid, k: int, geometry: TargetGeometry | None, nonlinear: bool = True,
                 stencil: str = "flux"):
        if stencil not in STENCILS:
            raise ValueError(f"stencil must be one of {STENCILS}")
        self.grid, self.k = grid, k
        self.geometry = geometry
        self.nonlinear = nonlinear and geometry is not None
        self.stencil = stencil
        h, r = grid.h, grid.r
        d = 2 * k + 2
        rj = r[1:-1]
        if stencil == "flux":
            rp, rm = rj + 0.5 * h, rj - 0.5 * h
            vol = (rp**d - rm**d) / (d * h)
            self.c_plus = rp ** (d - 1) / (vol * h * h)
            self.c_minus = rm ** (d - 1) / (vol * h * h)
        else:
            self.c_plus = 1.0 / h**2 + (2 * k + 1) / (2.0 * h * rj)
            self.c_minus = 1.0 / h**2 - (2 * k + 1) / (2.0 * h * rj)
        self.origin = d * 2.0 / h**2
        self.rk = r**k
        self.h0 = h_origin(geometry) if self.nonlinear else 0.0

    def source(self, v: np.ndarray) -> np.ndarray:
        u = self.rk * v
        hv = eval_h(self.geometry, u, h0=self.h0)
        return hv * (v * v * v if self.k == 1 else v * v)

    def __call__(self, v: np.ndarray) -> np.ndarray:
        a = np.empty_like(v)
        vm, vc, vp = v[:-2], v[1:-1], v[2:]
        a[1:-1] = self.c_plus * (vp - vc) - self.c_minus * (vc - vm)
        a[0] = self.origin * (v[1] - v[0])
        if self.nonlinear:
            a -= self.source(v)
        a[-1] = 0.0
        return a


def _check(v: np.ndarray, t: float) -> None:
    m = float(np.max(np.abs(v)))
    if not m <= INSTABILITY_LIMIT:  # also catches NaN
        raise InstabilityError(f"field blew past {INSTABILITY_LIMIT:g} at t = {t:.6g}")


def _prepare(state: FieldState, boundary: str) -> tuple[np.ndarray, np.ndarray]:
    v, vt = state.v.copy(), state.v_t.copy()
    vt[-1] = 0.0
    if boundary == "dirichlet_zero":
        v[-1] = 0.0
    return v, vt


def _advance(op: Operator, v, vt, a, dt, n_steps, t0):
    """n leapfrog (kick-drift-kick) steps in place; returns the new acceleration."""
    half = 0.5 * dt
    for i in range(n_steps):
        vt += half * a
        v += dt * vt
        a = op(v)
        vt += half * a
        _check(v, t0 + (i + 1) * dt)
    return a


def step(state: FieldState, geometry: TargetGeometry | None, dt: float,
         boundary: str = "dirichlet_zero", nonlinear: bool = True, dt_factor: float = 0.5,
         stencil: str = "flux") -> FieldState:
    """One leapfrog step of the nonlinear (or, with ``nonlinear=False``, linear) flow."""
    if dt > dt_factor * state.grid.h * (1 + 1e-12):
        raise ValueError(f"dt = {dt} exceeds the stability limit {dt_factor} h")
    op = Operator(state.grid, state.k, geometry, nonlinear, stencil)
    v, vt = _prepare(state, boundary)
    _advance(op, v, vt, op(v), dt, 1, state.t)
    return FieldState(state.grid, state.t + dt, v, vt, state.k)


def linear_evolve(state: FieldState, dt: float, steps: int = 1, boundary: str = "dirichlet_zero",
                  stencil: str = "flux") -> FieldState:
    """Free flow W(t) (conjugated: v solves the radial wave equation in dim 2k+2)."""
    if dt > 0.5 * state.grid.h * (1 + 1e-12):
        raise ValueError("dt exceeds the stability limit 0.5 h")
    op = Operator(state.grid, state.k, None, nonlinear=False, stencil=stencil)
    v, vt = _prepare(state, boundary)
    _advance(op, v, vt, op(v), dt, steps, state.t)
    return FieldState(state.grid, state.t + steps * dt, v, vt, state.k)


@dataclass
class RunRecord:
    config: EvolutionConfig
    geometry_tag: str
    initial: dict
    grid: RadialGrid
    k: int
    dt: float
    series: dict
    snapshots: list = field(repr=False)
    triggers: list = field(default_factory=list)
    classification: str = "undecided"
    tail_radii: tuple = ()
    virial_radius: float | None = None
    interior_radius: float = 1.0

    @property
    def times(self) -> np.ndarray:
        return np.asarray(self.series["t"])

    def column(self, name: str) -> np.ndarray:
        return np.asarray(self.series[name])

    def snapshot_at(self, t: float) -> FieldState:
        for s in self.snapshots:
            if abs(s.t - t) <= 0.5 * self.dt:
                return s
        raise KeyError(f"no field snapshot at t = {t}")

    @property
    def e_initial(self) -> float:
        return float(self.series["E"][0])

    @property
    def e_drift_rel(self) -> float:
        e = self.column("E")
        return float(np.max(np.abs(e - e[0])) / e[0]) if e[0] > 0 else float(np.max(np.abs(e)))

    def summary(self) -> dict:
        return {
            "classification": self.classification,
            "e_initial": self.e_initial,
            "e_drift_rel": self.e_drift_rel,
            "triggers": self.triggers,
            "t_final": float(self.times[-1]),
            "dt": self.dt,
            "geometry": self.geometry_tag,
            "config": asdict(self.config),
        }

    def series_columns(self) -> list[str]:
        cols = ["t", "E", "E_kin", "sup_u", "sup_vr"]
        cols += [f"tail@{R:g}" for R in self.tail_radii]
        cols += ["virial1", "virial2", "main1", "main2", "virial_tail"] if self.virial_radius is not None else []
        cols += ["snorm_density", "snorm_acc", "interior_E", "dist0"]
        return cols


def _sample(state: FieldState, geometry: TargetGeometry, initial: FieldState,
            tail_radii, virial_radius, interior_radius) -> tuple[dict, Densities]:
    dens = densities(state, geometry)
    h = state.grid.h
    row = {
        "t": state.t,
        "E": float(np.trapezoid(dens.energy, dx=h)),
        "E_kin": float(np.trapezoid(dens.kinetic, dx=h)),
        "sup_u": float(np.max(np.abs(u_values(state)))),
        "sup_vr": float(np.max(np.abs(v_r_values(state)))),
    }
    for R in tail_radii:
        row[f"tail@{R:g}"] = diag.tail(state, R)
    if virial_radius is not None:
        vs = diag.virial_sample(state, geometry, virial_radius)
        row.update(virial1=vs.v1, virial2=vs.v2, main1=vs.main1, main2=vs.main2, virial_tail=vs.tail)
    row["snorm_density"] = diag.s_integrand(state)
    m = state.grid.mask(0.0, interior_radius)
    row["interior_E"] = float(np.trapezoid(dens.energy[m], dx=h)) if m.sum() > 1 else 0.0
    row["dist0"] = hxl2_distance(state, initial)
    return row, dens


def evolve(initial: FieldState, geometry: TargetGeometry, config: EvolutionConfig,
           tail_radii=(), virial_radius: float | None = None, interior_radius: float = 1.0,
           descriptor: dict | None = None, thresholds: Thresholds | None = None) -> RunRecord:
    """Run from ``initial`` to ``config.t_max`` (or a blow-up trigger) and classify."""
    grid, k = initial.grid, initial.k
    if k != geometry.k:
        raise ValueError("state and geometry disagree on k")
    n_steps = max(1, math.ceil(config.t_max / (config.dt_factor * grid.h) - 1e-9))
    dt = config.t_max / n_steps
    op = Operator(grid, k, geometry, config.nonlinear, config.stencil)
    v, vt = _prepare(initial, config.boundary)
    start = FieldState(grid, initial.t, v.copy(), vt.copy(), k)
    conc_radius = config.blowup_concentration_radius or 4.0 * grid.h

    cols: dict[str, list] = {}
    snapshots = [start.copy()]
    triggers = []
    n_samples = 0

    def record(state):
        nonlocal n_samples
        row, dens = _sample(state, geometry, start, tail_radii, virial_radius, interior_radius)
        for key, val in row.items():
            cols.setdefault(key, []).append(val)
        n_samples += 1
        return row, dens

    record(start)
    a = op(v)
    t0 = initial.t
    done = 0
    while done < n_steps:
        chunk = min(config.snapshot_stride, n_steps - done)
        a = _advance(op, v, vt, a, dt, chunk, t0 + done * dt)
        done += chunk
        state = FieldState(grid, t0 + done * dt, v.copy(), vt.copy(), k)
        row, dens = record(state)
        if config.field_stride and (n_samples - 1) % config.field_stride == 0 and done < n_steps:
            snapshots.append(state)
        if row["sup_vr"] > config.blowup_gradient_threshold:
            triggers.append({"kind": "gradient", "t": state.t, "value": row["sup_vr"]})
        inner = grid.mask(0.0, conc_radius)
        e_in = float(np.trapezoid(dens.energy[inner], dx=grid.h))
        if row["E"] > 0 and e_in > config.blowup_concentration_fraction * row["E"]:
            triggers.append({"kind": "concentration", "t": state.t, "value": e_in / row["E"]})
        if triggers:
            break
    if snapshots[-1].t != state.t:
        snapshots.append(state)

    series = {key: np.asarray(val) for key, val in cols.items()}
    series["snorm_acc"] = diag.accumulate(series["t"], series["snorm_density"])
    rec = RunRecord(config=config, geometry_tag=geometry.kind, initial=descriptor or {}, grid=grid, k=k, dt=dt,
                    series=series, snapshots=snapshots, triggers=triggers, tail_radii=tuple(tail_radii),
                    virial_radius=virial_radius, interior_radius=interior_radius)
    rec.classification = classify(rec, thresholds or Thresholds())
    return rec


def classify(record: RunRecord, thresholds: Thresholds | None = None) -> str:
    """Empirical dichotomy: stationary, dispersed, blowup-suspected or undecided."""
    th = thresholds or Thresholds()
    if record.triggers:
        return "blowup-suspected"
    e0 = record.e_initial
    if float(np.max(record.column("dist0"))) <= th.stationary * math.sqrt(max(e0, 0.0)):
        return "stationary"
    e_end = float(record.column("E")[-1])
    frac = float(record.column("interior_E")[-1]) / e_end if e_end > 0 else 0.0
    trailing = diag.trailing_increment(record.times, record.column("snorm_acc"), th.trailing_window)
    if frac < th.dispersal and trailing < th.snorm_trailing:
        return "dispersed"
    return "undecided"


@dataclass
class LinearComparison:
    t: np.ndarray
    residual: np.ndarray
    norm: np.ndarray  # ||(u, u_t)(t)|| of the nonlinear solution


def compare_to_linear(record: RunRecord, t_fit: float, horizon: float) -> LinearComparison:
    """Residual t -> ||u_nl(t) - W(t - t_fit) u_nl(t_fit)|| over [t_fit, t_fit + horizon]."""
    try:
        base = record.snapshot_at(t_fit)
    except KeyError:
        raise KeyError(f"record has no snapshot at T_fit = {t_fit}") from None
    later = sorted((s for s in record.snapshots if t_fit - 0.5 * record.dt <= s.t <= t_fit + horizon + 0.5 * record.dt),
                   key=lambda s: s.t)
    if len(later) < 2 and horizon > 0:
        raise KeyError(f"record has no snapshots on (T_fit, T_fit + {horizon}]")
    op = Operator(base.grid, base.k, None, nonlinear=False, stencil=record.config.stencil)
    v, vt = _prepare(base, record.config.boundary)
    a = op(v)
    steps_done = 0
    ts, res, norms = [], [], []
    for snap in later:
        target = int(round((snap.t - base.t) / record.dt))
        if target > steps_done:
            a = _advance(op, v, vt, a, record.dt, target - steps_done, base.t + steps_done * record.dt)
            steps_done = target
        lin = FieldState(base.grid, snap.t, v.copy(), vt.copy(), base.k)
        ts.append(snap.t)
        res.append(hxl2_distance(snap, lin))
        norms.append(diag.h_norm(snap))
    return LinearComparison(np.array(ts), np.array(res), np.array(norms))
