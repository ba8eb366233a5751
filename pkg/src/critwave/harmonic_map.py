"""Least-energy harmonic map Q solving r Q_r = g(Q), Q(1) = C*/2.

In s = ln r the profile equation is autonomous, dQ/ds = g(Q), with fixed
points 0 (s -> -inf) and C* (s -> +inf).  We integrate it with classical RK4
from s = 0 in both directions.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.interpolate import CubicSpline

from .geometry import TargetGeometry

DEFAULT_DS = 1e-3
DEFAULT_S_RANGE = (-16.0, 16.0)
ENERGY_IDENTITY_TOL = 1e-4


class HarmonicMapError(RuntimeError):
    pass


@dataclass(frozen=True)
class HarmonicMapProfile:
    geometry: TargetGeometry = field(repr=False)
    s_grid: np.ndarray = field(repr=False)
    q_values: np.ndarray = field(repr=False)
    dqds: np.ndarray = field(repr=False)
    energy: float
    ds: float

    @property
    def r_grid(self) -> np.ndarray:
        return np.exp(self.s_grid)

    @cached_property
    def spline(self) -> CubicSpline:
        return CubicSpline(self.s_grid, self.q_values)

    def residual(self) -> np.ndarray:
        """|dQ/ds - g(Q)| at the interior nodes."""
        g = self.geometry.g(self.q_values)
        return np.abs(self.dqds - g)[2:-2]

    def __call__(self, r, lam: float = 1.0):
        return sample_Q_scaled(self, lam, r)

    def summary(self) -> dict:
        return {
            "c_star": float(self.geometry.c_star),
            "e_q": float(self.energy),
            "residual_max": float(self.residual().max()),
        }

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["r", "Q", "dQ/ds"])
            for r, q, dq in zip(self.r_grid, self.q_values, self.dqds):
                w.writerow([repr(float(r)), repr(float(q)), repr(float(dq))])

    def write_summary(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)


def _rk4_march(g, q0: float, ds: float, n: int, c_star: float) -> np.ndarray:
    out = np.empty(n + 1)
    out[0] = q = q0
    half = 0.5 * ds
    for i in range(1, n + 1):
        k1 = g(q)
        k2 = g(q + half * k1)
        k3 = g(q + half * k2)
        k4 = g(q + ds * k3)
        q = q + ds / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not (-1e-6 <= q <= c_star + 1e-6) or math.isnan(q):
            raise HarmonicMapError(f"profile left [0, C*] at step {i} (Q = {q!r}); bad geometry or step")
        out[i] = q
    return out


def _scalar(fn):
    """Float-in/float-out wrapper; avoids numpy scalar overhead in the march."""
    def wrapped(x):
        return float(fn(x))
    return wrapped


def solve_Q(geometry: TargetGeometry, ds: float = DEFAULT_DS,
            s_range: tuple[float, float] = DEFAULT_S_RANGE, check_energy: bool = True) -> HarmonicMapProfile:
    s_min, s_max = s_range
    if ds > 1e-2:
        raise ValueError("ds must be <= 1e-2")
    if s_min > 0 or s_max < 0:
        raise ValueError("s_range must contain 0")
    g = geometry.g
    if geometry.kind == "sphere":
        g_fast = math.sin
    elif geometry.kind == "yang-mills-shifted":
        g_fast = lambda q: q * (2.0 - q)  # noqa: E731
    else:
        g_fast = _scalar(g)
    q0 = 0.5 * geometry.c_star
    n_fwd = int(round(s_max / ds))
    n_bwd = int(round(-s_min / ds))
    fwd = _rk4_march(g_fast, q0, ds, n_fwd, geometry.c_star)
    bwd = _rk4_march(g_fast, q0, -ds, n_bwd, geometry.c_star)
    q = np.concatenate([bwd[::-1], fwd[1:]])
    s = np.arange(-n_bwd, n_fwd + 1) * ds
    dq = _derivative(q, ds)
    profile = HarmonicMapProfile(geometry=geometry, s_grid=s, q_values=q, dqds=dq, energy=float("nan"), ds=ds)
    energy = energy_of_Q(profile, check=check_energy)
    return HarmonicMapProfile(geometry=geometry, s_grid=s, q_values=q, dqds=dq, energy=energy, ds=ds)


def _derivative(q: np.ndarray, ds: float) -> np.ndarray:
    """Fourth-order centered difference, second-order at the two end pairs."""
    if len(q) < 3:
        return np.zeros_like(q)
    dq = np.gradient(q, ds, edge_order=2)
    if len(q) >= 5:
        dq[2:-2] = (q[:-4] - 8.0 * q[1:-3] + 8.0 * q[3:-1] - q[4:]) / (12.0 * ds)
    return dq


def energy_of_Q(profile: HarmonicMapProfile, check: bool = True) -> float:
    """E(Q) = int ((dQ/ds)^2 + g(Q)^2) ds, composite trapezoid in s.

    With ``check`` the threshold identity E(Q) = 2 G(C*) is enforced.
    """
    q, dq = profile.q_values, profile.dqds
    if len(q) < 2:
        energy = 0.0
    else:
        energy = float(np.trapezoid(dq**2 + profile.geometry.g(q) ** 2, dx=profile.ds))
    if check:
        target = profile.geometry.e_q
        if abs(energy - target) > ENERGY_IDENTITY_TOL:
            raise HarmonicMapError(f"E(Q) = {energy!r} misses 2 G(C*) = {target!r}")
    return energy


def sample_Q_scaled(profile: HarmonicMapProfile, lam: float, r) -> np.ndarray:
    """u(r) = Q(lam r), cubic in s = ln(lam r), linearized tails outside the table."""
    if lam <= 0:
        raise ValueError("lam must be positive")
    geom = profile.geometry
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    pos = r > 0
    s = np.log(lam * r[pos])
    spline = profile.spline
    s_lo, s_hi = profile.s_grid[0], profile.s_grid[-1]
    vals = spline(np.clip(s, s_lo, s_hi))
    lo = s < s_lo
    vals[lo] = profile.q_values[0] * np.exp(geom.k * (s[lo] - s_lo))
    hi = s > s_hi
    rate = abs(float(geom.gp(geom.c_star)))
    vals[hi] = geom.c_star - (geom.c_star - profile.q_values[-1]) * np.exp(-rate * (s[hi] - s_hi))
    out[pos] = vals
    return out if out.ndim else float(out)
