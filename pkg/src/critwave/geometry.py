"""Target geometry g of the surface of revolution and its derived functions.

For a target metric ``drho^2 + g(rho)^2 dtheta^2`` the radial equation has
nonlinearity ``f = g g'``.  Everything else used by the solver and the
diagnostics (``G``, ``d``, ``h``, ``C*``, ``D*``) is derived here.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, interpolate, optimize

from .expr import compile_expression

SCAN_STEP = 1e-2
SCAN_BOUND = 50.0
ROOT_TOL = 1e-12
H_BLEND = 1e-3
ASSUMPTION_TOL = 1e-9
ORIGIN_TOL = 1e-10
FD_CONSISTENCY_TOL = 1e-6
G_TABLE_NODES = 10_000


class GeometryError(ValueError):
    pass


class AssumptionError(GeometryError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class DomainError(GeometryError):
    pass


def _sphere_G(rho):
    rho = np.asarray(rho, dtype=float)
    a = np.abs(rho)
    n = np.floor(a / np.pi)
    return np.sign(rho) * (2.0 * n + 1.0 - np.cos(a - n * np.pi))


def _ym_G(rho):
    rho = np.asarray(rho, dtype=float)
    return np.where(
        rho < 0.0,
        rho**3 / 3.0 - rho**2,
        np.where(rho <= 2.0, rho**2 - rho**3 / 3.0, rho**3 / 3.0 - rho**2 + 8.0 / 3.0),
    )


@dataclass(frozen=True)
class TargetGeometry:
    k: int
    kind: str
    g: Callable = field(repr=False)
    gp: Callable = field(repr=False)
    gpp: Callable = field(repr=False)
    G: Callable = field(repr=False)
    c_star: float
    d_star: float
    sources: dict | None = None
    domain: tuple[float, float] | None = None

    def f(self, rho):
        return self.g(rho) * self.gp(rho)

    def d(self, rho):
        return rho * self.f(rho)

    @property
    def g_of_c_star(self) -> float:
        return float(self.G(self.c_star))

    @property
    def e_q(self) -> float:
        """Threshold energy E(Q) = 2 G(C*)."""
        return 2.0 * self.g_of_c_star

    def h(self, rho):
        return eval_h(self, rho)

    def G_inverse(self, y: float) -> float:
        """Inverse of the increasing function G; +inf beyond the usable range."""
        if y == 0.0:
            return 0.0
        sign = 1.0 if y > 0 else -1.0
        hi = self.domain[1] if self.domain is not None else SCAN_BOUND
        lo = self.domain[0] if self.domain is not None else -SCAN_BOUND
        bound = hi if sign > 0 else lo
        if abs(float(self.G(bound))) < abs(y):
            return sign * np.inf
        return optimize.brentq(lambda x: float(self.G(x)) - y, 0.0, bound, xtol=1e-14, rtol=1e-15)

    def K(self, energy: float) -> float:
        """Pointwise sup bound K(E) = G^{-1}(E/2)."""
        return self.G_inverse(0.5 * energy)

    def to_json(self) -> dict:
        if self.kind == "custom":
            return {"kind": "custom", "k": self.k, **self.sources}
        return {"kind": self.kind}


def make_builtin(tag: str) -> TargetGeometry:
    if tag == "sphere":
        return TargetGeometry(
            k=1, kind="sphere", g=np.sin, gp=np.cos, gpp=lambda r: -np.sin(r),
            G=_sphere_G, c_star=np.pi, d_star=np.pi / 2,
        )
    if tag == "yang-mills-shifted":
        return TargetGeometry(
            k=2, kind="yang-mills-shifted",
            g=lambda r: r * (2.0 - r), gp=lambda r: 2.0 - 2.0 * r, gpp=lambda r: -2.0 + 0.0 * r,
            G=_ym_G, c_star=2.0, d_star=1.0,
        )
    raise GeometryError(f"unknown built-in geometry {tag!r}")


def find_c_star(g: Callable, step: float = SCAN_STEP, bound: float = SCAN_BOUND) -> float:
    """Smallest positive zero of g: bracketing scan, then bisection."""
    x = np.arange(1, int(round(bound / step)) + 1) * step
    vals = g(x)
    # skip the trivial zero at 0: only sign changes strictly inside (0, bound]
    hits = np.nonzero(np.sign(vals[1:]) != np.sign(vals[:-1]))[0]
    exact = np.nonzero(vals == 0.0)[0]
    if len(exact) and (not len(hits) or exact[0] <= hits[0]):
        return float(x[exact[0]])
    if not len(hits):
        # the first cell (0, step] is checked separately
        raise AssumptionError(f"assumption a1 violated: no positive zero of g found within {bound}")
    i = hits[0]
    return optimize.bisect(lambda r: float(g(r)), x[i], x[i + 1], xtol=ROOT_TOL)


def _abs_g_quad(g, a, b):
    val, _ = integrate.quad(lambda r: abs(float(g(r))), a, b, epsabs=0.0, epsrel=1e-12, limit=200)
    return val


def _tabulate_G(g: Callable, c_star: float, nodes: int = G_TABLE_NODES):
    """Cubic Hermite interpolant of G on Chebyshev nodes over [-C*-1, C*+1].

    Zeros of g are inserted as nodes so no cell straddles a kink of |g|.
    """
    lo, hi = -c_star - 1.0, c_star + 1.0
    j = np.arange(nodes)
    x = 0.5 * (lo + hi) + 0.5 * (hi - lo) * np.cos(np.pi * j / (nodes - 1))
    x = np.unique(np.concatenate([x, [0.0, c_star]]))
    gx = g(x)
    cross = np.nonzero(np.sign(gx[:-1]) * np.sign(gx[1:]) < 0)[0]
    zeros = [optimize.brentq(lambda r: float(g(r)), x[i], x[i + 1], xtol=1e-15) for i in cross]
    x = np.unique(np.concatenate([x, zeros]))
    gl_x, gl_w = np.polynomial.legendre.leggauss(10)
    mid, half = 0.5 * (x[1:] + x[:-1]), 0.5 * (x[1:] - x[:-1])
    pts = mid[:, None] + half[:, None] * gl_x[None, :]
    cell = (np.abs(g(pts)) @ gl_w) * half
    cum = np.concatenate([[0.0], np.cumsum(cell)])
    cum -= cum[int(np.searchsorted(x, 0.0))]
    return x, interpolate.CubicHermiteSpline(x, cum, np.abs(g(x)))


def parse_custom(spec: dict, k: int | None = None, validate: bool = True) -> TargetGeometry:
    """Build a geometry from expression sources ``{"g", "gp", "gpp"}``.

    With ``validate`` the standing assumptions must hold, otherwise
    :class:`AssumptionError` carries the failing report.
    """
    k = int(spec.get("k", k) if k is None else k)
    if k not in (1, 2):
        raise GeometryError(f"equivariance index must be 1 or 2, got {k}")
    try:
        src = {key: spec[key] for key in ("g", "gp", "gpp")}
    except KeyError as exc:
        raise GeometryError(f"custom geometry needs g, gp and gpp expressions (missing {exc})") from None
    g, gp, gpp = (compile_expression(src[key]) for key in ("g", "gp", "gpp"))

    c_star = find_c_star(g)
    domain = (-c_star - 1.0, c_star + 1.0)
    xs = np.linspace(domain[0] + 1e-4, domain[1] - 1e-4, 1000)
    step = 1e-5
    for name, fn, deriv in (("gp", g, gp), ("gpp", gp, gpp)):
        fd = (fn(xs + step) - fn(xs - step)) / (2 * step)
        err = np.max(np.abs(fd - deriv(xs)))
        if not np.isfinite(err) or err > FD_CONSISTENCY_TOL:
            raise GeometryError(f"{name} is inconsistent with finite differences (max error {err:.3g})")

    table_x, spline = _tabulate_G(g, c_star)

    def G(rho):
        rho_arr = np.asarray(rho, dtype=float)
        if np.any(rho_arr < table_x[0]) or np.any(rho_arr > table_x[-1]):
            raise DomainError(f"G evaluated outside its table [{table_x[0]:.6g}, {table_x[-1]:.6g}]")
        return spline(rho_arr)

    g_c = _abs_g_quad(g, 0.0, c_star)
    d_star = optimize.brentq(lambda x: _abs_g_quad(g, 0.0, x) - 0.5 * g_c, 0.0, c_star, xtol=1e-14)
    geom = TargetGeometry(
        k=k, kind="custom", g=g, gp=gp, gpp=gpp, G=G, c_star=float(c_star),
        d_star=float(d_star), sources=src, domain=domain,
    )
    if validate:
        report = check_assumptions(geom)
        if not report.all_pass:
            raise AssumptionError(f"geometry fails assumptions: {report.failures()}", report)
    return geom


def from_json(obj: dict | str, validate: bool = True) -> TargetGeometry:
    """Geometry from a JSON spec (dict, JSON text or path to a JSON file)."""
    if isinstance(obj, str):
        if obj.lstrip().startswith("{"):
            obj = json.loads(obj)
        else:
            with open(obj) as fh:
                obj = json.load(fh)
    kind = obj.get("kind")
    if kind == "custom":
        return parse_custom(obj, validate=validate)
    return make_builtin(kind)


_WHICH = {"g", "g'", "g''", "f", "G", "d", "gp", "gpp", "h"}


def evaluate(geometry: TargetGeometry, which: str, rho):
    if which not in _WHICH:
        raise ValueError(f"unknown function {which!r}")
    if which == "g":
        return geometry.g(rho)
    if which in ("g'", "gp"):
        return geometry.gp(rho)
    if which in ("g''", "gpp"):
        return geometry.gpp(rho)
    if which == "f":
        return geometry.f(rho)
    if which == "d":
        return geometry.d(rho)
    if which == "h":
        return eval_h(geometry, rho)
    return geometry.G(rho)


def h_origin(geometry: TargetGeometry) -> float:
    """Removable value h(0) from the Taylor expansion of f at 0."""
    k = geometry.k
    if k == 2:
        return 1.5 * k * float(geometry.gpp(0.0))
    step = 1e-4
    gppp = (float(geometry.gpp(step)) - float(geometry.gpp(-step))) / (2 * step)
    return 2.0 / 3.0 * gppp


def _h_quotient(geometry, rho):
    k = geometry.k
    power = rho**3 if k == 1 else rho**2
    return (geometry.f(rho) - k * k * rho) / power


def eval_h(geometry: TargetGeometry, rho, eps: float = H_BLEND, h0: float | None = None):
    """h(rho) = (f(rho) - k^2 rho) / rho^(1+2/k), smooth through rho = 0.

    Below ``eps`` the value is the linear blend between the Taylor value at 0
    and the quotient at +-eps, where the quotient has lost no precision yet.
    """
    rho = np.asarray(rho, dtype=float)
    if h0 is None:
        h0 = h_origin(geometry)
    a = np.abs(rho)
    near = a < eps
    safe = np.where(near, eps, rho)
    out = _h_quotient(geometry, safe)
    if np.any(near):
        edge = _h_quotient(geometry, np.where(rho < 0, -eps, eps))
        t = a / eps
        out = np.where(near, h0 + t * (edge - h0), out)
    return out if out.ndim else float(out)


@dataclass
class AssumptionReport:
    a1: bool
    a2: bool
    a3: bool
    worst: dict
    sample_count: int
    details: dict = field(default_factory=dict)

    @property
    def all_pass(self) -> bool:
        return self.a1 and self.a2 and self.a3

    def failures(self) -> list[str]:
        return [name for name in ("a1", "a2", "a3") if not getattr(self, name)]

    def to_json(self) -> dict:
        return {"a1": self.a1, "a2": self.a2, "a3": self.a3, "worst": self.worst,
                "sample_count": self.sample_count, "details": self.details}


def check_assumptions(geometry: TargetGeometry, sample_count: int = 1000) -> AssumptionReport:
    """Sampled check of the standing assumptions; failures are reported, never raised.

    a1: g has a first positive zero C* with g > 0 before it.
    a2: g(0) = 0, g'(0) = k, and g''(0) = 0 when k = 1.
    a3: g'(-rho) >= g'(rho) on [0, C*] and g' >= 0 on [0, D*].
    """
    if sample_count < 100:
        raise ValueError("sample_count must be >= 100")
    k, c, dstar = geometry.k, geometry.c_star, geometry.d_star
    violations = []  # (assumption, rho, violation magnitude)

    # a1
    inner = np.linspace(0.0, c, sample_count + 2)[1:-1]
    gi = geometry.g(inner)
    a1 = bool(np.all(gi > 0.0)) and abs(float(geometry.g(c))) <= 1e-9
    j = int(np.argmin(gi))
    violations.append(("a1", float(inner[j]), max(0.0, -float(gi[j])), a1))

    # a2
    g0, gp0, gpp0 = float(geometry.g(0.0)), float(geometry.gp(0.0)), float(geometry.gpp(0.0))
    a2_terms = [abs(g0), abs(gp0 - k)] + ([abs(gpp0)] if k == 1 else [])
    a2 = k in (1, 2) and max(a2_terms) <= ORIGIN_TOL
    violations.append(("a2", 0.0, max(a2_terms), a2))

    # a3
    xs = np.linspace(0.0, c, sample_count)
    sym = geometry.gp(xs) - geometry.gp(-xs)
    xd = np.linspace(0.0, dstar, sample_count)
    pos = -geometry.gp(xd)
    j1, j2 = int(np.argmax(sym)), int(np.argmax(pos))
    a3 = bool(sym[j1] <= ASSUMPTION_TOL and pos[j2] <= ASSUMPTION_TOL)
    if sym[j1] >= pos[j2]:
        violations.append(("a3", float(xs[j1]), max(0.0, float(sym[j1])), a3))
    else:
        violations.append(("a3", float(xd[j2]), max(0.0, float(pos[j2])), a3))

    failing = [v for v in violations if not v[3]]
    pool = failing or violations
    name, where, mag, _ = max(pool, key=lambda v: v[2])
    grid = np.linspace(-c, c, sample_count)
    Gs = geometry.G(grid)
    details = {
        "G_monotone": bool(np.all(np.diff(Gs) >= -1e-12)),
        "half_energy_point": abs(float(geometry.G(dstar)) - 0.5 * geometry.g_of_c_star),
        "grid": {"n": sample_count, "c_star": c, "d_star": dstar},
    }
    return AssumptionReport(a1=a1, a2=bool(a2), a3=a3,
                            worst={"assumption": name, "rho": where, "violation": mag},
                            sample_count=sample_count, details=details)
