"""Scenario configs, initial data families, and the run / sweep / report drivers.

A scenario is one JSON document.  Its canonical form (sorted keys, compact
separators, geometry inlined, referenced files digested) is hashed, and every
artifact of the run lands in ``<out>/<hash[:12]>/``.
"""
from __future__ import annotations

import copy
import csv
import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path

import numpy as np

from . import diagnostics as diag
from .evolution import EvolutionConfig, InstabilityError, RunRecord, Thresholds, evolve
from .fields import FieldState, RadialGrid, snapshot_rows, total_energy
from .geometry import AssumptionError, GeometryError, TargetGeometry, check_assumptions, from_json, h_origin
from .harmonic_map import DEFAULT_DS, HarmonicMapError, solve_Q

DATA_FAMILIES = ("gaussian-bump", "scaled-q", "custom-csv")


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- config types


@dataclass
class GridConfig:
    n_cells: int = 4096
    r_max: float = 40.0


@dataclass
class BumpConfig:
    a: float = 0.0
    r0: float = 2.0
    w: float = 0.5


@dataclass
class DataConfig:
    family: str = "gaussian-bump"
    a: float = 1.0
    r0: float = 2.0
    w: float = 0.5
    # when set, |a| is solved for so that E(data) = fraction * E(Q)
    target_energy_fraction: float | None = None
    lam: float = 1.0
    path: str | None = None
    velocity: BumpConfig | None = None


@dataclass
class DiagnosticsConfig:
    tail_radii: list = field(default_factory=list)
    virial_radius: float | None = None
    interior_radius: float = 1.0


@dataclass
class HarmonicMapConfig:
    ds: float = DEFAULT_DS
    s_min: float = -16.0
    s_max: float = 16.0


@dataclass
class SweepConfig:
    parameter: str = "data.target_energy_fraction"
    values: list = field(default_factory=list)
    parallelism: int = 1


@dataclass
class Lemma7Config:
    delta_fraction: float = 0.1
    n_profiles: int = 200


@dataclass
class ScenarioConfig:
    name: str = "scenario"
    geometry: dict = field(default_factory=lambda: {"kind": "sphere"})
    data: DataConfig = field(default_factory=DataConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    evolution: EvolutionConfig = field(default_factory=EvolutionConfig)
    diagnostics: DiagnosticsConfig = field(default_factory=DiagnosticsConfig)
    thresholds: Thresholds = field(default_factory=Thresholds)
    harmonic_map: HarmonicMapConfig = field(default_factory=HarmonicMapConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    lemma7: Lemma7Config = field(default_factory=Lemma7Config)
    seed: int = 0


def _build(cls, data, where: str):
    """Recursive dataclass construction with unknown-key and type checks."""
    if data is None:
        return None
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'config'} must be an object")
    known = {f.name: f for f in fields(cls)}
    extra = sorted(set(data) - set(known))
    if extra:
        raise ConfigError(f"unknown key(s) in {where or 'config'}: {', '.join(extra)}")
    kwargs = {}
    for name, value in data.items():
        sub = _NESTED.get((cls, name))
        path = f"{where}.{name}" if where else name
        kwargs[name] = _build(sub, value, path) if sub is not None else value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where or 'config'}: {exc}") from None


_NESTED = {
    (ScenarioConfig, "data"): DataConfig,
    (ScenarioConfig, "grid"): GridConfig,
    (ScenarioConfig, "evolution"): EvolutionConfig,
    (ScenarioConfig, "diagnostics"): DiagnosticsConfig,
    (ScenarioConfig, "thresholds"): Thresholds,
    (ScenarioConfig, "harmonic_map"): HarmonicMapConfig,
    (ScenarioConfig, "sweep"): SweepConfig,
    (ScenarioConfig, "lemma7"): Lemma7Config,
    (DataConfig, "velocity"): BumpConfig,
}


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(raw: dict, dotted: str, value) -> None:
    """Set ``raw[a][b]... = value`` for the dotted path ``a.b...``."""
    keys = dotted.split(".")
    node = raw
    for key in keys[:-1]:
        nxt = node.setdefault(key, {})
        if not isinstance(nxt, dict):
            raise ConfigError(f"{dotted}: {key} is not an object")
        node = nxt
    node[keys[-1]] = value


def parse_set(items) -> list[tuple[str, object]]:
    out = []
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, text = item.split("=", 1)
        out.append((key.strip(), _parse_value(text)))
    return out


def _resolve_geometry(raw: dict, base_dir: Path) -> None:
    geom = raw.get("geometry", {"kind": "sphere"})
    if isinstance(geom, str):
        path = Path(geom)
        if not path.is_absolute():
            path = base_dir / path
        if not path.exists():
            raise ConfigError(f"geometry file {path} does not exist")
        with open(path) as fh:
            raw["geometry"] = json.load(fh)


def load_config(source, overrides=()) -> ScenarioConfig:
    """ScenarioConfig from a path, JSON text or dict, then dotted overrides."""
    base_dir = Path.cwd()
    if isinstance(source, dict):
        raw = copy.deepcopy(source)
    else:
        text = str(source)
        if text.lstrip().startswith("{"):
            raw = json.loads(text)
        else:
            path = Path(text)
            if not path.exists():
                raise ConfigError(f"config file {path} does not exist")
            base_dir = path.parent
            try:
                raw = json.loads(path.read_text())
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    for key, value in overrides:
        apply_override(raw, key, value)
    _resolve_geometry(raw, base_dir)
    cfg = _build(ScenarioConfig, raw, "")
    data = cfg.data
    if data.family not in DATA_FAMILIES:
        raise ConfigError(f"data.family must be one of {DATA_FAMILIES}")
    if data.family == "custom-csv":
        if not data.path:
            raise ConfigError("custom-csv data needs data.path")
        p = Path(data.path)
        if not p.is_absolute():
            data.path = str((base_dir / p).resolve())
        if not Path(data.path).exists():
            raise ConfigError(f"data file {data.path} does not exist")
    if data.family == "gaussian-bump" and not (data.r0 > 0 and data.w > 0):
        raise ConfigError("gaussian-bump needs r0 > 0 and w > 0")
    if data.family == "scaled-q" and not data.lam > 0:
        raise ConfigError("scaled-q needs lam > 0")
    if data.target_energy_fraction is not None and not data.target_energy_fraction > 0:
        raise ConfigError("data.target_energy_fraction must be positive")
    try:
        RadialGrid(int(cfg.grid.n_cells), float(cfg.grid.r_max))
    except ValueError as exc:
        raise ConfigError(f"grid: {exc}") from None
    return cfg


def config_dict(cfg: ScenarioConfig) -> dict:
    return asdict(cfg)


def canonical_json(cfg: ScenarioConfig) -> str:
    return json.dumps(config_dict(cfg), sort_keys=True, separators=(",", ":"))


def config_hash(cfg: ScenarioConfig) -> str:
    digest = hashlib.sha256(canonical_json(cfg).encode())
    if cfg.data.family == "custom-csv":
        digest.update(Path(cfg.data.path).read_bytes())
    return digest.hexdigest()


# ---------------------------------------------------------------- geometry & data


def load_geometry(cfg: ScenarioConfig, require_assumptions: bool = True) -> TargetGeometry:
    """Geometry of the scenario; AssumptionError unless every assumption check passes."""
    try:
        geom = from_json(cfg.geometry, validate=False)
    except AssumptionError:
        raise
    except (GeometryError, ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"geometry: {exc}") from None
    if require_assumptions:
        report = check_assumptions(geom)
        if not report.all_pass:
            raise AssumptionError(f"geometry fails assumptions: {report.failures()}", report)
    return geom


def _taper(x):
    """1 on [0, 3], smooth (C^2) descent to 0 on [3, 4], 0 beyond."""
    y = np.clip(np.asarray(x) - 3.0, 0.0, 1.0)
    return 1.0 - diag.smoothstep(y)


def gaussian_bump(r, k: int, a: float, r0: float, w: float) -> np.ndarray:
    """a (r/r0)^k exp(-((r - r0)/w)^2), tapered to zero at |r - r0| = 4w."""
    r = np.asarray(r, dtype=float)
    x = np.abs(r - r0) / w
    return a * (r / r0) ** k * np.exp(-(x**2)) * _taper(x)


def support_radius(data: DataConfig) -> float:
    if data.family == "gaussian-bump":
        radius = data.r0 + 4.0 * data.w
        if data.velocity is not None and data.velocity.a != 0.0:
            radius = max(radius, data.velocity.r0 + 4.0 * data.velocity.w)
        return radius
    if data.family == "scaled-q":
        return math.inf
    r, u, u_t = _read_csv_profile(data.path)
    live = np.nonzero((np.abs(u) > 0) | (np.abs(u_t) > 0))[0]
    return float(r[live[-1]]) if len(live) else 0.0


def _read_csv_profile(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or "r" not in rows[0] or "u" not in rows[0]:
        raise ConfigError(f"{path}: need a header with columns r, u (and optionally u_t)")
    r = np.array([float(row["r"]) for row in rows])
    u = np.array([float(row["u"]) for row in rows])
    u_t = np.array([float(row.get("u_t") or 0.0) for row in rows])
    if np.any(np.diff(r) <= 0):
        raise ConfigError(f"{path}: r must be strictly increasing")
    return r, u, u_t


def initial_state(cfg: ScenarioConfig, geometry: TargetGeometry) -> FieldState:
    data = cfg.data
    grid = RadialGrid(int(cfg.grid.n_cells), float(cfg.grid.r_max))
    r, k = grid.r, geometry.k
    if data.family == "gaussian-bump":
        u = gaussian_bump(r, k, 1.0 if data.target_energy_fraction is not None else data.a, data.r0, data.w)
        vel = data.velocity
        u_t = gaussian_bump(r, k, vel.a, vel.r0, vel.w) if vel is not None else None
        if data.target_energy_fraction is not None:
            if u_t is not None:
                raise ConfigError("target_energy_fraction cannot be combined with a velocity bump")
            target = data.target_energy_fraction * geometry.e_q
            try:
                scale, _ = diag.scale_to_energy(u, grid, geometry, target)
            except diag.RejectedProfile as exc:
                raise ConfigError(f"cannot reach E = {target:g}: {exc}") from None
            u = math.copysign(scale, data.a if data.a != 0 else 1.0) * u
        return FieldState.from_u(grid, u, u_t, k=k)
    if data.family == "scaled-q":
        profile = solve_Q(geometry, cfg.harmonic_map.ds, (cfg.harmonic_map.s_min, cfg.harmonic_map.s_max))
        u = profile(r, data.lam)
        if data.a < 0:
            u = -u
        return FieldState.from_u(grid, u, k=k)
    rs, us, uts = _read_csv_profile(data.path)
    u = np.interp(r, rs, us, right=0.0)
    u_t = np.interp(r, rs, uts, right=0.0)
    return FieldState.from_u(grid, u, u_t, k=k)


def check_light_cone(cfg: ScenarioConfig) -> None:
    """With a zero boundary the light cone of the data must stay inside r_max."""
    if cfg.evolution.boundary != "dirichlet_zero":
        return
    h = cfg.grid.r_max / cfg.grid.n_cells
    need = support_radius(cfg.data) + cfg.evolution.t_max + 2.0 * h
    if cfg.grid.r_max < need - 1e-12:
        raise ConfigError(f"r_max = {cfg.grid.r_max} < support + t_max + 2h = {need:.6g} "
                          "(use a larger grid or boundary = dirichlet_frozen)")


# ---------------------------------------------------------------- outputs


def _fmt(x) -> str:
    return repr(float(x))


def write_series_csv(record: RunRecord, path) -> None:
    cols = record.series_columns()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for i in range(len(record.times)):
            w.writerow([_fmt(record.series[c][i]) for c in cols])


def write_rows(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in rows:
            w.writerow(row)


def write_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _jsonable(obj):
    if is_dataclass(obj):
        return _jsonable(asdict(obj))
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def run_metrics(record: RunRecord, thresholds: Thresholds) -> dict:
    e_end = float(record.column("E")[-1])
    interior = float(record.column("interior_E")[-1])
    return {
        "interior_fraction": interior / e_end if e_end > 0 else 0.0,
        "snorm_total": float(record.column("snorm_acc")[-1]),
        "snorm_trailing": diag.trailing_increment(record.times, record.column("snorm_acc"),
                                                  thresholds.trailing_window),
        "dist0_max": float(np.max(record.column("dist0"))),
        "sup_u_max": float(np.max(record.column("sup_u"))),
    }


@dataclass
class ScenarioResult:
    record: RunRecord
    run_dir: Path
    config_hash: str
    summary: dict
    files: list


def run_scenario(cfg: ScenarioConfig, out_dir, write: bool = True) -> ScenarioResult:
    """Evolve one scenario and write config.json, series.csv, summary.json and snapshots."""
    geometry = load_geometry(cfg)
    check_light_cone(cfg)
    state = initial_state(cfg, geometry)
    dg = cfg.diagnostics
    record = evolve(state, geometry, cfg.evolution, tail_radii=tuple(dg.tail_radii),
                    virial_radius=dg.virial_radius, interior_radius=dg.interior_radius,
                    descriptor=_jsonable(cfg.data), thresholds=cfg.thresholds)
    digest = config_hash(cfg)
    summary = {**record.summary(), **run_metrics(record, cfg.thresholds), "config_hash": digest,
               "name": cfg.name}
    summary = _jsonable(summary)
    run_dir = Path(out_dir) / digest[:12]
    files = []
    if write:
        run_dir.mkdir(parents=True, exist_ok=True)
        write_json(config_dict(cfg), run_dir / "config.json")
        write_series_csv(record, run_dir / "series.csv")
        write_json(summary, run_dir / "summary.json")
        files += ["config.json", "series.csv", "summary.json"]
        for i, snap in enumerate(record.snapshots):
            name = f"snapshot_{i:04d}.csv"
            write_rows(snapshot_rows(snap), run_dir / name)
            files.append(name)
        if dg.virial_radius is not None:
            write_virial(record, run_dir / "virial.csv")
            files.append("virial.csv")
    return ScenarioResult(record, run_dir, digest, summary, files)


def write_virial(record: RunRecord, path) -> diag.VirialResiduals:
    res = diag.virial_residuals(record)
    rows = [("t", "residual1", "residual2", "bound")]
    rows += [tuple(_fmt(x) for x in row) for row in zip(res.t, res.residual1, res.residual2, res.bound)]
    write_rows(rows, path)
    return res


def virial_report(cfg: ScenarioConfig, out_dir) -> dict:
    """Run the scenario and summarize both virial residual series against the tail bound."""
    if cfg.diagnostics.virial_radius is None:
        raise ConfigError("virial-report needs diagnostics.virial_radius")
    result = run_scenario(cfg, out_dir)
    res = diag.virial_residuals(result.record)
    e0 = result.record.e_initial
    report = {
        "R": cfg.diagnostics.virial_radius,
        "energy": e0,
        "max_residual1": float(np.max(np.abs(res.residual1))) if len(res.t) else 0.0,
        "max_residual2": float(np.max(np.abs(res.residual2))) if len(res.t) else 0.0,
        "max_bound": float(np.max(res.bound)) if len(res.t) else 0.0,
        "max_excess": res.max_excess(),
        "max_residual_rel": max(float(np.max(np.abs(res.residual1))), float(np.max(np.abs(res.residual2)))) / e0
        if len(res.t) and e0 > 0 else 0.0,
        "c_phi": diag.C_PHI,
        "run_dir": result.run_dir.name,
    }
    write_json(_jsonable(report), result.run_dir / "virial_summary.json")
    return report


# ---------------------------------------------------------------- sweeps


@dataclass
class SweepEntry:
    value: object
    classification: str | None
    energy: float | None
    metrics: dict
    run_dir: str | None
    error: str | None = None


@dataclass
class SweepResult:
    parameter: str
    entries: list
    manifest: list

    def table(self) -> str:
        lines = [f"{'value':>12}  {'E':>12}  {'E/E(Q)':>8}  classification"]
        for e in self.entries:
            if e.error:
                lines.append(f"{e.value!s:>12}  {'-':>12}  {'-':>8}  error: {e.error}")
            else:
                ratio = e.metrics.get("e_over_eq", float("nan"))
                lines.append(f"{e.value!s:>12}  {e.energy:12.6g}  {ratio:8.4f}  {e.classification}")
        return "\n".join(lines)


def _sweep_worker(args):
    raw, parameter, value, out_dir = args
    try:
        cfg = load_config(raw, [(parameter, value)])
        result = run_scenario(cfg, out_dir)
        geometry_eq = load_geometry(cfg).e_q
        metrics = {k: result.summary[k] for k in ("interior_fraction", "snorm_trailing", "e_drift_rel",
                                                  "dist0_max", "sup_u_max")}
        metrics["e_over_eq"] = result.summary["e_initial"] / geometry_eq
        return SweepEntry(value, result.summary["classification"], result.summary["e_initial"], metrics,
                          result.run_dir.name, None)
    except (ConfigError, GeometryError, InstabilityError, HarmonicMapError, ValueError) as exc:
        return SweepEntry(value, None, None, {}, None, f"{type(exc).__name__}: {exc}")


def thread_cap(requested: int) -> int:
    env = os.environ.get("CRITWAVE_THREADS")
    cap = int(env) if env and env.strip().isdigit() and int(env) > 0 else (os.cpu_count() or 1)
    return max(1, min(int(requested), cap))


def run_sweep(base: ScenarioConfig, parameter: str, values, parallelism: int, out_dir) -> SweepResult:
    """Independent runs over ``values`` at ``parameter``; entries keep the input order."""
    raw = config_dict(base)
    _check_scalar_path(raw, parameter)
    jobs = [(raw, parameter, v, str(out_dir)) for v in values]
    workers = thread_cap(parallelism)
    if not jobs:
        entries = []
    elif workers == 1 or len(jobs) == 1:
        entries = [_sweep_worker(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            entries = list(pool.map(_sweep_worker, jobs))
    result = SweepResult(parameter, entries, [])
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = [("value", "classification", "E", "E_over_EQ", "interior_fraction", "snorm_trailing", "run_dir", "error")]
    for e in entries:
        m = e.metrics
        rows.append((json.dumps(e.value), e.classification or "", "" if e.energy is None else _fmt(e.energy),
                     _fmt(m["e_over_eq"]) if "e_over_eq" in m else "",
                     _fmt(m["interior_fraction"]) if "interior_fraction" in m else "",
                     _fmt(m["snorm_trailing"]) if "snorm_trailing" in m else "",
                     e.run_dir or "", e.error or ""))
    write_rows(rows, out / "sweep.csv")
    write_json(_jsonable({"parameter": parameter, "entries": entries}), out / "sweep.json")
    result.manifest = ["sweep.csv", "sweep.json"] + [f"{e.run_dir}/" for e in entries if e.run_dir]
    return result


def _check_scalar_path(raw: dict, dotted: str) -> None:
    node = raw
    for key in dotted.split("."):
        if not isinstance(node, dict) or key not in node:
            raise ConfigError(f"sweep parameter {dotted!r} does not address a config entry")
        node = node[key]
    if isinstance(node, (dict, list)):
        raise ConfigError(f"sweep parameter {dotted!r} does not address a scalar")


# ---------------------------------------------------------------- reports


def report_thresholds(geometry: TargetGeometry, hm: HarmonicMapConfig | None = None) -> dict:
    """C*, D*, E(Q) (identity and computed from Q), h(0), and the K(E) table."""
    hm = hm or HarmonicMapConfig()
    profile = solve_Q(geometry, hm.ds, (hm.s_min, hm.s_max))
    e_q = geometry.e_q
    table = []
    for frac in (0.25, 0.5, 0.75, 1.0):
        e = frac * 2.0 * e_q
        kval = geometry.K(e)
        table.append({"E": e, "K": kval if math.isfinite(kval) else None,
                      "below_c_star": bool(kval < geometry.c_star)})
    return _jsonable({
        "kind": geometry.kind,
        "k": geometry.k,
        "c_star": geometry.c_star,
        "d_star": geometry.d_star,
        "e_q": e_q,
        "e_q_profile": profile.energy,
        "h0": h_origin(geometry),
        "K_table": table,
    })


def lemma7_report(cfg: ScenarioConfig, out_dir) -> dict:
    geometry = load_geometry(cfg)
    delta = cfg.lemma7.delta_fraction * geometry.e_q
    try:
        scan = diag.lemma7_scan(geometry, delta, cfg.lemma7.n_profiles, cfg.seed)
    except ValueError as exc:
        raise ConfigError(f"lemma7: {exc}") from None
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = _jsonable(scan.to_json())
    write_json(report, out / "lemma7.json")
    for tag, params in (("worst_low", scan.worst_low), ("worst_high", scan.worst_high)):
        u = diag.bump_sum(params, geometry.k)
        rows = [("r", "u")] + [(_fmt(r), _fmt(x)) for r, x in zip(diag.SCAN_GRID.r, u)]
        write_rows(rows, out / f"{tag}.csv")
    return report


def assumption_report(cfg: ScenarioConfig, out_dir) -> dict:
    """Assumption check with the report always written; AssumptionError when any fails."""
    geometry = load_geometry(cfg, require_assumptions=False)
    report = check_assumptions(geometry)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    payload = _jsonable({**report.to_json(), "all_pass": report.all_pass, "c_star": geometry.c_star,
                         "d_star": geometry.d_star})
    write_json(payload, out / "assumptions.json")
    if not report.all_pass:
        raise AssumptionError(f"geometry fails assumptions: {report.failures()}", report)
    return payload


def harmonic_map_report(cfg: ScenarioConfig, out_dir) -> dict:
    geometry = load_geometry(cfg)
    hm = cfg.harmonic_map
    profile = solve_Q(geometry, hm.ds, (hm.s_min, hm.s_max))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    profile.write_csv(out / "Q.csv")
    profile.write_summary(out / "Q_summary.json")
    return profile.summary()


def initial_energy(cfg: ScenarioConfig) -> float:
    geometry = load_geometry(cfg)
    return total_energy(initial_state(cfg, geometry), geometry)
