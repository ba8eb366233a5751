"""Command line: ``critwave <subcommand> --config path.json [--set key=value]... --out dir``.

Exit codes: 0 success, 2 config error, 3 geometry assumption failure,
4 numerical instability.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import experiments as ex
from .evolution import InstabilityError
from .geometry import AssumptionError, GeometryError
from .harmonic_map import HarmonicMapError

EXIT_OK, EXIT_CONFIG, EXIT_ASSUMPTION, EXIT_NUMERICAL = 0, 2, 3, 4


def _print_json(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def cmd_check_geometry(cfg, out):
    _print_json(ex.assumption_report(cfg, out))


def cmd_harmonic_map(cfg, out):
    _print_json(ex.harmonic_map_report(cfg, out))


def cmd_thresholds(cfg, out):
    report = ex.report_thresholds(ex.load_geometry(cfg), cfg.harmonic_map)
    out.mkdir(parents=True, exist_ok=True)
    ex.write_json(report, out / "thresholds.json")
    _print_json(report)


def cmd_evolve(cfg, out):
    result = ex.run_scenario(cfg, out)
    print(f"run directory: {result.run_dir}")
    _print_json({k: result.summary[k] for k in ("classification", "e_initial", "e_drift_rel", "triggers")})


def cmd_sweep(cfg, out):
    sw = cfg.sweep
    result = ex.run_sweep(cfg, sw.parameter, sw.values, sw.parallelism, out)
    print(result.table())


def cmd_lemma7(cfg, out):
    _print_json(ex.lemma7_report(cfg, out))


def cmd_virial(cfg, out):
    _print_json(ex.virial_report(cfg, out))


COMMANDS = {
    "check-geometry": (cmd_check_geometry, "check the standing assumptions on g"),
    "harmonic-map": (cmd_harmonic_map, "solve for the harmonic map Q and export it"),
    "thresholds": (cmd_thresholds, "report C*, D*, E(Q), h(0) and the K(E) table"),
    "evolve": (cmd_evolve, "run one scenario"),
    "sweep": (cmd_sweep, "run a parameter sweep and print the dichotomy table"),
    "lemma7-scan": (cmd_lemma7, "random scan of F/E over admissible static data"),
    "virial-report": (cmd_virial, "run a scenario and check both virial identities"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="critwave", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="scenario JSON file")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config entry by dotted path (repeatable)")
        p.add_argument("--out", required=True, help="output directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = COMMANDS[args.command][0]
    try:
        cfg = ex.load_config(args.config, ex.parse_set(args.overrides))
        handler(cfg, Path(args.out))
    except AssumptionError as exc:
        print(f"geometry assumption failure: {exc}", file=sys.stderr)
        return EXIT_ASSUMPTION
    except (InstabilityError, HarmonicMapError) as exc:
        print(f"numerical instability: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ex.ConfigError, GeometryError, ValueError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
