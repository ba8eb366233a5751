"""Run a light-cone contained bump and report both virial residuals relative to E."""
import argparse
import json

from critwave import experiments as ex


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--geometry", default="sphere")
    p.add_argument("--n-cells", type=int, default=3000)
    p.add_argument("--out", default="runs/virial")
    args = p.parse_args()
    cfg = ex.load_config({
        "geometry": {"kind": args.geometry},
        "data": {"family": "gaussian-bump", "a": 1.0, "r0": 2.5, "w": 0.6, "target_energy_fraction": 0.5},
        "grid": {"n_cells": args.n_cells, "r_max": 60.0},
        "evolution": {"t_max": 10.0, "snapshot_stride": 4},
        "diagnostics": {"virial_radius": 30.0},
    })
    print(json.dumps(ex.virial_report(cfg, args.out), indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
