"""Energy sweep of the bump family below and above E(Q); prints the classification table."""
import argparse

from critwave import experiments as ex


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--geometry", default="sphere")
    p.add_argument("--fractions", type=float, nargs="+", default=[0.3, 0.6, 0.9, 1.2, 1.6])
    p.add_argument("--n-cells", type=int, default=2000)
    p.add_argument("--r-max", type=float, default=20.0)
    p.add_argument("--t-max", type=float, default=12.0)
    p.add_argument("--parallelism", type=int, default=1)
    p.add_argument("--out", default="runs/dichotomy")
    args = p.parse_args()
    cfg = ex.load_config({
        "name": f"{args.geometry}-dichotomy",
        "geometry": {"kind": args.geometry},
        "data": {"family": "gaussian-bump", "a": 1.0, "r0": 2.0, "w": 0.5, "target_energy_fraction": 0.3},
        "grid": {"n_cells": args.n_cells, "r_max": args.r_max},
        "evolution": {"t_max": args.t_max, "snapshot_stride": 10},
    })
    result = ex.run_sweep(cfg, "data.target_energy_fraction", args.fractions, args.parallelism, args.out)
    print(result.table())
    print(f"outputs in {args.out}")


if __name__ == "__main__":
    main()
