"""Print C*, D*, E(Q), h(0) and the K(E) table for the built-in geometries."""
import argparse

from critwave import experiments as ex
from critwave.geometry import make_builtin


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--kinds", nargs="+", default=["sphere", "yang-mills-shifted"])
    args = p.parse_args()
    for kind in args.kinds:
        rep = ex.report_thresholds(make_builtin(kind))
        print(f"{kind}: k={rep['k']}  C*={rep['c_star']:.12g}  D*={rep['d_star']:.12g}  "
              f"E(Q)={rep['e_q']:.12g} (profile {rep['e_q_profile']:.12g})  h(0)={rep['h0']:.9g}")
        for row in rep["K_table"]:
            k = "inf" if row["K"] is None else f"{row['K']:.9g}"
            print(f"    E={row['E']:<10.6g} K={k:<14} below C*: {row['below_c_star']}")


if __name__ == "__main__":
    main()
