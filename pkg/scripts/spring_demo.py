"""Settling times of the three-mass chain over a (k, c) grid, both couplings."""

import argparse

from convoylab.sim.springmass import COUPLINGS, Disturbance, spring_demo


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--values", default="0.5,1,2", help="grid used for both k and c")
    ap.add_argument("--stuck", type=int, default=3, help="which mass is pinned (1-3)")
    args = ap.parse_args()

    vals = [float(v) for v in args.values.split(",")]
    dist = Disturbance(stuck=args.stuck)
    print(f"{'k':>5} {'c':>5}  " + "  ".join(f"{c:>24}" for c in COUPLINGS))
    for k in vals:
        for c in vals:
            cells = []
            for coupling in COUPLINGS:
                t = spring_demo(coupling, k, c, disturbance=dist)
                cells.append(" ".join(f"{x:7.2f}" for x in t))
            print(f"{k:5.2f} {c:5.2f}  " + "  ".join(f"{x:>24}" for x in cells))


if __name__ == "__main__":
    main()
