"""Grid search for the baseline spacing gains.

Damping is tied to the stiffness (critical damping, k_damp = 2 sqrt(k_spring)),
so the search is one-dimensional. The score is the mean avg_e_m2 over the
chosen scenarios and seeds; gains that collide anywhere are discarded. The
winner is frozen into BaseConfig.
"""

import argparse
import math
from pathlib import Path

import numpy as np

from convoylab.sim.scenario import load
from convoylab.sim.world import run

SCN_DIR = Path(__file__).resolve().parent.parent / "scenarios"
ALL = "straight,sine,infinity,tight_turns,tunnel_stall,race_track"


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scenarios", default=ALL)
    ap.add_argument("--grid", default="0.25,0.5,1.0,2.0,4.0")
    ap.add_argument("--seeds", default="0")
    args = ap.parse_args()

    names = args.scenarios.split(",")
    seeds = [int(s) for s in args.seeds.split(",")]
    best = None
    print(f"{'k_spring':>9} {'k_damp':>7} " + " ".join(f"{n[:11]:>11}" for n in names) + f" {'score':>7}")
    for k in (float(g) for g in args.grid.split(",")):
        gains = dict(k_spring=k, k_damp=round(2 * math.sqrt(k), 3))
        per, hits = [], 0
        for name in names:
            scn = load(SCN_DIR / f"{name}.yaml").with_(controller="base", base=gains)
            runs = [run(scn.with_(seed=s)) for s in seeds]
            per.append(np.mean([r.summary.avg_e_m2 for r in runs]))
            hits += sum(r.collision for r in runs)
        score = float(np.mean(per))
        flag = "" if hits == 0 else f"  {hits} collision(s)"
        print(f"{k:9.3f} {gains['k_damp']:7.3f} " + " ".join(f"{x:11.3f}" for x in per) + f" {score:7.3f}{flag}",
              flush=True)
        if hits == 0 and (best is None or score < best[1]):
            best = (gains, score)
    print("best:", best[0] if best else "none without collision")


if __name__ == "__main__":
    main()
