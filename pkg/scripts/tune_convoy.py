"""Grid search for the convoy controller's speed-holding weight.

Mirrors tune_base.py: one knob (the velocity entry of the tracking weight Q,
with the terminal weight Q_f scaled alongside it), scored by the mean avg_e_m2
over the chosen scenarios and seeds, colliding settings discarded. The winner
is frozen into ConvoyConfig.
"""

import argparse
from pathlib import Path

import numpy as np

from convoylab.sim.scenario import load
from convoylab.sim.world import run

SCN_DIR = Path(__file__).resolve().parent.parent / "scenarios"
ALL = "straight,sine,infinity,tight_turns,tunnel_stall,race_track"


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scenarios", default=ALL)
    ap.add_argument("--grid", default="1,2,4,8")
    ap.add_argument("--seeds", default="0")
    args = ap.parse_args()

    names = args.scenarios.split(",")
    seeds = [int(s) for s in args.seeds.split(",")]
    best = None
    print(f"{'q_v':>6} " + " ".join(f"{n[:11]:>11}" for n in names) + f" {'score':>7}")
    for q in (float(g) for g in args.grid.split(",")):
        weights = dict(Q=[0.5, 0.5, 2.0, q], Q_f=[1.0, 1.0, 4.0, 2.0 * q])
        per, hits = [], 0
        for name in names:
            scn = load(SCN_DIR / f"{name}.yaml").with_(controller="convoy", convoy=weights)
            runs = [run(scn.with_(seed=s)) for s in seeds]
            per.append(np.mean([r.summary.avg_e_m2 for r in runs]))
            hits += sum(r.collision for r in runs)
        score = float(np.mean(per))
        flag = "" if hits == 0 else f"  {hits} collision(s)"
        print(f"{q:6.2f} " + " ".join(f"{x:11.4f}" for x in per) + f" {score:7.4f}{flag}", flush=True)
        if hits == 0 and (best is None or score < best[1]):
            best = (weights, score)
    print("best:", best[0] if best else "none without collision")


if __name__ == "__main__":
    main()
