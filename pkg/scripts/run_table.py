"""Convoy vs baseline over every shipped scenario and several seeds.

Writes results/table.csv and prints the per-scenario means.
"""

import argparse
from pathlib import Path

import numpy as np

from convoylab.cli import TABLE_COLUMNS, format_table, table_csv
from convoylab.sim.scenario import load
from convoylab.sim.world import run

ROOT = Path(__file__).resolve().parent.parent
ROWS = ("straight", "sine", "infinity", "tight_turns", "tunnel_stall", "race_track")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", default="0,1,2")
    ap.add_argument("--out", default=str(ROOT / "results"))
    args = ap.parse_args()

    seeds = [int(s) for s in args.seeds.split(",")]
    rows = []
    for name in ROWS:
        scn = load(ROOT / "scenarios" / f"{name}.yaml")
        for seed in seeds:
            for controller in ("convoy", "base"):
                r = run(scn.with_(controller=controller, seed=seed))
                rows.append(dict(r.summary.as_dict(), seed=seed))
                print(f"{name:13s} {controller:7s} seed {seed}: e_m1 {r.summary.avg_e_m1:.3f}"
                      f" e_m2 {r.summary.avg_e_m2:.3f}", flush=True)

    means = []
    for name in ROWS:
        for controller in ("convoy", "base"):
            sel = [r for r in rows if r["scenario"] == name and r["controller"] == controller]
            means.append(dict(scenario=name, controller=controller, seed="mean",
                              avg_e_m1=np.mean([r["avg_e_m1"] for r in sel]),
                              avg_e_m2=np.mean([r["avg_e_m2"] for r in sel]),
                              max_e_m2=max(r["max_e_m2"] for r in sel),
                              collision=any(r["collision"] for r in sel),
                              completion=np.mean([r["completion"] for r in sel])))
    print(format_table(means))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "table.csv").write_text(table_csv(rows + means, TABLE_COLUMNS))


if __name__ == "__main__":
    main()
