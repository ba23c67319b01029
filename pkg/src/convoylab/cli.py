"""Command-line front door: run scenarios, compare controllers, sweep speeds, spring demo."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path as FsPath

from .sim import springmass
from .sim.scenario import ScenarioError, load
from .sim.world import run

EXIT_OK, EXIT_COLLISION, EXIT_INVALID = 0, 1, 2

TABLE_COLUMNS = ("scenario", "controller", "seed", "avg_e_m1", "avg_e_m2", "max_e_m2", "collision", "completion")


def _ints(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _cell(v) -> str:
    if isinstance(v, bool):
        return "yes" if v else "no"
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.3f}"
    return str(v)


def format_table(rows: list[dict], columns=TABLE_COLUMNS) -> str:
    """Aligned plain-text table."""
    cells = [[_cell(r.get(c, "")) for c in columns] for r in rows]
    widths = [max(len(c), *(len(row[i]) for row in cells)) if cells else len(c) for i, c in enumerate(columns)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(columns, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(v.rjust(w) if i > 1 else v.ljust(w) for i, (v, w) in enumerate(zip(row, widths)))
              for row in cells]
    return "\n".join(lines)


def table_csv(rows: list[dict], columns=TABLE_COLUMNS) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in columns])
    return buf.getvalue()


def _row(result, seed) -> dict:
    d = result.summary.as_dict()
    d["seed"] = seed
    return d


def _write(out: FsPath, name: str, text: str) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(text)


def cmd_validate(args) -> int:
    scn = load(args.scenario)
    print(f"{args.scenario}: ok ({scn.name}, {scn.agents} agents, {scn.duration:g} s)")
    return EXIT_OK


def cmd_run(args) -> int:
    scn = load(args.scenario)
    kw = {}
    if args.controller:
        kw["controller"] = args.controller
    if args.seed is not None:
        kw["seed"] = args.seed
    scn = scn.with_(**kw)
    result = run(scn)
    out = FsPath(args.out)
    stem = f"{scn.name}_{scn.controller}_seed{scn.seed}"
    _write(out, stem + ".csv", result.csv_text())
    _write(out, stem + ".json", result.summary_json() + "\n")
    print(format_table([_row(result, scn.seed)]))
    return EXIT_COLLISION if result.collision else EXIT_OK


def cmd_compare(args) -> int:
    scn = load(args.scenario)
    seeds = args.seeds or [scn.seed]
    rows = []
    for seed in seeds:
        for controller in ("convoy", "base"):
            rows.append(_row(run(scn.with_(controller=controller, seed=seed)), seed))
    text = format_table(rows)
    print(text)
    if args.out:
        out = FsPath(args.out)
        _write(out, f"{scn.name}_compare.csv", table_csv(rows))
        _write(out, f"{scn.name}_compare.txt", text + "\n")
    return EXIT_COLLISION if any(r["collision"] for r in rows) else EXIT_OK


def cmd_sweep(args) -> int:
    scn = load(args.scenario)
    controllers = [args.controller] if args.controller else ["convoy", "base"]
    rows = []
    for v in args.speeds:
        for controller in controllers:
            r = run(scn.with_(controller=controller, v_t=v, v_max=max(scn.vehicle_v_max, 1.25 * v)))
            row = _row(r, scn.seed)
            row["v_t"] = v
            rows.append(row)
    cols = ("v_t",) + TABLE_COLUMNS
    text = format_table(rows, cols)
    print(text)
    if args.out:
        out = FsPath(args.out)
        _write(out, f"{scn.name}_sweep.csv", table_csv(rows, cols))
        _write(out, f"{scn.name}_sweep.txt", text + "\n")
    return EXIT_OK


def cmd_spring(args) -> int:
    dist = springmass.Disturbance(t_hold=args.hold)
    rows = []
    for coupling in springmass.COUPLINGS:
        times = springmass.spring_demo(coupling, args.k, args.c, args.m, dist)
        rows.append(dict(coupling=coupling, agent1=times[0], agent2=times[1], agent3=times[2], worst=max(times)))
    cols = ("coupling", "agent1", "agent2", "agent3", "worst")
    print(format_table(rows, cols))
    if args.out:
        _write(FsPath(args.out), "spring_demo.json", json.dumps(rows, indent=2) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="convoylab", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate one scenario and write CSV + summary JSON")
    r.add_argument("scenario")
    r.add_argument("--controller", choices=("convoy", "base"))
    r.add_argument("--seed", type=int)
    r.add_argument("--out", default="runs")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="run both controllers and print a side-by-side table")
    c.add_argument("scenario")
    c.add_argument("--seeds", type=_ints)
    c.add_argument("--out")
    c.set_defaults(func=cmd_compare)

    s = sub.add_parser("sweep-speed", help="repeat a scenario over target speeds")
    s.add_argument("scenario")
    s.add_argument("--speeds", type=_floats, default=[4.0, 5.0, 6.0, 7.0, 8.0])
    s.add_argument("--controller", choices=("convoy", "base"))
    s.add_argument("--out")
    s.set_defaults(func=cmd_sweep)

    d = sub.add_parser("spring-demo", help="three-mass chain: lead-only vs two-sided coupling")
    d.add_argument("--k", type=float, default=1.0)
    d.add_argument("--c", type=float, default=1.0)
    d.add_argument("--m", type=float, default=1.0)
    d.add_argument("--hold", type=float, default=2.0, help="seconds the last mass is pinned")
    d.add_argument("--out")
    d.set_defaults(func=cmd_spring)

    v = sub.add_parser("validate", help="schema check only")
    v.add_argument("scenario")
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
