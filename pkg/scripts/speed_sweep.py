"""Target-speed sweep on the infinity loop for both controllers."""

import argparse
from pathlib import Path

from convoylab.cli import main as cli

ROOT = Path(__file__).resolve().parent.parent

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--speeds", default="4,5,6,7,8")
    ap.add_argument("--out", default=str(ROOT / "results"))
    args = ap.parse_args()
    raise SystemExit(cli(["sweep-speed", str(ROOT / "scenarios" / "infinity.yaml"), "--speeds", args.speeds,
                          "--out", args.out]))
