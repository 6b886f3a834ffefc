#!/usr/bin/env python3
"""Desk-scale twin experiment, then a short text summary of the error decay."""

import argparse
import sys
from pathlib import Path

from sqgda import io
from sqgda.cli import main as cli_main

ROOT = Path(__file__).resolve().parents[1]


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=str(ROOT / "configs" / "twin_desk.cfg"))
    ap.add_argument("--out", default="out/twin")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    code = cli_main(["twin", "--config", args.config, "--out", args.out, "--seed", str(args.seed)])
    if code != 0:
        return code
    cols, rows = io.read_csv(Path(args.out) / "twin_series.csv")
    it, ie, ith = cols.index("t"), cols.index("err_l2"), cols.index("theta_l2")
    print(f"{'t':>6}  {'relative L2 error':>18}")
    for r in rows[:: max(1, len(rows) // 15)]:
        print(f"{float(r[it]):6.1f}  {float(r[ie]) / float(r[ith]):18.3e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
