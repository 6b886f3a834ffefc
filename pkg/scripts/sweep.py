#!/usr/bin/env python3
"""Minimal synchronizing resolution N* per dissipation exponent."""

import argparse
import sys
from pathlib import Path

from sqgda import io
from sqgda.cli import main as cli_main

ROOT = Path(__file__).resolve().parents[1]


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=str(ROOT / "configs" / "sweep_gamma.cfg"))
    ap.add_argument("--out", default="out/sweep")
    ap.add_argument("--threads", type=int, default=0)
    args = ap.parse_args()
    code = cli_main(["sweep", "--config", args.config, "--out", args.out, "--threads", str(args.threads)])
    if code != 0:
        return code
    cols, rows = io.read_csv(Path(args.out) / "sweep_summary.csv")
    ns = [int(r[cols.index("n_star")]) for r in rows]
    finite = all(n > 0 for n in ns)
    print("N* nonincreasing in gamma:", finite and all(a >= b for a, b in zip(ns, ns[1:])))
    return 0


if __name__ == "__main__":
    sys.exit(main())
