#!/usr/bin/env python3
"""Observation-operator property suites for every operator kind."""

import argparse
import sys
from pathlib import Path

from sqgda.cli import main as cli_main

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = {
    "volume": "props_volume.cfg",
    "rough_modal": "props_modal.cfg",
    "smooth_modal": "props_smooth.cfg",
}


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out/props")
    ap.add_argument("--kinds", nargs="+", default=list(CONFIGS), choices=list(CONFIGS))
    args = ap.parse_args()
    worst = 0
    for kind in args.kinds:
        cfg = ROOT / "configs" / CONFIGS[kind]
        worst = max(worst, cli_main(["props", "--config", str(cfg), "--out", f"{args.out}/{kind}"]))
    return worst


if __name__ == "__main__":
    sys.exit(main())
