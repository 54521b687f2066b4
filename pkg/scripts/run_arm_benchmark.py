#!/usr/bin/env python3
"""Run the simulated-arm benchmark (RANDOM / CVI / CVI+HER+IER, 10 seeds each).

Roughly two hours on two cores; --quick drops to 2 seeds.
"""

import argparse
import dataclasses
import sys
from pathlib import Path

from cvi.cli import run_experiment
from cvi.config import parse_config

ROOT = Path(__file__).resolve().parent.parent


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--jobs", type=int, default=2)
    ap.add_argument("--quick", action="store_true", help="2 seeds instead of 10")
    args = ap.parse_args()

    cfg = parse_config(ROOT / "configs" / "arm_benchmark.cfg")
    if args.quick:
        cfg = dataclasses.replace(cfg, runs=2, output_dir=cfg.output_dir + "_quick")
    print(f"== {cfg.name}: systems={', '.join(cfg.systems)} runs={cfg.runs}")
    run_experiment(cfg, jobs=args.jobs)
    print(f"   wrote {cfg.output_dir}/")
    return 0


if __name__ == "__main__":
    sys.exit(main())
