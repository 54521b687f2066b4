#!/usr/bin/env python3
"""Run the bundled point-environment benchmarks end to end.

Produces metrics.csv / summary.csv / curves.svg under out/ for the one-goal
convergence run and the random-goal augmentation matrix. Expect roughly an
hour on two cores for the full matrix; pass --quick for a reduced sweep.
"""

import argparse
import sys
from pathlib import Path

import dataclasses

from cvi.cli import run_experiment
from cvi.config import parse_config

ROOT = Path(__file__).resolve().parent.parent


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--jobs", type=int, default=2)
    ap.add_argument("--quick", action="store_true", help="3 seeds instead of 10")
    args = ap.parse_args()

    for name in ("point_one_goal", "point_random_goal_matrix"):
        cfg = parse_config(ROOT / "configs" / f"{name}.cfg")
        if args.quick:
            cfg = dataclasses.replace(cfg, runs=3, output_dir=cfg.output_dir + "_quick")
        print(f"== {cfg.name}: systems={', '.join(cfg.systems)} runs={cfg.runs}")
        run_experiment(cfg, jobs=args.jobs)
        print(f"   wrote {cfg.output_dir}/")
    return 0


if __name__ == "__main__":
    sys.exit(main())
