#!/usr/bin/env python3
"""Train the fixed-goal landscape run and render predicted-vs-analytic value
heatmaps at a few iterations (1, 12, 100).

Writes snapshots plus out/point_value_landscape/inspect/*.svg.
"""

import sys
from pathlib import Path

from cvi.cli import main as cvi_main

ROOT = Path(__file__).resolve().parent.parent
CFG = str(ROOT / "configs" / "point_value_landscape.cfg")


def main() -> int:
    rc = cvi_main(["run", CFG])
    if rc != 0:
        return rc
    for it in (1, 12, 100):
        rc = cvi_main(["inspect-value", CFG, "--iteration", str(it)])
        if rc != 0:
            return rc
    return 0


if __name__ == "__main__":
    sys.exit(main())
