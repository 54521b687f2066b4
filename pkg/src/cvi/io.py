"""CSV schemas for replay buffers and value-model snapshots.

Buffer files carry one row per transition with a `traj` column: consecutive
rows sharing a non-negative id form one experienced trajectory (in insertion
order); augmented rows carry -1.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .core import ReplayBuffer, Trajectory, Transition
from .knn import KnnModel


def trajectory_ids(buffer: ReplayBuffer) -> np.ndarray:
    """Per-row trajectory ids in insertion order; -1 for augmented rows."""
    ids = np.full(len(buffer), -1, dtype=np.int64)
    min_serial = buffer._pushed - len(buffer)
    for t, (start, n) in enumerate(buffer._traj_spans):
        lo = max(start - min_serial, 0)
        hi = start + n - min_serial
        if hi > 0:
            ids[lo:hi] = t
    return ids


def save_buffer_csv(buffer: ReplayBuffer, path: str | Path) -> None:
    s, a, r, ns, g = buffer.columns()
    ids = trajectory_ids(buffer)
    ds, da, dg = buffer.dims
    header = (
        ["traj"]
        + [f"s{i}" for i in range(ds)]
        + [f"a{i}" for i in range(da)]
        + ["r"]
        + [f"ns{i}" for i in range(ds)]
        + [f"g{i}" for i in range(dg)]
    )
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(len(buffer)):
            row = [int(ids[i])]
            row += [repr(float(x)) for x in s[i]]
            row += [repr(float(x)) for x in a[i]]
            row.append(repr(float(r[i])))
            row += [repr(float(x)) for x in ns[i]]
            row += [repr(float(x)) for x in g[i]]
            writer.writerow(row)


def load_buffer_csv(path: str | Path) -> ReplayBuffer:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        ds = sum(1 for h in header if h.startswith("s") and not h.startswith("ns"))
        da = sum(1 for h in header if h.startswith("a"))
        dg = sum(1 for h in header if h.startswith("g"))
        buffer = ReplayBuffer()
        current_id = None
        pending: list[Transition] = []

        def flush():
            nonlocal pending
            if pending:
                buffer.push_trajectory(Trajectory(pending))
                pending = []

        for row in reader:
            tid = int(row[0])
            vals = [float(x) for x in row[1:]]
            t = Transition(
                np.array(vals[:ds]),
                np.array(vals[ds : ds + da]),
                vals[ds + da],
                np.array(vals[ds + da + 1 : 2 * ds + da + 1]),
                np.array(vals[2 * ds + da + 1 : 2 * ds + da + 1 + dg]),
            )
            if tid < 0:
                flush()
                current_id = None
                buffer.push(t)
            else:
                if tid != current_id:
                    flush()
                    current_id = tid
                pending.append(t)
        flush()
    return buffer


def load_snapshot_csv(path: str | Path, k: int) -> tuple[KnnModel, np.ndarray]:
    """Read a V-model snapshot; returns the refit model and the goal columns'
    shared value (error if the snapshot mixes goals)."""
    data = np.genfromtxt(path, delimiter=",", skip_header=1)
    data = np.atleast_2d(data)
    points, targets = data[:, :-1], data[:, -1]
    goals = points[:, -2:]
    if not np.all(goals == goals[0]):
        raise ValueError("snapshot holds multiple goals; pass --goal explicitly")
    return KnnModel(points, targets, k), goals[0]
