"""Replay augmentation: hindsight relabeling (HER) and imaginary goals (IER).

Both schemes copy experienced transitions with a substituted goal and the
reward recomputed from the environment's reward rule; states and actions are
never altered. HER relabels each transition with every later achieved state of
its trajectory, which yields exactly n(n+1)/2 copies for an n-step trajectory.
IER draws source transitions uniformly with replacement and pairs them with
fresh goals sampled from the goal space, so it can produce any number of
samples and works even when states do not live in goal space.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ReplayBuffer, Trajectory, Transition


@dataclass(frozen=True)
class AugmenterSpec:
    """One augmentation pass per training cycle.

    kind "ier" sizes its batch either by a fixed `ier_sample_count` or, when
    `her_equivalent_multiple` is set, by that multiple of the number of samples
    HER could produce for the freshly collected trajectories.
    """

    kind: str
    ier_sample_count: int = 0
    her_equivalent_multiple: float | None = None

    def __post_init__(self):
        if self.kind not in ("none", "her", "ier"):
            raise ValueError(f"unknown augmenter kind: {self.kind!r}")
        if self.kind != "ier" and (self.ier_sample_count or self.her_equivalent_multiple):
            raise ValueError("sample sizing applies only to kind='ier'")
        if self.ier_sample_count < 0:
            raise ValueError("ier_sample_count must be non-negative")
        if self.her_equivalent_multiple is not None and self.her_equivalent_multiple <= 0:
            raise ValueError("her_equivalent_multiple must be positive")


def _her_rows(traj: Trajectory, env):
    """Vectorized HER relabeling: returns (s, a, r, ns, g) row arrays."""
    ts = traj.transitions
    n = len(ts)
    if n == 0:
        return None
    achieved = env.achieved_goals(np.stack([t.next_state for t in ts]))
    ii, jj = np.triu_indices(n)
    s = np.stack([t.state for t in ts])[ii]
    a = np.stack([t.action for t in ts])[ii]
    ns = np.stack([t.next_state for t in ts])[ii]
    goals = achieved[jj]
    r = (np.linalg.norm(achieved[ii] - goals, axis=1) < env.w).astype(np.float64)
    return s, a, r, ns, goals


def her_augment(traj: Trajectory, env) -> list[Transition]:
    """Relabeled copies of a trajectory: one per (transition, later achieved
    state) pair. Requires the environment's achieved-goal projection."""
    rows = _her_rows(traj, env)
    if rows is None:
        return []
    s, a, r, ns, goals = rows
    return [Transition(s[i], a[i], float(r[i]), ns[i], goals[i]) for i in range(len(r))]


def her_augment_into(buffer: ReplayBuffer, traj: Trajectory, env) -> int:
    rows = _her_rows(traj, env)
    if rows is None:
        return 0
    buffer.append_batch(*rows)
    return len(rows[2])


def _ier_rows(buffer: ReplayBuffer, env, s_count: int, rng: np.random.Generator):
    if s_count == 0:
        return None
    if len(buffer) == 0:
        raise ValueError("cannot augment an empty buffer")
    idx = rng.integers(0, len(buffer), size=s_count)
    s, a, _, ns, _ = buffer.columns()
    goals = env.sample_goals(rng, s_count)
    achieved = env.achieved_goals(ns[idx])
    r = (np.linalg.norm(achieved - goals, axis=1) < env.w).astype(np.float64)
    return s[idx], a[idx], r, ns[idx], goals


def ier_augment(buffer: ReplayBuffer, env, s_count: int,
                rng: np.random.Generator) -> list[Transition]:
    """s_count transitions drawn uniformly (with replacement) from the buffer,
    each with a fresh goal sampled from the goal space and its reward
    recomputed."""
    rows = _ier_rows(buffer, env, s_count, rng)
    if rows is None:
        return []
    s, a, r, ns, goals = rows
    return [Transition(s[i].copy(), a[i].copy(), float(r[i]), ns[i].copy(), goals[i])
            for i in range(len(r))]


def ier_augment_into(buffer: ReplayBuffer, env, s_count: int,
                     rng: np.random.Generator) -> int:
    rows = _ier_rows(buffer, env, s_count, rng)
    if rows is None:
        return 0
    buffer.append_batch(*rows)
    return len(rows[2])


def her_equivalent_count(source) -> int:
    """Sum of n(n+1)/2 over trajectories: the number of samples HER could
    emit. Accepts a ReplayBuffer (counting its resident trajectory segments)
    or an iterable of trajectories."""
    if isinstance(source, ReplayBuffer):
        lengths = source.retained_trajectory_lengths()
    else:
        lengths = [len(t) for t in source]
    return sum(n * (n + 1) // 2 for n in lengths)


def apply_augmenter(buffer: ReplayBuffer, env, spec: AugmenterSpec,
                    new_trajectories, rng: np.random.Generator) -> int:
    """Run one augmentation pass for the cycle's new trajectories; returns the
    number of rows appended."""
    if spec.kind == "none":
        return 0
    if spec.kind == "her":
        return sum(her_augment_into(buffer, tr, env) for tr in new_trajectories)
    if spec.her_equivalent_multiple is not None:
        count = int(round(spec.her_equivalent_multiple * her_equivalent_count(new_trajectories)))
    else:
        count = spec.ier_sample_count
    return ier_augment_into(buffer, env, count, rng)
