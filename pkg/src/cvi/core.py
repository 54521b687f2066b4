"""Core types for goal-conditioned continuous MDPs.

States, actions and goals are plain 1-D float64 numpy arrays. The replay
buffer stores transitions in contiguous column arrays so that learning code
can operate on whole-buffer views without per-row Python overhead.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Iterable, Iterator, NamedTuple, Sequence

import numpy as np

Vec = np.ndarray


def as_vec(x, dim: int | None = None) -> Vec:
    """Coerce to a finite 1-D float64 vector, optionally checking dimension."""
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        v = v.reshape(-1)
    if not np.all(np.isfinite(v)):
        raise ValueError(f"vector has non-finite components: {v}")
    if dim is not None and v.shape[0] != dim:
        raise ValueError(f"expected dimension {dim}, got {v.shape[0]}")
    return v


class Transition(NamedTuple):
    """One experience tuple (s, a, r, s', g)."""

    state: Vec
    action: Vec
    reward: float
    next_state: Vec
    goal: Vec


@dataclass
class Trajectory:
    """Consecutive transitions sharing one goal, chained through states."""

    transitions: list[Transition] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.transitions)

    def __iter__(self) -> Iterator[Transition]:
        return iter(self.transitions)

    @property
    def goal(self) -> Vec:
        return self.transitions[0].goal

    def validate(self) -> None:
        """Check chaining (next_state[i] == state[i+1]) and the shared goal."""
        ts = self.transitions
        for i in range(len(ts) - 1):
            if not np.array_equal(ts[i].next_state, ts[i + 1].state):
                raise ValueError(f"trajectory broken between steps {i} and {i + 1}")
        for t in ts[1:]:
            if not np.array_equal(t.goal, ts[0].goal):
                raise ValueError("trajectory transitions do not share one goal")


@dataclass(frozen=True)
class SpaceSpec:
    """Axis-aligned box with per-component bounds (lower <= upper)."""

    lower: Vec
    upper: Vec

    def __post_init__(self):
        object.__setattr__(self, "lower", as_vec(self.lower))
        object.__setattr__(self, "upper", as_vec(self.upper, dim=self.lower.shape[0]))
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")

    @property
    def dimension(self) -> int:
        return self.lower.shape[0]

    def contains(self, x: Vec, atol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=np.float64)
        return bool(np.all(x >= self.lower - atol) and np.all(x <= self.upper + atol))

    def clip(self, x: Vec) -> Vec:
        return np.clip(x, self.lower, self.upper)

    def sample(self, rng: np.random.Generator) -> Vec:
        return rng.uniform(self.lower, self.upper)


def sample_uniform(space: SpaceSpec, rng: np.random.Generator) -> Vec:
    """Uniform point in the box; degenerate axes collapse to their bound."""
    return space.sample(rng)


def goal_reward(s_next: Vec, g: Vec, w: float, achieved: Vec | None = None) -> float:
    """Binary sparse reward: 1 iff the achieved goal of s_next lies within w of g.

    `achieved` is the goal-space projection of s_next; when omitted the state is
    taken to live in goal space directly.
    """
    if w <= 0:
        raise ValueError("goal margin w must be positive")
    p = np.asarray(s_next if achieved is None else achieved, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if p.shape != g.shape:
        raise ValueError(f"achieved goal shape {p.shape} != goal shape {g.shape}")
    return 1.0 if float(np.linalg.norm(p - g)) < w else 0.0


def goal_rewards(achieved: np.ndarray, goals: np.ndarray, w: float) -> np.ndarray:
    """Vectorized `goal_reward` over rows of achieved/goals, shape (m, k)."""
    if w <= 0:
        raise ValueError("goal margin w must be positive")
    d = np.linalg.norm(np.atleast_2d(achieved) - np.atleast_2d(goals), axis=1)
    return (d < w).astype(np.float64)


class ReplayBuffer:
    """Append-only transition store with optional FIFO capacity.

    Entries live in contiguous column arrays (grown geometrically, or used as a
    ring once a capacity is reached). Iteration follows insertion order.
    Trajectories pushed via `push_trajectory` are remembered so that
    hindsight-equivalent sample counts can be computed later.
    """

    def __init__(self, capacity: int | None = None):
        if capacity is not None and capacity < 1:
            raise ValueError("capacity must be positive or None")
        self.capacity = capacity
        self._size = 0
        self._head = 0  # physical index of the logically-first entry (ring mode)
        self._pushed = 0  # lifetime push count (serial numbers)
        self._cols: dict[str, np.ndarray] | None = None
        self._dims: tuple[int, int, int] | None = None  # (state, action, goal)
        self._traj_spans: list[tuple[int, int]] = []  # (start serial, length)

    def __len__(self) -> int:
        return self._size

    @property
    def dims(self) -> tuple[int, int, int] | None:
        return self._dims

    def _alloc(self, n: int, ds: int, da: int, dg: int) -> None:
        self._cols = {
            "s": np.empty((n, ds)),
            "a": np.empty((n, da)),
            "r": np.empty(n),
            "ns": np.empty((n, ds)),
            "g": np.empty((n, dg)),
        }

    def _ensure_room(self, extra: int) -> None:
        assert self._cols is not None
        room = self._cols["r"].shape[0]
        if self.capacity is not None:
            if room < self.capacity:
                new = min(self.capacity, max(2 * room, self._size + extra))
                self._grow(new)
        elif self._size + extra > room:
            self._grow(max(2 * room, self._size + extra))

    def _grow(self, n: int) -> None:
        assert self._cols is not None
        for key, arr in self._cols.items():
            shape = (n,) + arr.shape[1:]
            bigger = np.empty(shape, dtype=arr.dtype)
            bigger[: self._size] = arr[: self._size]
            self._cols[key] = bigger

    def append_batch(self, s, a, r, ns, g) -> None:
        """Bulk append; rows are 2-D arrays (or 1-D for r) with matching length."""
        s = np.atleast_2d(np.asarray(s, dtype=np.float64))
        a = np.atleast_2d(np.asarray(a, dtype=np.float64))
        ns = np.atleast_2d(np.asarray(ns, dtype=np.float64))
        g = np.atleast_2d(np.asarray(g, dtype=np.float64))
        r = np.atleast_1d(np.asarray(r, dtype=np.float64))
        m = r.shape[0]
        if self._cols is None:
            self._dims = (s.shape[1], a.shape[1], g.shape[1])
            first = max(256, m)
            if self.capacity is not None:
                first = min(first, self.capacity)
            self._alloc(first, *self._dims)
        ds, da, dg = self._dims
        if s.shape[1] != ds or ns.shape[1] != ds or a.shape[1] != da or g.shape[1] != dg:
            raise ValueError(
                f"transition dims {(s.shape[1], a.shape[1], g.shape[1])} do not match "
                f"buffer dims {self._dims}"
            )
        self._ensure_room(m)
        cols = self._cols
        room = cols["r"].shape[0]
        blocks = (("s", s), ("a", a), ("r", r), ("ns", ns), ("g", g))
        if self._head == 0 and self._size + m <= room:
            lo = self._size
            for key, block in blocks:
                cols[key][lo : lo + m] = block
            self._size += m
        elif m >= room:
            # Whole batch overwrites the ring; only the trailing rows survive.
            for key, block in blocks:
                cols[key][:] = block[m - room :]
            self._head = 0
            self._size = room
        else:
            start = (self._head + self._size) % room
            end = start + m
            for key, block in blocks:
                if end <= room:
                    cols[key][start:end] = block
                else:
                    k = room - start
                    cols[key][start:] = block[:k]
                    cols[key][: end - room] = block[k:]
            overflow = max(0, self._size + m - room)
            self._head = (self._head + overflow) % room
            self._size = min(self._size + m, room)
        self._pushed += m

    def push(self, t: Transition) -> None:
        self.append_batch(t.state, t.action, t.reward, t.next_state, t.goal)

    def extend(self, ts: Iterable[Transition]) -> int:
        ts = list(ts)
        if not ts:
            return 0
        self.append_batch(
            np.stack([t.state for t in ts]),
            np.stack([t.action for t in ts]),
            np.array([t.reward for t in ts]),
            np.stack([t.next_state for t in ts]),
            np.stack([t.goal for t in ts]),
        )
        return len(ts)

    def push_trajectory(self, traj: Trajectory) -> None:
        """Append a trajectory's transitions and remember its span."""
        start = self._pushed
        n = self.extend(traj.transitions)
        if n:
            self._traj_spans.append((start, n))

    def _logical(self, key: str) -> np.ndarray:
        cols = self._cols
        if self._head == 0:
            return cols[key][: self._size]
        room = cols[key].shape[0]
        hi = self._head + self._size
        if hi <= room:
            return cols[key][self._head : hi]
        return np.concatenate((cols[key][self._head :], cols[key][: hi - room]))

    def columns(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(states, actions, rewards, next_states, goals) in insertion order."""
        if self._size == 0:
            raise ValueError("buffer is empty")
        return tuple(self._logical(k) for k in ("s", "a", "r", "ns", "g"))

    def __getitem__(self, i: int) -> Transition:
        if not -self._size <= i < self._size:
            raise IndexError(i)
        i %= self._size
        room = self._cols["r"].shape[0] if self._cols is not None else 0
        p = (self._head + i) % room
        c = self._cols
        return Transition(
            c["s"][p].copy(), c["a"][p].copy(), float(c["r"][p]), c["ns"][p].copy(), c["g"][p].copy()
        )

    def __iter__(self) -> Iterator[Transition]:
        for i in range(self._size):
            yield self[i]

    def retained_trajectory_lengths(self) -> list[int]:
        """Lengths of trajectory segments still resident after any eviction."""
        min_serial = self._pushed - self._size
        out = []
        for start, n in self._traj_spans:
            kept = n - max(0, min_serial - start)
            if kept > 0:
                out.append(kept)
        return out


class Environment(ABC):
    """Goal-conditioned MDP: reset/step plus reward, goal sampling and the
    optional projection of states into goal space."""

    state_space: SpaceSpec
    action_space: SpaceSpec
    goal_space: SpaceSpec
    w: float
    current_state: Vec
    current_goal: Vec

    @abstractmethod
    def reset(self, rng: np.random.Generator, *, state: Vec | None = None,
              goal: Vec | None = None) -> Vec:
        """Set (or sample) the current state and goal; returns the state."""

    @abstractmethod
    def step(self, action: Vec) -> tuple[Vec, float]:
        """Apply an action; returns (next_state, reward) for the current goal."""

    def set_goal(self, g: Vec) -> None:
        self.current_goal = as_vec(g, self.goal_space.dimension)

    def achieved_goal(self, state: Vec) -> Vec:
        """Project a state into goal space; environments without such a
        projection keep the default, which refuses."""
        raise NotImplementedError(f"{type(self).__name__} has no achieved-goal projection")

    def achieved_goals(self, states: np.ndarray) -> np.ndarray:
        return np.stack([self.achieved_goal(s) for s in np.atleast_2d(states)])

    def reward(self, s: Vec, a: Vec, s_next: Vec, g: Vec) -> float:
        return goal_reward(s_next, g, self.w, achieved=self.achieved_goal(s_next))

    def rewards(self, next_states: np.ndarray, goals: np.ndarray) -> np.ndarray:
        return goal_rewards(self.achieved_goals(next_states), goals, self.w)

    def sample_goal(self, rng: np.random.Generator) -> Vec:
        return self.goal_space.sample(rng)

    def sample_goals(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return np.stack([self.sample_goal(rng) for _ in range(n)]) if n else \
            np.empty((0, self.goal_space.dimension))

    def sample_state(self, rng: np.random.Generator) -> Vec:
        return self.state_space.sample(rng)

    def optimal_steps(self, s: Vec, g: Vec) -> int | None:
        """Fewest steps an optimal policy needs from s to reward under goal g,
        or None when no tractable oracle exists."""
        return None
