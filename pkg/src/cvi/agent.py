"""Continuous value iteration over a replay buffer.

The value model V(s, g) and action-value model Q(s, g, a) are KNN regressors
over concatenated feature vectors. Each outer training cycle collects
epsilon-greedy experience, augments the buffer, drives V to a fixed point over
the whole buffer, and refits Q from the converged V.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ReplayBuffer, Trajectory, Transition, Vec
from .knn import KnnModel


@dataclass(frozen=True)
class CviParams:
    gamma: float = 0.99            # discount on the successor-state value source
    beta: float = 0.99             # cooling on the same-state value source
    epsilon: float = 0.2           # exploration rate during collection
    k: int = 5                     # KNN neighbors for both V and Q
    max_v_iters: int = 100         # hard cap on inner value iterations
    v_tolerance: float = 1e-3      # max-change convergence threshold
    n_action_candidates: int = 100 # candidate actions scored per greedy choice
    bellman_q: bool = False        # opt-in r + gamma*V(s') Q target variant
    normalize_features: bool = False  # divide KNN features by space half-widths

    def __post_init__(self):
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must be in (0, 1]")
        if not 0 <= self.beta <= 1:
            raise ValueError("beta must be in [0, 1]")
        if not 0 <= self.epsilon <= 1:
            raise ValueError("epsilon must be in [0, 1]")
        if self.k < 1 or self.max_v_iters < 1 or self.n_action_candidates < 1:
            raise ValueError("k, max_v_iters and n_action_candidates must be >= 1")
        if self.v_tolerance <= 0:
            raise ValueError("v_tolerance must be positive")


def _sg(state: Vec, goal: Vec) -> np.ndarray:
    return np.concatenate((state, goal))


def v_update_target(t: Transition, v: KnnModel, gamma: float, beta: float) -> float:
    """Target for one row: max of the reward, the discounted successor value,
    and the cooled same-state value."""
    return max(
        t.reward,
        gamma * v.predict(_sg(t.next_state, t.goal)),
        beta * v.predict(_sg(t.state, t.goal)),
    )


def v_iteration(buffer: ReplayBuffer, params: CviParams, v0: KnnModel | None = None,
                feature_scale: np.ndarray | None = None) -> KnnModel:
    """Iterate the value update over every buffer row until the model's
    predictions on the buffer stop changing (or max_v_iters is hit).

    Each inner iteration refits on the same (s, g) rows with fresh targets, so
    the neighbor structure is computed once and reused; the result is
    identical to refitting from scratch every iteration.
    """
    if len(buffer) == 0:
        raise ValueError("buffer is empty")
    s, _, r, ns, g = buffer.columns()
    rows = np.concatenate((s, g), axis=1)
    rows_next = np.concatenate((ns, g), axis=1)
    if feature_scale is not None:
        rows = rows * feature_scale
        rows_next = rows_next * feature_scale
    if v0 is not None and v0.size > 0:
        p_self = v0.predict_batch(rows)
        p_next = v0.predict_batch(rows_next)
    else:
        p_self = np.zeros(len(r))
        p_next = np.zeros(len(r))
    probe = KnnModel(rows, np.zeros(len(r)), params.k)
    nbr_self = probe.neighbor_indices(rows)
    nbr_next = probe.neighbor_indices(rows_next)
    prev_pred = p_self
    targets = r
    for _ in range(params.max_v_iters):
        targets = np.maximum(r, np.maximum(params.gamma * p_next, params.beta * p_self))
        p_self = targets[nbr_self].mean(axis=1)
        p_next = targets[nbr_next].mean(axis=1)
        done = np.abs(p_self - prev_pred).max() < params.v_tolerance
        prev_pred = p_self
        if done:
            break
    return KnnModel(rows, targets, params.k)


def q_fit(buffer: ReplayBuffer, v_final: KnnModel, k: int, *,
          gamma: float = 1.0, bellman: bool = False,
          feature_scale: np.ndarray | None = None,
          v_feature_scale: np.ndarray | None = None) -> KnnModel:
    """Fit Q over (s, g, a) rows with targets V(s', g); the opt-in bellman
    variant uses r + gamma*V(s', g) instead."""
    if len(buffer) == 0:
        raise ValueError("buffer is empty")
    s, a, r, ns, g = buffer.columns()
    rows = np.concatenate((s, g, a), axis=1)
    if feature_scale is not None:
        rows = rows * feature_scale
    rows_next = np.concatenate((ns, g), axis=1)
    if v_feature_scale is not None:
        rows_next = rows_next * v_feature_scale
    v_next = v_final.predict_batch(rows_next)
    targets = r + gamma * v_next if bellman else v_next
    return KnnModel(rows, targets, k)


@dataclass
class CycleStats:
    experienced: int
    augmented: int
    buffer_size: int
    trajectories: int


class CviAgent:
    """Holds the replay buffer and the current V/Q models; collects data with
    an epsilon-greedy policy over sampled action candidates."""

    def __init__(self, env, params: CviParams | None = None,
                 buffer_capacity: int | None = None):
        self.params = params or CviParams()
        self.action_space = env.action_space
        self.buffer = ReplayBuffer(buffer_capacity)
        self.v_model = KnnModel.empty(self.params.k)
        self.q_model = KnnModel.empty(self.params.k)
        if self.params.normalize_features:
            scales = [2.0 / np.maximum(sp.upper - sp.lower, 1e-12)
                      for sp in (env.state_space, env.goal_space, env.action_space)]
            self._sg_scale = np.concatenate(scales[:2])
            self._sga_scale = np.concatenate(scales)
        else:
            self._sg_scale = None
            self._sga_scale = None

    def select_action(self, s: Vec, g: Vec, rng: np.random.Generator,
                      greedy: bool = False) -> Vec:
        """Uniform action with probability epsilon (or while Q is empty);
        otherwise the best of n_action_candidates uniform candidates under Q,
        first drawn wins ties."""
        if self.q_model.size == 0:
            return self.action_space.sample(rng)
        if not greedy and rng.random() < self.params.epsilon:
            return self.action_space.sample(rng)
        m = self.params.n_action_candidates
        cands = rng.uniform(self.action_space.lower, self.action_space.upper,
                            size=(m, self.action_space.dimension))
        sg = _sg(s, g)
        feats = np.concatenate((np.broadcast_to(sg, (m, sg.shape[0])), cands), axis=1)
        if self._sga_scale is not None:
            feats = feats * self._sga_scale
        q = self.q_model.predict_batch(feats)
        return cands[int(np.argmax(q))]

    def learn(self) -> None:
        """One V fixed-point pass (warm started from the current model) and a
        fresh Q fit from the converged V."""
        self.v_model = v_iteration(self.buffer, self.params, v0=self.v_model,
                                   feature_scale=self._sg_scale)
        self.q_model = q_fit(
            self.buffer, self.v_model, self.params.k,
            gamma=self.params.gamma, bellman=self.params.bellman_q,
            feature_scale=self._sga_scale, v_feature_scale=self._sg_scale,
        )

    def collect(self, env, protocol, rng: np.random.Generator) -> list[Trajectory]:
        """Run goal attempts until the cycle's transition budget is spent.

        Point-style protocols re-randomize the start each attempt (kept at
        least the goal margin away from the goal); persistent protocols keep
        the state and redraw only the goal.
        """
        budget = protocol.episode_max_steps
        trajectories: list[Trajectory] = []
        while budget > 0:
            if protocol.goal_mode == "one_goal":
                goal = env.current_goal.copy()
            else:
                goal = _draw_nontrivial_goal(env, rng)
            if protocol.reset_agent_on_trial_end:
                start = _draw_start_away_from(env, goal, rng)
                env.reset(rng, state=start, goal=goal)
            else:
                env.set_goal(goal)
            s = env.current_state.copy()
            steps = min(protocol.trial_max_steps, budget)
            transitions = []
            for _ in range(steps):
                a = self.select_action(s, goal, rng, greedy=False)
                ns, r = env.step(a)
                transitions.append(Transition(s, a, r, ns, goal))
                s = ns
                budget -= 1
                if r == 1.0:
                    break
            trajectories.append(Trajectory(transitions))
        return trajectories

    def run_cycle(self, env, protocol, augmenters, rng: np.random.Generator,
                  learn: bool = True) -> CycleStats:
        """One outer iteration: collect, augment, refit V and Q."""
        from .augment import apply_augmenter

        trajectories = self.collect(env, protocol, rng)
        experienced = 0
        for tr in trajectories:
            self.buffer.push_trajectory(tr)
            experienced += len(tr)
        augmented = 0
        for spec in augmenters:
            augmented += apply_augmenter(self.buffer, env, spec, trajectories, rng)
        if learn:
            self.learn()
        return CycleStats(experienced, augmented, len(self.buffer), len(trajectories))


def _draw_nontrivial_goal(env, rng: np.random.Generator, tries: int = 100) -> Vec:
    """Sample a goal not already satisfied by the current state (when the
    environment can project states into goal space)."""
    try:
        achieved = env.achieved_goal(env.current_state)
    except NotImplementedError:
        return env.sample_goal(rng)
    for _ in range(tries):
        g = env.sample_goal(rng)
        if float(np.linalg.norm(achieved - g)) >= env.w:
            return g
    return g


def _draw_start_away_from(env, goal: Vec, rng: np.random.Generator,
                          tries: int = 100) -> Vec:
    for _ in range(tries):
        s = env.sample_state(rng)
        try:
            achieved = env.achieved_goal(s)
        except NotImplementedError:
            return s
        if float(np.linalg.norm(achieved - goal)) >= env.w:
            return s
    return s
