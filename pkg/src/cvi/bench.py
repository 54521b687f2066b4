"""Training and evaluation protocols, the optimal-control score, the benchmark
system matrix, multi-run aggregation, and CSV/SVG emission.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import knn
from .agent import CviAgent, CviParams, _draw_nontrivial_goal, _draw_start_away_from
from .augment import AugmenterSpec

ONE_GOAL = "one_goal"
RANDOM_GOAL = "random_goal"
SCORE_METRIC = "optimal_control_score"
REWARD_METRIC = "cumulative_reward"


@dataclass(frozen=True)
class TrainingProtocol:
    goal_mode: str = RANDOM_GOAL
    episode_max_steps: int = 200       # transitions collected per outer cycle
    trial_max_steps: int = 30          # budget per goal attempt
    reset_agent_on_trial_end: bool = True
    total_outer_iterations: int = 40

    def __post_init__(self):
        if self.goal_mode not in (ONE_GOAL, RANDOM_GOAL):
            raise ValueError(f"unknown goal mode {self.goal_mode!r}")
        if self.trial_max_steps > self.episode_max_steps:
            raise ValueError("trial_max_steps cannot exceed episode_max_steps")
        if min(self.episode_max_steps, self.trial_max_steps, self.total_outer_iterations) < 1:
            raise ValueError("protocol step counts must be positive")


@dataclass(frozen=True)
class EvalProtocol:
    eval_max_steps: int = 2000
    trial_max_steps: int = 30
    metric: str = SCORE_METRIC

    def __post_init__(self):
        if self.metric not in (SCORE_METRIC, REWARD_METRIC):
            raise ValueError(f"unknown metric {self.metric!r}")
        if min(self.eval_max_steps, self.trial_max_steps) < 1:
            raise ValueError("evaluation step counts must be positive")


@dataclass(frozen=True)
class MetricsRecord:
    run_id: str
    seed: int
    system: str
    iteration: int
    score: float
    cumulative_reward: int
    buffer_size: int
    wall_time_s: float


@dataclass(frozen=True)
class SystemSpec:
    name: str
    augmenters: tuple[AugmenterSpec, ...]
    learn: bool = True


SYSTEMS: dict[str, SystemSpec] = {
    "CVI": SystemSpec("CVI", ()),
    "CVI+HER": SystemSpec("CVI+HER", (AugmenterSpec("her"),)),
    "CVI+IER": SystemSpec("CVI+IER", (AugmenterSpec("ier", her_equivalent_multiple=1.0),)),
    "CVI+IER3X": SystemSpec("CVI+IER3X", (AugmenterSpec("ier", her_equivalent_multiple=3.0),)),
    "CVI+IER10X": SystemSpec("CVI+IER10X", (AugmenterSpec("ier", her_equivalent_multiple=10.0),)),
    "CVI+HER+IER": SystemSpec(
        "CVI+HER+IER",
        (AugmenterSpec("her"), AugmenterSpec("ier", her_equivalent_multiple=1.0)),
    ),
    "RANDOM": SystemSpec("RANDOM", (), learn=False),
}


def optimal_control_score(m: int, opt: int, trial_max: int, reached: bool) -> float:
    """Step-efficiency score: 1 at the optimal step count, linear down to 0 at
    the trial budget, 0 when the goal was not reached; clamped to [0, 1]."""
    if opt < 0 or opt >= trial_max:
        raise ValueError(f"optimal step count {opt} outside [0, {trial_max})")
    if not reached:
        return 0.0
    return float(np.clip(1.0 - (m - opt) / (trial_max - opt), 0.0, 1.0))


def evaluate(agent: CviAgent, env, protocol: TrainingProtocol,
             eval_protocol: EvalProtocol, rng: np.random.Generator,
             fixed_goal=None) -> tuple[float, int]:
    """Greedy-policy evaluation session.

    Runs whole trials while the step budget allows, scoring each against the
    environment's optimal-steps oracle (score metric) or counting goal
    reaches (reward metric). Returns (score in [0, 1], trials reached).
    """
    per_trial = eval_protocol.trial_max_steps
    used = 0
    successes = 0
    scores: list[float] = []
    trials = 0
    if not protocol.reset_agent_on_trial_end:
        env.reset(rng)  # fresh random pose for the session, then continuous
    while used + per_trial <= eval_protocol.eval_max_steps:
        if fixed_goal is not None:
            goal = np.asarray(fixed_goal, dtype=np.float64)
        else:
            goal = _draw_nontrivial_goal(env, rng)
        if protocol.reset_agent_on_trial_end:
            start = _draw_start_away_from(env, goal, rng)
            env.reset(rng, state=start, goal=goal)
        else:
            env.set_goal(goal)
        start_state = env.current_state.copy()
        s = start_state
        m = 0
        reached = False
        for _ in range(per_trial):
            a = agent.select_action(s, goal, rng, greedy=True)
            s, r = env.step(a)
            used += 1
            m += 1
            if r == 1.0:
                reached = True
                break
        trials += 1
        successes += int(reached)
        if eval_protocol.metric == SCORE_METRIC:
            opt = env.optimal_steps(start_state, goal)
            if opt is None:
                raise ValueError("environment provides no optimal-steps oracle; "
                                 "use the cumulative_reward metric")
            scores.append(optimal_control_score(m, opt, per_trial, reached))
    if eval_protocol.metric == SCORE_METRIC:
        score = float(np.mean(scores)) if scores else 0.0
    else:
        score = successes / trials if trials else 0.0
    return score, successes


def run_training(system: str, params: CviParams, env_factory,
                 protocol: TrainingProtocol, eval_protocol: EvalProtocol,
                 seed: int, *, fixed_goal=None, buffer_capacity: int | None = None,
                 record_timing: bool = False,
                 snapshot_dir: Path | None = None) -> list[MetricsRecord]:
    """One full run: alternate outer cycles with full evaluations, one metrics
    row per cycle. Fully deterministic given (system, params, seed)."""
    spec = SYSTEMS[system]
    if not spec.learn:
        params = replace(params, epsilon=1.0)
    ss = np.random.SeedSequence(seed)
    train_key, eval_key, goal_key = ss.spawn(3)
    train_rng = np.random.default_rng(train_key)
    eval_rng = np.random.default_rng(eval_key)
    env = env_factory()
    eval_env = env_factory()
    agent = CviAgent(env, params, buffer_capacity)
    run_id = f"{system}-s{seed}"

    goal = None
    if protocol.goal_mode == ONE_GOAL:
        goal = (np.asarray(fixed_goal, dtype=np.float64) if fixed_goal is not None
                else env.sample_goal(np.random.default_rng(goal_key)))
    env.reset(train_rng, goal=goal)

    records = []
    for it in range(1, protocol.total_outer_iterations + 1):
        t0 = time.perf_counter()
        agent.run_cycle(env, protocol, spec.augmenters, train_rng, learn=spec.learn)
        score, cumulative = evaluate(agent, eval_env, protocol, eval_protocol,
                                     eval_rng, fixed_goal=goal)
        elapsed = time.perf_counter() - t0
        records.append(MetricsRecord(
            run_id=run_id, seed=seed, system=system, iteration=it,
            score=score, cumulative_reward=cumulative,
            buffer_size=len(agent.buffer),
            wall_time_s=elapsed if record_timing else 0.0,
        ))
        if snapshot_dir is not None:
            _write_snapshot(snapshot_dir, system, seed, it, agent)
    return records


def _write_snapshot(snapshot_dir: Path, system: str, seed: int, iteration: int,
                    agent: CviAgent) -> None:
    """Persist the V model's training rows (s, g, value) for later inspection."""
    snapshot_dir = Path(snapshot_dir)
    snapshot_dir.mkdir(parents=True, exist_ok=True)
    path = snapshot_dir / f"{system.replace('+', '_')}-s{seed}-it{iteration:04d}.csv"
    v = agent.v_model
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        ds = v.dimension - 2 if v.size else 0
        writer.writerow([f"s{i}" for i in range(ds)] + ["g0", "g1", "v"])
        for row, t in zip(v.points, v.targets):
            writer.writerow([repr(float(x)) for x in row] + [repr(float(t))])


def aggregate(runs: list[list[MetricsRecord]], field: str = "score"):
    """Per-system, per-iteration mean and population std of one metric field.

    Runs of the same system must have equal length; returns rows
    (system, iteration, mean, std, n) ordered by first appearance.
    """
    by_system: dict[str, list[list[MetricsRecord]]] = {}
    for run in runs:
        if not run:
            raise ValueError("empty run")
        by_system.setdefault(run[0].system, []).append(run)
    rows = []
    for system, group in by_system.items():
        lengths = {len(r) for r in group}
        if len(lengths) != 1:
            raise ValueError(f"ragged runs for system {system}: lengths {sorted(lengths)}")
        iters = [rec.iteration for rec in group[0]]
        values = np.array([[getattr(rec, field) for rec in run] for run in group], dtype=float)
        mean = values.mean(axis=0)
        std = values.std(axis=0)  # population sigma
        for j, it in enumerate(iters):
            rows.append((system, it, float(mean[j]), float(std[j]), len(group)))
    return rows


METRICS_HEADER = ["run_id", "seed", "system", "iteration", "score",
                  "cumulative_reward", "buffer_size", "wall_time_s"]


def write_metrics_csv(path: Path, records: list[MetricsRecord]) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_HEADER)
        for r in records:
            writer.writerow([r.run_id, r.seed, r.system, r.iteration, repr(r.score),
                             r.cumulative_reward, r.buffer_size, repr(r.wall_time_s)])


def read_metrics_csv(path: Path) -> list[MetricsRecord]:
    records = []
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            records.append(MetricsRecord(
                run_id=row["run_id"], seed=int(row["seed"]), system=row["system"],
                iteration=int(row["iteration"]), score=float(row["score"]),
                cumulative_reward=int(row["cumulative_reward"]),
                buffer_size=int(row["buffer_size"]),
                wall_time_s=float(row["wall_time_s"]),
            ))
    return records


def write_summary_csv(path: Path, rows) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["system", "iteration", "mean", "std", "n"])
        for system, it, mean, std, n in rows:
            writer.writerow([system, it, repr(mean), repr(std), n])


def plot_curves(path: Path, rows, ylabel: str = "score", title: str = "") -> None:
    """Learning curves (mean line, +-sigma band) per system, written as SVG."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    by_system: dict[str, list[tuple[int, float, float]]] = {}
    for system, it, mean, std, _ in rows:
        by_system.setdefault(system, []).append((it, mean, std))
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for system, pts in by_system.items():
        pts.sort()
        x = np.array([p[0] for p in pts])
        mean = np.array([p[1] for p in pts])
        std = np.array([p[2] for p in pts])
        line, = ax.plot(x, mean, label=system, linewidth=1.6)
        ax.fill_between(x, mean - std, mean + std, alpha=0.2, color=line.get_color())
    ax.set_xlabel("training iteration")
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def set_worker_mode(parallel: bool) -> None:
    """Avoid thread oversubscription when several runs execute in parallel."""
    knn.set_query_workers(1 if parallel else -1)
