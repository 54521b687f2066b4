"""Command-line entry point: `run` executes a config's benchmark matrix,
`inspect-value` renders a saved value landscape against the analytic one, and
`her-count` reports the hindsight-equivalent sample count of a saved buffer.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import bench, io
from .bench import MetricsRecord, run_training
from .config import ConfigError, ExperimentConfig, make_env, parse_config, render_config
from .envs import PointEnvConfig, point_analytic_value


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    changes = {}
    env_dir = os.environ.get("OUTPUT_DIR")
    if env_dir:
        changes["output_dir"] = env_dir
    if getattr(args, "seed", None) is not None:
        changes["base_seed"] = args.seed
    return dataclasses.replace(cfg, **changes) if changes else cfg


def _run_one(cfg: ExperimentConfig, system: str, seed: int, parallel: bool,
             snapshot_dir: str | None) -> list[MetricsRecord]:
    bench.set_worker_mode(parallel)
    return run_training(
        system, cfg.params, lambda: make_env(cfg), cfg.protocol, cfg.eval_protocol,
        seed, fixed_goal=cfg.fixed_goal, buffer_capacity=cfg.buffer_capacity,
        record_timing=cfg.record_timing,
        snapshot_dir=Path(snapshot_dir) if snapshot_dir else None,
    )


def run_experiment(cfg: ExperimentConfig, jobs: int = 1) -> list[MetricsRecord]:
    """Execute all (system, seed) runs and write metrics.csv, summary.csv,
    curves.svg and resolved.cfg into the output directory."""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "resolved.cfg").write_text(render_config(cfg))
    snapshot_dir = str(out / "snapshots") if cfg.save_snapshots else None

    tasks = [(system, cfg.base_seed + i) for system in cfg.systems for i in range(cfg.runs)]
    parallel = jobs > 1 and len(tasks) > 1
    runs: dict[tuple[str, int], list[MetricsRecord]] = {}
    if parallel:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = {
                (system, seed): pool.submit(_run_one, cfg, system, seed, True, snapshot_dir)
                for system, seed in tasks
            }
            for key, fut in futures.items():
                runs[key] = fut.result()
    else:
        bench.set_worker_mode(False)
        for system, seed in tasks:
            runs[(system, seed)] = _run_one(cfg, system, seed, False, snapshot_dir)

    ordered = [runs[key] for key in tasks]
    records = [rec for run in ordered for rec in run]
    bench.write_metrics_csv(out / "metrics.csv", records)
    field = "score" if cfg.eval_protocol.metric == bench.SCORE_METRIC else "cumulative_reward"
    summary = bench.aggregate(ordered, field=field)
    bench.write_summary_csv(out / "summary.csv", summary)
    bench.plot_curves(out / "curves.svg", summary, ylabel=field, title=cfg.name)

    if cfg.save_buffers:
        _save_final_buffers(cfg, out)
    return records


def _save_final_buffers(cfg: ExperimentConfig, out: Path) -> None:
    # Buffers are not retained by run_training; re-run the first seed of each
    # system without evaluations to materialize its final buffer.
    from .agent import CviAgent

    buf_dir = out / "buffers"
    buf_dir.mkdir(exist_ok=True)
    for system in cfg.systems:
        spec = bench.SYSTEMS[system]
        seed = cfg.base_seed
        params = cfg.params if spec.learn else dataclasses.replace(cfg.params, epsilon=1.0)
        ss = np.random.SeedSequence(seed)
        train_key, _, goal_key = ss.spawn(3)
        rng = np.random.default_rng(train_key)
        env = make_env(cfg)
        agent = CviAgent(env, params, cfg.buffer_capacity)
        goal = None
        if cfg.protocol.goal_mode == bench.ONE_GOAL:
            goal = (np.asarray(cfg.fixed_goal, dtype=np.float64)
                    if cfg.fixed_goal is not None
                    else env.sample_goal(np.random.default_rng(goal_key)))
        env.reset(rng, goal=goal)
        for _ in range(cfg.protocol.total_outer_iterations):
            agent.run_cycle(env, cfg.protocol, spec.augmenters, rng, learn=spec.learn)
        io.save_buffer_csv(agent.buffer, buf_dir / f"{system.replace('+', '_')}-s{seed}.csv")


def cmd_run(args) -> int:
    cfg = _apply_overrides(parse_config(args.config), args)
    if args.dry_run:
        print(render_config(cfg), end="")
        return 0
    run_experiment(cfg, jobs=args.jobs)
    print(f"wrote {Path(cfg.output_dir) / 'metrics.csv'}")
    return 0


def cmd_inspect_value(args) -> int:
    cfg = _apply_overrides(parse_config(args.config), args)
    out = Path(cfg.output_dir)
    system = args.system or cfg.systems[0]
    seed = args.seed if args.seed is not None else cfg.base_seed
    snap = out / "snapshots" / f"{system.replace('+', '_')}-s{seed}-it{args.iteration:04d}.csv"
    if not snap.exists():
        print(f"snapshot not found: {snap} (run with save_snapshots = true first)",
              file=sys.stderr)
        return 1
    model, goal = io.load_snapshot_csv(snap, cfg.params.k)
    if args.goal is not None:
        goal = np.asarray(args.goal, dtype=np.float64)

    n = args.grid
    env_cfg = cfg.point if cfg.point is not None else PointEnvConfig()
    lo, hi = env_cfg.bounds.lower, env_cfg.bounds.upper
    xs = np.linspace(lo[0], hi[0], n)
    ys = np.linspace(lo[1], hi[1], n)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    states = np.stack([gx.ravel(), gy.ravel()], axis=1)
    feats = np.concatenate([states, np.broadcast_to(goal, states.shape)], axis=1)
    predicted = model.predict_batch(feats).reshape(n, n)

    inspect_dir = out / "inspect"
    inspect_dir.mkdir(parents=True, exist_ok=True)
    stem = f"{system.replace('+', '_')}-s{seed}-it{args.iteration:04d}"
    np.savetxt(inspect_dir / f"{stem}-predicted.csv", predicted, delimiter=",", fmt="%.17g")

    analytic = None
    spearman = None
    if cfg.env_type == "point":
        analytic = np.array([
            point_analytic_value(s, goal, cfg.params.gamma, env_cfg) for s in states
        ]).reshape(n, n)
        np.savetxt(inspect_dir / f"{stem}-analytic.csv", analytic, delimiter=",", fmt="%.17g")
        if np.ptp(predicted) > 0 and np.ptp(analytic) > 0:
            from scipy.stats import spearmanr
            spearman = float(spearmanr(predicted.ravel(), analytic.ravel()).statistic)

    _landscape_svg(inspect_dir / f"{stem}.svg", predicted, analytic, goal)
    meta = {
        "system": system, "seed": seed, "iteration": args.iteration,
        "grid": n, "goal": [float(g) for g in goal],
        "spearman_rank_correlation": spearman,
    }
    (inspect_dir / f"{stem}.json").write_text(json.dumps(meta, indent=2) + "\n")
    print(json.dumps(meta))
    return 0


def _landscape_svg(path: Path, predicted, analytic, goal) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    panels = [("predicted V", predicted)]
    if analytic is not None:
        panels.append(("analytic V*", analytic))
    fig, axes = plt.subplots(1, len(panels), figsize=(5.2 * len(panels), 4.4))
    axes = np.atleast_1d(axes)
    for ax, (name, grid) in zip(axes, panels):
        im = ax.imshow(grid.T, origin="lower", extent=(0, 1, 0, 1), vmin=0.0,
                       vmax=max(1.0, float(grid.max())), cmap="viridis")
        ax.plot([goal[0]], [goal[1]], "r*", markersize=10)
        ax.set_title(name)
        fig.colorbar(im, ax=ax, shrink=0.85)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def cmd_her_count(args) -> int:
    buffer = io.load_buffer_csv(args.buffer)
    from .augment import her_equivalent_count

    print(her_equivalent_count(buffer))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cvi", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a benchmark config")
    p_run.add_argument("config")
    p_run.add_argument("--jobs", type=int, default=1, help="parallel run workers")
    p_run.add_argument("--seed", type=int, default=None, help="override base_seed")
    p_run.add_argument("--dry-run", action="store_true",
                       help="validate and print the resolved config")
    p_run.set_defaults(func=cmd_run)

    p_ins = sub.add_parser("inspect-value", help="render a saved value landscape")
    p_ins.add_argument("config")
    p_ins.add_argument("--iteration", type=int, required=True)
    p_ins.add_argument("--grid", type=int, default=21)
    p_ins.add_argument("--system", default=None)
    p_ins.add_argument("--seed", type=int, default=None)
    p_ins.add_argument("--goal", type=float, nargs=2, default=None)
    p_ins.set_defaults(func=cmd_inspect_value)

    p_her = sub.add_parser("her-count", help="hindsight-equivalent count of a saved buffer")
    p_her.add_argument("buffer")
    p_her.set_defaults(func=cmd_her_count)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
