"""Declarative experiment configs: flat INI files with one section per block.

`parse_config` validates strictly (unknown keys are errors) and fills
environment-appropriate defaults; `render_config` writes the fully resolved
form back out, and parsing that output reproduces the identical config.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass
from pathlib import Path

from .agent import CviParams
from .bench import SYSTEMS, EvalProtocol, TrainingProtocol
from .envs import ArmEnv, ArmEnvConfig, PointEnv, PointEnvConfig

ENV_TYPES = ("point", "point_wall", "arm")


class ConfigError(ValueError):
    """Invalid experiment configuration (bad file, key, or value)."""


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    env_type: str
    point: PointEnvConfig | None
    arm: ArmEnvConfig | None
    fixed_goal: tuple[float, ...] | None
    params: CviParams
    protocol: TrainingProtocol
    eval_protocol: EvalProtocol
    systems: tuple[str, ...]
    runs: int
    base_seed: int
    output_dir: str
    buffer_capacity: int | None
    save_snapshots: bool
    record_timing: bool
    save_buffers: bool


def make_env(cfg: ExperimentConfig):
    if cfg.env_type == "arm":
        return ArmEnv(cfg.arm)
    return PointEnv(cfg.point)


_PROTOCOL_DEFAULTS = {
    # episode, trial, reset, iterations, eval_max, eval_trial, metric
    "point": (200, 30, True, 40, 2000, 30, "optimal_control_score"),
    "point_wall": (200, 30, True, 40, 2000, 30, "optimal_control_score"),
    "arm": (1000, 100, False, 20, 3000, 100, "cumulative_reward"),
}

_KNOWN_KEYS = {
    "environment": {
        "type", "d_max", "w", "wall", "fixed_goal", "link_lengths", "link_masses",
        "motor_torque_gain", "back_emf_gain", "viscous_friction", "coulomb_friction",
        "gravity", "voltage_limit", "control_dt", "physics_substeps", "joint_limit",
        "velocity_limit",
    },
    "agent": {
        "gamma", "beta", "epsilon", "k", "max_v_iters", "v_tolerance",
        "action_candidates", "bellman_q", "normalize_features",
    },
    "protocol": {
        "goal_mode", "episode_max_steps", "trial_max_steps", "reset_on_trial_end",
        "outer_iterations",
    },
    "evaluation": {"max_steps", "trial_max_steps", "metric"},
    "run": {
        "name", "systems", "runs", "base_seed", "output_dir", "buffer_capacity",
        "save_snapshots", "record_timing", "save_buffers",
    },
}


class _Section:
    def __init__(self, parser: configparser.ConfigParser, name: str):
        self.name = name
        self.data = dict(parser[name]) if parser.has_section(name) else {}
        known = _KNOWN_KEYS[name]
        for key in self.data:
            if key not in known:
                raise ConfigError(f"[{name}] unknown key {key!r}")

    def _value(self, key, default, convert):
        raw = self.data.get(key)
        if raw is None or raw == "":
            return default
        try:
            return convert(raw)
        except ConfigError:
            raise
        except Exception as exc:
            raise ConfigError(f"[{self.name}] bad value for {key!r}: {raw!r} ({exc})") from exc

    def get_float(self, key, default=None):
        return self._value(key, default, float)

    def get_int(self, key, default=None):
        return self._value(key, default, int)

    def get_bool(self, key, default=None):
        def conv(raw):
            low = raw.strip().lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ConfigError(f"[{self.name}] {key!r} must be a boolean, got {raw!r}")
        return self._value(key, default, conv)

    def get_str(self, key, default=None):
        return self._value(key, default, str)

    def get_floats(self, key, n, default=None):
        def conv(raw):
            parts = [float(p) for p in raw.replace(",", " ").split()]
            if len(parts) != n:
                raise ConfigError(f"[{self.name}] {key!r} needs {n} numbers, got {len(parts)}")
            return tuple(parts)
        return self._value(key, default, conv)


def parse_config(path: str | Path) -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        with path.open() as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    return _build(parser, default_name=path.stem)


def parse_config_text(text: str, default_name: str = "experiment") -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    return _build(parser, default_name=default_name)


def _build(parser: configparser.ConfigParser, default_name: str) -> ExperimentConfig:
    for section in parser.sections():
        if section not in _KNOWN_KEYS:
            raise ConfigError(f"unknown section [{section}]")
    env_sec = _Section(parser, "environment")
    env_type = env_sec.get_str("type", "point")
    if env_type not in ENV_TYPES:
        raise ConfigError(f"[environment] type must be one of {ENV_TYPES}, got {env_type!r}")

    point = arm = None
    if env_type == "arm":
        base = ArmEnvConfig()
        try:
            arm = ArmEnvConfig(
                link_lengths=env_sec.get_floats("link_lengths", 2, base.link_lengths),
                link_masses=env_sec.get_floats("link_masses", 2, base.link_masses),
                motor_torque_gain=env_sec.get_float("motor_torque_gain", base.motor_torque_gain),
                back_emf_gain=env_sec.get_float("back_emf_gain", base.back_emf_gain),
                viscous_friction=env_sec.get_float("viscous_friction", base.viscous_friction),
                coulomb_friction=env_sec.get_float("coulomb_friction", base.coulomb_friction),
                gravity=env_sec.get_float("gravity", base.gravity),
                voltage_limit=env_sec.get_float("voltage_limit", base.voltage_limit),
                control_dt=env_sec.get_float("control_dt", base.control_dt),
                physics_substeps=env_sec.get_int("physics_substeps", base.physics_substeps),
                w=env_sec.get_float("w", base.w),
                joint_limit=env_sec.get_float("joint_limit", base.joint_limit),
                velocity_limit=env_sec.get_float("velocity_limit", base.velocity_limit),
            )
        except ValueError as exc:
            raise ConfigError(f"[environment] {exc}") from exc
    else:
        wall = None
        if env_type == "point_wall":
            flat = env_sec.get_floats("wall", 4)
            if flat is None:
                raise ConfigError("[environment] point_wall requires a wall segment")
            wall = ((flat[0], flat[1]), (flat[2], flat[3]))
        elif env_sec.get_str("wall") is not None:
            raise ConfigError("[environment] wall requires type = point_wall")
        try:
            point = PointEnvConfig(
                d_max=env_sec.get_float("d_max", 0.2),
                w=env_sec.get_float("w", 0.2),
                wall=wall,
            )
        except ValueError as exc:
            raise ConfigError(f"[environment] {exc}") from exc
    fixed_goal = env_sec.get_floats("fixed_goal", 2)

    agent_sec = _Section(parser, "agent")
    try:
        params = CviParams(
            gamma=agent_sec.get_float("gamma", 0.99),
            beta=agent_sec.get_float("beta", 0.99),
            epsilon=agent_sec.get_float("epsilon", 0.2),
            k=agent_sec.get_int("k", 5),
            max_v_iters=agent_sec.get_int("max_v_iters", 100),
            v_tolerance=agent_sec.get_float("v_tolerance", 1e-3),
            n_action_candidates=agent_sec.get_int("action_candidates", 100),
            bellman_q=agent_sec.get_bool("bellman_q", False),
            normalize_features=agent_sec.get_bool("normalize_features", env_type == "arm"),
        )
    except ValueError as exc:
        raise ConfigError(f"[agent] {exc}") from exc

    d_ep, d_trial, d_reset, d_iters, d_eval, d_eval_trial, d_metric = _PROTOCOL_DEFAULTS[env_type]
    proto_sec = _Section(parser, "protocol")
    try:
        protocol = TrainingProtocol(
            goal_mode=proto_sec.get_str("goal_mode", "random_goal"),
            episode_max_steps=proto_sec.get_int("episode_max_steps", d_ep),
            trial_max_steps=proto_sec.get_int("trial_max_steps", d_trial),
            reset_agent_on_trial_end=proto_sec.get_bool("reset_on_trial_end", d_reset),
            total_outer_iterations=proto_sec.get_int("outer_iterations", d_iters),
        )
    except ValueError as exc:
        raise ConfigError(f"[protocol] {exc}") from exc

    eval_sec = _Section(parser, "evaluation")
    try:
        eval_protocol = EvalProtocol(
            eval_max_steps=eval_sec.get_int("max_steps", d_eval),
            trial_max_steps=eval_sec.get_int("trial_max_steps", d_eval_trial),
            metric=eval_sec.get_str("metric", d_metric),
        )
    except ValueError as exc:
        raise ConfigError(f"[evaluation] {exc}") from exc

    run_sec = _Section(parser, "run")
    systems_raw = run_sec.get_str("systems", "CVI")
    systems = tuple(s.strip() for s in systems_raw.split(",") if s.strip())
    for s in systems:
        if s not in SYSTEMS:
            raise ConfigError(f"[run] unknown system {s!r}; known: {', '.join(SYSTEMS)}")
    if not systems:
        raise ConfigError("[run] systems must list at least one system")
    runs = run_sec.get_int("runs", 1)
    if runs < 1:
        raise ConfigError("[run] runs must be >= 1")
    name = run_sec.get_str("name", default_name)
    cfg = ExperimentConfig(
        name=name,
        env_type=env_type,
        point=point,
        arm=arm,
        fixed_goal=fixed_goal,
        params=params,
        protocol=protocol,
        eval_protocol=eval_protocol,
        systems=systems,
        runs=runs,
        base_seed=run_sec.get_int("base_seed", 0),
        output_dir=run_sec.get_str("output_dir", f"out/{name}"),
        buffer_capacity=run_sec.get_int("buffer_capacity", None),
        save_snapshots=run_sec.get_bool("save_snapshots", False),
        record_timing=run_sec.get_bool("record_timing", False),
        save_buffers=run_sec.get_bool("save_buffers", False),
    )
    _check_feasibility(cfg)
    return cfg


def _check_feasibility(cfg: ExperimentConfig) -> None:
    if cfg.eval_protocol.metric == "optimal_control_score":
        if cfg.env_type == "arm":
            raise ConfigError("the arm has no optimal-steps oracle; "
                              "use metric = cumulative_reward")
        # Worst-case optimum must fit inside one trial.
        p = cfg.point
        diag = math.dist(p.bounds.lower, p.bounds.upper)
        worst = max(1, math.ceil((diag - p.w) / p.d_max))
        if worst >= cfg.eval_protocol.trial_max_steps:
            raise ConfigError(
                f"goals up to {worst} optimal steps away cannot be scored within "
                f"{cfg.eval_protocol.trial_max_steps}-step trials; increase d_max/w "
                "or trial_max_steps")


def render_config(cfg: ExperimentConfig) -> str:
    """Canonical INI text of a fully resolved config."""
    lines = ["[environment]", f"type = {cfg.env_type}"]
    if cfg.env_type == "arm":
        a = cfg.arm
        lines += [
            f"link_lengths = {a.link_lengths[0]!r} {a.link_lengths[1]!r}",
            f"link_masses = {a.link_masses[0]!r} {a.link_masses[1]!r}",
            f"motor_torque_gain = {a.motor_torque_gain!r}",
            f"back_emf_gain = {a.back_emf_gain!r}",
            f"viscous_friction = {a.viscous_friction!r}",
            f"coulomb_friction = {a.coulomb_friction!r}",
            f"gravity = {a.gravity!r}",
            f"voltage_limit = {a.voltage_limit!r}",
            f"control_dt = {a.control_dt!r}",
            f"physics_substeps = {a.physics_substeps}",
            f"w = {a.w!r}",
            f"joint_limit = {a.joint_limit!r}",
            f"velocity_limit = {a.velocity_limit!r}",
        ]
    else:
        p = cfg.point
        lines += [f"d_max = {p.d_max!r}", f"w = {p.w!r}"]
        if p.wall is not None:
            (x1, y1), (x2, y2) = p.wall
            lines.append(f"wall = {x1!r} {y1!r} {x2!r} {y2!r}")
    if cfg.fixed_goal is not None:
        lines.append(f"fixed_goal = {cfg.fixed_goal[0]!r} {cfg.fixed_goal[1]!r}")
    pr = cfg.params
    lines += [
        "",
        "[agent]",
        f"gamma = {pr.gamma!r}",
        f"beta = {pr.beta!r}",
        f"epsilon = {pr.epsilon!r}",
        f"k = {pr.k}",
        f"max_v_iters = {pr.max_v_iters}",
        f"v_tolerance = {pr.v_tolerance!r}",
        f"action_candidates = {pr.n_action_candidates}",
        f"bellman_q = {str(pr.bellman_q).lower()}",
        f"normalize_features = {str(pr.normalize_features).lower()}",
    ]
    t = cfg.protocol
    lines += [
        "",
        "[protocol]",
        f"goal_mode = {t.goal_mode}",
        f"episode_max_steps = {t.episode_max_steps}",
        f"trial_max_steps = {t.trial_max_steps}",
        f"reset_on_trial_end = {str(t.reset_agent_on_trial_end).lower()}",
        f"outer_iterations = {t.total_outer_iterations}",
    ]
    e = cfg.eval_protocol
    lines += [
        "",
        "[evaluation]",
        f"max_steps = {e.eval_max_steps}",
        f"trial_max_steps = {e.trial_max_steps}",
        f"metric = {e.metric}",
    ]
    lines += [
        "",
        "[run]",
        f"name = {cfg.name}",
        f"systems = {', '.join(cfg.systems)}",
        f"runs = {cfg.runs}",
        f"base_seed = {cfg.base_seed}",
        f"output_dir = {cfg.output_dir}",
        f"buffer_capacity = {'' if cfg.buffer_capacity is None else cfg.buffer_capacity}",
        f"save_snapshots = {str(cfg.save_snapshots).lower()}",
        f"record_timing = {str(cfg.record_timing).lower()}",
        f"save_buffers = {str(cfg.save_buffers).lower()}",
        "",
    ]
    return "\n".join(lines)
