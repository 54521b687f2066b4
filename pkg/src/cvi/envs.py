"""Benchmark environments: a bounded 2-D point mover (with optional wall
obstacle) and a planar two-link voltage-controlled arm simulated with
semi-implicit Euler dynamics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .core import Environment, SpaceSpec, Vec, as_vec, goal_reward


class IntegrationDivergedError(RuntimeError):
    """Arm integration produced a non-finite state."""


# ---------------------------------------------------------------------------
# Point environment
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PointEnvConfig:
    d_max: float = 0.2          # max per-step displacement norm
    w: float = 0.2              # goal margin
    low: tuple[float, float] = (0.0, 0.0)
    high: tuple[float, float] = (1.0, 1.0)
    wall: tuple[tuple[float, float], tuple[float, float]] | None = None

    def __post_init__(self):
        if self.d_max <= 0 or self.w <= 0:
            raise ValueError("d_max and w must be positive")
        if self.wall is not None:
            lo, hi = np.asarray(self.low), np.asarray(self.high)
            for p in self.wall:
                if np.any(np.asarray(p) < lo) or np.any(np.asarray(p) > hi):
                    raise ValueError("wall endpoints must lie within bounds")

    @property
    def bounds(self) -> SpaceSpec:
        return SpaceSpec(np.asarray(self.low), np.asarray(self.high))


def clip_norm(a: Vec, d_max: float) -> Vec:
    a = np.asarray(a, dtype=np.float64)
    n = float(np.linalg.norm(a))
    if n > d_max:
        return a * (d_max / n)
    return a


def _orient(p, q, r) -> float:
    return (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])


def _on_segment(p, q, r) -> bool:
    return (
        min(p[0], q[0]) <= r[0] <= max(p[0], q[0])
        and min(p[1], q[1]) <= r[1] <= max(p[1], q[1])
    )


def segments_intersect(p1, p2, q1, q2) -> bool:
    """Closed-segment intersection test (touching counts)."""
    o1, o2 = _orient(p1, p2, q1), _orient(p1, p2, q2)
    o3, o4 = _orient(q1, q2, p1), _orient(q1, q2, p2)
    if ((o1 > 0) != (o2 > 0) and o1 != 0 and o2 != 0) and (
        (o3 > 0) != (o4 > 0) and o3 != 0 and o4 != 0
    ):
        return True
    if o1 == 0 and _on_segment(p1, p2, q1):
        return True
    if o2 == 0 and _on_segment(p1, p2, q2):
        return True
    if o3 == 0 and _on_segment(q1, q2, p1):
        return True
    if o4 == 0 and _on_segment(q1, q2, p2):
        return True
    return False


def point_step(s: Vec, a: Vec, cfg: PointEnvConfig) -> Vec:
    """Deterministic point dynamics: norm-clipped displacement, boundary clamp,
    movement voided entirely if the path would cross the wall."""
    s = np.asarray(s, dtype=np.float64)
    nxt = cfg.bounds.clip(s + clip_norm(a, cfg.d_max))
    if cfg.wall is not None and segments_intersect(s, nxt, cfg.wall[0], cfg.wall[1]):
        return s.copy()
    return nxt


def point_optimal_steps(s: Vec, g: Vec, cfg: PointEnvConfig) -> int:
    """Fewest steps to reward moving straight at the goal (open plane only)."""
    if cfg.wall is not None:
        raise NotImplementedError("analytic optimum undefined with a wall; use PointEnv.optimal_steps")
    dist = float(np.linalg.norm(np.asarray(s, dtype=np.float64) - np.asarray(g, dtype=np.float64)))
    if dist < cfg.w:
        return 0
    return max(1, math.ceil((dist - cfg.w) / cfg.d_max))


def point_analytic_value(s: Vec, g: Vec, gamma: float, cfg: PointEnvConfig) -> float:
    """Discounted return of the straight-line optimal policy under the binary
    reward paid on entering the goal region."""
    opt = point_optimal_steps(s, g, cfg)
    return gamma ** max(opt - 1, 0)


class PointEnv(Environment):
    """Point mover on a box; goal space equals state space (identity projection)."""

    def __init__(self, cfg: PointEnvConfig | None = None):
        self.cfg = cfg or PointEnvConfig()
        self.state_space = self.cfg.bounds
        self.goal_space = self.cfg.bounds
        self.action_space = SpaceSpec(
            -self.cfg.d_max * np.ones(2), self.cfg.d_max * np.ones(2)
        )
        self.w = self.cfg.w
        self.current_state = np.zeros(2)
        self.current_goal = np.zeros(2)

    def reset(self, rng, *, state=None, goal=None) -> Vec:
        self.current_state = (
            self.sample_state(rng) if state is None else as_vec(state, 2)
        )
        if goal is not None:
            self.current_goal = as_vec(goal, 2)
        return self.current_state.copy()

    def step(self, action: Vec) -> tuple[Vec, float]:
        nxt = point_step(self.current_state, action, self.cfg)
        r = goal_reward(nxt, self.current_goal, self.w)
        self.current_state = nxt
        return nxt.copy(), r

    def achieved_goal(self, state: Vec) -> Vec:
        return np.asarray(state, dtype=np.float64)

    def achieved_goals(self, states: np.ndarray) -> np.ndarray:
        return np.atleast_2d(np.asarray(states, dtype=np.float64))

    def optimal_steps(self, s: Vec, g: Vec) -> int:
        if self.cfg.wall is None:
            return point_optimal_steps(s, g, self.cfg)
        return self._routed_steps(s, g)

    def _routed_steps(self, s: Vec, g: Vec) -> int:
        """Simulation fallback for the wall variant: follow the shorter unblocked
        corner route and count steps until reward."""
        cfg = self.cfg
        e1 = np.asarray(cfg.wall[0], dtype=np.float64)
        e2 = np.asarray(cfg.wall[1], dtype=np.float64)
        u = e1 - e2
        nu = np.linalg.norm(u)
        eps = 1e-6 if nu == 0 else 1e-6 / nu
        corners = [cfg.bounds.clip(e1 + eps * u * nu), cfg.bounds.clip(e2 - eps * u * nu)]

        def blocked(p, q):
            return segments_intersect(p, q, cfg.wall[0], cfg.wall[1])

        pos = np.asarray(s, dtype=np.float64)
        g = np.asarray(g, dtype=np.float64)
        if float(np.linalg.norm(pos - g)) < cfg.w:
            return 0
        feasible = [
            c for c in corners if not blocked(pos, c) and not blocked(c, g)
        ]
        feasible.sort(key=lambda c: float(np.linalg.norm(pos - c) + np.linalg.norm(c - g)))
        steps = 0
        limit = int(20 * (np.linalg.norm(cfg.bounds.upper - cfg.bounds.lower) / cfg.d_max)) + 20
        while steps < limit:
            if not blocked(pos, g):
                target = g
            elif feasible:
                target = feasible[0]
            else:
                raise NotImplementedError("no unblocked route around the wall")
            nxt = point_step(pos, target - pos, cfg)
            steps += 1
            if float(np.linalg.norm(nxt - g)) < cfg.w:
                return steps
            pos = nxt
        raise NotImplementedError("route simulation did not reach the goal")


# ---------------------------------------------------------------------------
# Two-link arm
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ArmEnvConfig:
    """Planar two-link arm, joint angles measured from the +x axis of a frame
    fixed to the mount, gravity along -y. Constants are plausible for small
    geared servos; they are not calibrated to any particular hardware."""

    link_lengths: tuple[float, float] = (0.1, 0.1)       # m
    link_masses: tuple[float, float] = (0.15, 0.15)      # kg
    motor_torque_gain: float = 0.35                      # N*m per volt
    back_emf_gain: float = 0.8                           # N*m*s/rad
    viscous_friction: float = 0.01                       # N*m*s/rad
    coulomb_friction: float = 0.02                       # N*m
    gravity: float = 9.81                                # m/s^2
    voltage_limit: float = 12.0                          # V
    control_dt: float = 0.2                              # s (5 control steps/s)
    physics_substeps: int = 100
    w: float = 0.015                                     # goal margin, m
    joint_limit: float = math.pi                         # rad, symmetric
    velocity_limit: float = 8.0                          # rad/s, symmetric

    def __post_init__(self):
        positive = (
            *self.link_lengths, *self.link_masses, self.motor_torque_gain,
            self.voltage_limit, self.control_dt, self.w, self.joint_limit,
            self.velocity_limit,
        )
        if any(v <= 0 for v in positive):
            raise ValueError("geometry, gains and protocol constants must be positive")
        if min(self.back_emf_gain, self.viscous_friction, self.coulomb_friction,
               self.gravity) < 0:
            raise ValueError("dissipation and gravity terms must be non-negative")
        if self.physics_substeps < 1 or self.control_dt / self.physics_substeps > 2e-3 + 1e-12:
            raise ValueError("physics substep must be at most 2 ms")

    @property
    def reach(self) -> float:
        return self.link_lengths[0] + self.link_lengths[1]


@lru_cache(maxsize=32)
def _derived(cfg: ArmEnvConfig):
    l1, l2 = cfg.link_lengths
    m1, m2 = cfg.link_masses
    c1, c2 = l1 / 2.0, l2 / 2.0  # rod centers of mass
    i1, i2 = m1 * l1 * l1 / 12.0, m2 * l2 * l2 / 12.0
    return {
        "a1": i1 + i2 + m1 * c1 * c1 + m2 * (l1 * l1 + c2 * c2),  # M11 = a1 + 2*b*cos q2
        "b": m2 * l1 * c2,
        "m22": i2 + m2 * c2 * c2,
        "g1a": (m1 * c1 + m2 * l1) * cfg.gravity,
        "g2a": m2 * c2 * cfg.gravity,
        "damping": cfg.back_emf_gain + cfg.viscous_friction,
        "dt": cfg.control_dt / cfg.physics_substeps,
    }


_COULOMB_V_EPS = 1e-3  # rad/s; sign(v) regularized below this speed


def _substep(q1, q2, w1, w2, t1, t2, cfg: ArmEnvConfig, k) -> tuple:
    """One semi-implicit Euler substep.

    All velocity-proportional resistance (back-emf, viscous friction, and the
    regularized Coulomb term mu*w/max(|w|, eps)) is folded into the implicit
    side of the velocity solve, so the update is a contraction regardless of
    how stiff the gearing makes those terms, and dissipation can never flip a
    joint's velocity sign. Joint limits act as inelastic stops: a joint
    arriving at a limit transfers momentum to the other joint through the
    inertia coupling and keeps zero velocity while pressed against the stop,
    which only ever removes kinetic energy.
    """
    dt = k["dt"]
    jl = cfg.joint_limit
    cos2, sin2 = math.cos(q2), math.sin(q2)
    b = k["b"]
    m11 = k["a1"] + 2.0 * b * cos2
    m12 = k["m22"] + b * cos2
    m22 = k["m22"]
    h = b * sin2
    c1 = -h * w2 * (2.0 * w1 + w2)
    c2 = h * w1 * w1
    cos1 = math.cos(q1)
    cos12 = math.cos(q1 + q2)
    g1 = k["g1a"] * cos1 + k["g2a"] * cos12
    g2 = k["g2a"] * cos12
    mu = cfg.coulomb_friction
    d1 = dt * (k["damping"] + mu / (abs(w1) if abs(w1) > _COULOMB_V_EPS else _COULOMB_V_EPS))
    d2 = dt * (k["damping"] + mu / (abs(w2) if abs(w2) > _COULOMB_V_EPS else _COULOMB_V_EPS))
    r1 = m11 * w1 + m12 * w2 + dt * (t1 - c1 - g1)
    r2 = m12 * w1 + m22 * w2 + dt * (t2 - c2 - g2)

    at1 = q1 >= jl or q1 <= -jl
    at2 = q2 >= jl or q2 <= -jl
    # Unconstrained implicit solve: (M + dt*D) w' = M w + dt*(tau - C - G).
    a11, a22 = m11 + d1, m22 + d2
    det = a11 * a22 - m12 * m12
    w1n = (a22 * r1 - m12 * r2) / det
    w2n = (a11 * r2 - m12 * r1) / det
    # A joint resting on a stop stays pinned unless the solution pulls it away.
    pin1 = at1 and (w1n > 0.0) == (q1 > 0.0)
    pin2 = at2 and (w2n > 0.0) == (q2 > 0.0)
    if pin1 and pin2:
        w1n = w2n = 0.0
    elif pin1:
        w1n = 0.0
        w2n = r2 / a22
        if at2 and (w2n > 0.0) == (q2 > 0.0):
            w2n = 0.0
    elif pin2:
        w2n = 0.0
        w1n = r1 / a11
        if at1 and (w1n > 0.0) == (q1 > 0.0):
            w1n = 0.0

    stop1 = pin1
    q1n = q1 if pin1 else q1 + dt * w1n
    if not pin1 and (q1n > jl or q1n < -jl):
        q1n = jl if q1n > jl else -jl
        w2n += (m12 / m22) * w1n  # inelastic stop: momentum moves across the coupling
        w1n = 0.0
        stop1 = True
    q2n = q2 if pin2 else q2 + dt * w2n
    if not pin2 and (q2n > jl or q2n < -jl):
        q2n = jl if q2n > jl else -jl
        if not stop1:
            w1n += (m12 / m11) * w2n
        w2n = 0.0

    # Speed limiter: uniform scaling keeps the kinetic form non-increasing.
    vl = cfg.velocity_limit
    peak = max(abs(w1n), abs(w2n))
    if peak > vl:
        s = vl / peak
        w1n *= s
        w2n *= s
    return q1n, q2n, w1n, w2n


def arm_step(s: Vec, a: Vec, cfg: ArmEnvConfig) -> Vec:
    """Integrate one control period (voltage held over all substeps)."""
    k = _derived(cfg)
    vl = cfg.voltage_limit
    v1 = max(-vl, min(vl, float(a[0])))
    v2 = max(-vl, min(vl, float(a[1])))
    q1, q2, w1, w2 = (float(s[0]), float(s[1]), float(s[2]), float(s[3]))
    if not (math.isfinite(q1) and math.isfinite(q2) and math.isfinite(w1)
            and math.isfinite(w2)):
        raise IntegrationDivergedError(f"non-finite arm state: {s}")
    gain = cfg.motor_torque_gain
    t1, t2 = gain * v1, gain * v2
    for _ in range(cfg.physics_substeps):
        q1, q2, w1, w2 = _substep(q1, q2, w1, w2, t1, t2, cfg, k)
    out = np.array([q1, q2, w1, w2])
    if not np.all(np.isfinite(out)):
        raise IntegrationDivergedError(f"non-finite arm state: {out}")
    return out


def arm_achieved_goal(s: Vec, cfg: ArmEnvConfig) -> Vec:
    """Forward kinematics of the end effector in the mount-fixed frame."""
    l1, l2 = cfg.link_lengths
    q1, q12 = float(s[0]), float(s[0]) + float(s[1])
    return np.array([l1 * math.cos(q1) + l2 * math.cos(q12),
                     l1 * math.sin(q1) + l2 * math.sin(q12)])


def arm_forward_kinematics_batch(states: np.ndarray, cfg: ArmEnvConfig) -> np.ndarray:
    l1, l2 = cfg.link_lengths
    states = np.atleast_2d(states)
    q1 = states[:, 0]
    q12 = q1 + states[:, 1]
    return np.stack([l1 * np.cos(q1) + l2 * np.cos(q12),
                     l1 * np.sin(q1) + l2 * np.sin(q12)], axis=1)


def _annulus_bounds(cfg: ArmEnvConfig) -> tuple[float, float, bool]:
    """Radial goal band [r_in, r_out]; the flag marks a (near-)degenerate band
    that collapses to a circle. The inner radius pads the unreachable core by
    the goal margin when that leaves any band at all."""
    r_out = cfg.reach
    core = abs(cfg.link_lengths[0] - cfg.link_lengths[1])
    r_in = core + cfg.w
    if r_in >= r_out:
        r_in = core
    degenerate = (r_out - r_in) <= 1e-6 * r_out
    return r_in, r_out, degenerate


def arm_sample_goal(cfg: ArmEnvConfig, rng: np.random.Generator) -> Vec:
    """Uniform point in the reachable annulus (rejection sampling); collapses
    to the reachable circle when the link geometry leaves no band."""
    r_in, r_out, degenerate = _annulus_bounds(cfg)
    if degenerate:
        theta = rng.uniform(-math.pi, math.pi)
        r = 0.5 * (r_in + r_out)
        return np.array([r * math.cos(theta), r * math.sin(theta)])
    while True:
        p = rng.uniform(-r_out, r_out, size=2)
        d = float(np.linalg.norm(p))
        if r_in <= d <= r_out:
            return p


def arm_inverse_kinematics(p: Vec, cfg: ArmEnvConfig) -> tuple[float, float] | None:
    """One (elbow-down) joint solution reaching p, or None if out of reach."""
    l1, l2 = cfg.link_lengths
    x, y = float(p[0]), float(p[1])
    d2 = x * x + y * y
    cos_q2 = (d2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)
    if not -1.0 <= cos_q2 <= 1.0:
        return None
    q2 = math.acos(cos_q2)
    q1 = math.atan2(y, x) - math.atan2(l2 * math.sin(q2), l1 + l2 * math.cos(q2))
    return q1, q2


def mechanical_energy(s: Vec, cfg: ArmEnvConfig) -> float:
    """Kinetic plus gravitational potential energy of the two links."""
    k = _derived(cfg)
    q1, q2, w1, w2 = (float(s[0]), float(s[1]), float(s[2]), float(s[3]))
    cos2 = math.cos(q2)
    b = k["b"]
    m11 = k["a1"] + 2.0 * b * cos2
    m12 = k["m22"] + b * cos2
    ke = 0.5 * (m11 * w1 * w1 + 2.0 * m12 * w1 * w2 + k["m22"] * w2 * w2)
    pe = k["g1a"] * math.sin(q1) + k["g2a"] * math.sin(q1 + q2)
    return ke + pe


class ArmEnv(Environment):
    """Voltage-controlled planar arm; Cartesian goal space via forward
    kinematics, which only the reward function observes."""

    def __init__(self, cfg: ArmEnvConfig | None = None):
        self.cfg = cfg or ArmEnvConfig()
        jl, vl = self.cfg.joint_limit, self.cfg.velocity_limit
        self.state_space = SpaceSpec(
            np.array([-jl, -jl, -vl, -vl]), np.array([jl, jl, vl, vl])
        )
        va = self.cfg.voltage_limit
        self.action_space = SpaceSpec(np.array([-va, -va]), np.array([va, va]))
        r = self.cfg.reach
        self.goal_space = SpaceSpec(np.array([-r, -r]), np.array([r, r]))
        self.w = self.cfg.w
        self.current_state = np.zeros(4)
        self.current_goal = np.array([r, 0.0])

    def reset(self, rng, *, state=None, goal=None) -> Vec:
        if state is not None:
            self.current_state = as_vec(state, 4)
        else:
            self.current_state = self.sample_state(rng)
        if goal is not None:
            self.current_goal = as_vec(goal, 2)
        return self.current_state.copy()

    def sample_state(self, rng) -> Vec:
        """Random rest pose: uniform joint angles, zero velocity."""
        jl = self.cfg.joint_limit
        q = rng.uniform(-jl, jl, size=2)
        return np.array([q[0], q[1], 0.0, 0.0])

    def sample_goal(self, rng) -> Vec:
        return arm_sample_goal(self.cfg, rng)

    def sample_goals(self, rng, n: int) -> np.ndarray:
        """Vectorized rejection sampling over the reachable annulus."""
        r_in, r_out, degenerate = _annulus_bounds(self.cfg)
        if degenerate:
            theta = rng.uniform(-math.pi, math.pi, size=n)
            r = 0.5 * (r_in + r_out)
            return np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)
        out = np.empty((n, 2))
        have = 0
        while have < n:
            cand = rng.uniform(-r_out, r_out, size=(max(64, 2 * (n - have)), 2))
            d = np.linalg.norm(cand, axis=1)
            keep = cand[(d >= r_in) & (d <= r_out)][: n - have]
            out[have : have + len(keep)] = keep
            have += len(keep)
        return out

    def step(self, action: Vec) -> tuple[Vec, float]:
        nxt = arm_step(self.current_state, action, self.cfg)
        r = goal_reward(nxt, self.current_goal, self.w,
                        achieved=arm_achieved_goal(nxt, self.cfg))
        self.current_state = nxt
        return nxt.copy(), r

    def achieved_goal(self, state: Vec) -> Vec:
        return arm_achieved_goal(state, self.cfg)

    def achieved_goals(self, states: np.ndarray) -> np.ndarray:
        return arm_forward_kinematics_batch(states, self.cfg)
