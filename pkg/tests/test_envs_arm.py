import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cvi.envs import (ArmEnv, ArmEnvConfig, IntegrationDivergedError,
                      arm_achieved_goal, arm_forward_kinematics_batch,
                      arm_inverse_kinematics, arm_sample_goal, arm_step,
                      mechanical_energy)

CFG = ArmEnvConfig()
HANGING = np.array([-math.pi / 2, 0.0, 0.0, 0.0])


class TestForwardKinematics:
    def test_straight_arm(self):
        assert np.allclose(arm_achieved_goal(np.zeros(4), CFG), [0.2, 0.0])

    def test_rotated_up(self):
        p = arm_achieved_goal(np.array([math.pi / 2, 0, 0, 0]), CFG)
        assert np.allclose(p, [0.0, 0.2], atol=1e-15)

    def test_elbow_bend(self):
        p = arm_achieved_goal(np.array([math.pi / 2, -math.pi / 2, 0, 0]), CFG)
        assert np.allclose(p, [0.1, 0.1], atol=1e-15)

    @given(st.floats(-math.pi, math.pi), st.floats(-math.pi, math.pi))
    def test_reach_bound(self, q1, q2):
        p = arm_achieved_goal(np.array([q1, q2, 0, 0]), CFG)
        assert np.linalg.norm(p) <= CFG.reach + 1e-12

    def test_batch_matches_scalar(self):
        rng = np.random.default_rng(0)
        states = rng.uniform(-math.pi, math.pi, size=(40, 4))
        batch = arm_forward_kinematics_batch(states, CFG)
        singles = np.stack([arm_achieved_goal(s, CFG) for s in states])
        assert np.allclose(batch, singles, atol=0)


class TestDynamics:
    def test_hanging_rest_is_equilibrium(self):
        s = HANGING.copy()
        for _ in range(10):
            s = arm_step(s, np.zeros(2), CFG)
        assert np.allclose(s, HANGING, atol=1e-12)

    def test_falls_from_horizontal(self):
        s = np.array([0.0, 0.0, 0.0, 0.0])
        for _ in range(3):
            s = arm_step(s, np.zeros(2), CFG)
        assert s[2] < 0 and s[3] < 0  # both joints head toward hanging

    def test_constant_torque_linear_velocity_growth(self):
        # Decoupled construction: gravity/friction off, straight arm, torques in
        # the ratio that keeps joint 2 still, so joint 1 sees a constant
        # effective inertia and its velocity grows by the same amount each step.
        cfg = ArmEnvConfig(gravity=0.0, viscous_friction=0.0, coulomb_friction=0.0,
                           back_emf_gain=0.0, physics_substeps=1, control_dt=0.002,
                           velocity_limit=1e6, joint_limit=1e6)
        from cvi.envs import _derived
        k = _derived(cfg)
        m11 = k["a1"] + 2 * k["b"]
        m12 = k["m22"] + k["b"]
        v1 = 1.0
        v2 = v1 * m12 / m11
        s = np.zeros(4)
        increments = []
        for _ in range(50):
            nxt = arm_step(s, np.array([v1, v2]) / cfg.motor_torque_gain, cfg)
            increments.append(nxt[2] - s[2])
            assert abs(nxt[3]) < 1e-12  # joint 2 never moves
            s = nxt
        assert np.allclose(increments, increments[0], rtol=1e-9)

    def test_determinism(self):
        rng = np.random.default_rng(2)
        s0 = rng.uniform(-1, 1, 4)
        a = rng.uniform(-12, 12, 2)
        assert np.array_equal(arm_step(s0, a, CFG), arm_step(s0, a, CFG))

    def test_voltage_clipped(self):
        s1 = arm_step(HANGING, np.array([100.0, 0.0]), CFG)
        s2 = arm_step(HANGING, np.array([CFG.voltage_limit, 0.0]), CFG)
        assert np.array_equal(s1, s2)

    def test_state_stays_in_bounds(self):
        env = ArmEnv()
        rng = np.random.default_rng(4)
        env.reset(rng)
        for _ in range(200):
            s, _ = env.step(rng.uniform(-12, 12, 2))
            assert env.state_space.contains(s, atol=1e-9)

    def test_divergence_guarded(self):
        with pytest.raises(IntegrationDivergedError):
            arm_step(np.array([np.inf, 0, 0, 0]), np.zeros(2), CFG)


class TestEnergy:
    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_passive_energy_never_increases(self, seed):
        rng = np.random.default_rng(seed)
        jl = CFG.joint_limit
        s = np.array([rng.uniform(-jl, jl), rng.uniform(-jl, jl),
                      rng.uniform(-8, 8), rng.uniform(-8, 8)])
        sub = ArmEnvConfig(physics_substeps=1, control_dt=CFG.control_dt / CFG.physics_substeps)
        e = mechanical_energy(s, sub)
        for _ in range(300):
            s = arm_step(s, np.zeros(2), sub)
            e2 = mechanical_energy(s, sub)
            assert e2 - e <= 1e-6
            e = e2

    def test_settles_to_hanging(self):
        s = np.array([1.0, 1.0, 0.0, 0.0])
        for _ in range(100):
            s = arm_step(s, np.zeros(2), CFG)
        p = arm_achieved_goal(s, CFG)
        assert p[1] < 0  # end effector below the mount
        assert abs(s[2]) < 0.05 and abs(s[3]) < 0.05


class TestGoals:
    def test_samples_inside_annulus(self):
        rng = np.random.default_rng(0)
        r_in = abs(CFG.link_lengths[0] - CFG.link_lengths[1]) + CFG.w
        for _ in range(500):
            g = arm_sample_goal(CFG, rng)
            assert r_in <= np.linalg.norm(g) <= CFG.reach

    def test_each_goal_ik_feasible(self):
        rng = np.random.default_rng(1)
        for _ in range(300):
            g = arm_sample_goal(CFG, rng)
            q = arm_inverse_kinematics(g, CFG)
            assert q is not None
            fk = arm_achieved_goal(np.array([q[0], q[1], 0, 0]), CFG)
            assert np.linalg.norm(fk - g) < 1e-9

    def test_degenerate_second_link(self):
        cfg = ArmEnvConfig(link_lengths=(0.1, 1e-9), w=0.01)
        rng = np.random.default_rng(2)
        for _ in range(100):
            g = arm_sample_goal(cfg, rng)
            assert np.linalg.norm(g) == pytest.approx(0.1, abs=0.011)

    def test_batch_sampler_matches_distribution(self):
        env = ArmEnv()
        rng = np.random.default_rng(3)
        goals = env.sample_goals(rng, 1000)
        r = np.linalg.norm(goals, axis=1)
        r_in = CFG.w
        assert np.all((r >= r_in) & (r <= CFG.reach))

    def test_oversized_margin_falls_back_to_unpadded_band(self):
        cfg = ArmEnvConfig(w=0.5)  # pad larger than the reach: drop the pad
        rng = np.random.default_rng(0)
        for _ in range(100):
            g = arm_sample_goal(cfg, rng)
            assert np.linalg.norm(g) <= cfg.reach


class TestArmEnv:
    def test_reward_via_fk(self):
        env = ArmEnv()
        rng = np.random.default_rng(5)
        env.reset(rng, state=[-math.pi / 2, 0.0, 0.0, 0.0])  # hanging: stationary
        env.set_goal(arm_achieved_goal(env.current_state, env.cfg))
        _, r = env.step(np.zeros(2))
        assert r == 1.0

    def test_sample_state_is_rest_pose(self):
        env = ArmEnv()
        s = env.sample_state(np.random.default_rng(0))
        assert s[2] == 0.0 and s[3] == 0.0
        assert abs(s[0]) <= math.pi and abs(s[1]) <= math.pi
