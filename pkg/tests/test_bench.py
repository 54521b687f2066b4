import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cvi.agent import CviParams
from cvi.bench import (EvalProtocol, MetricsRecord, SYSTEMS, TrainingProtocol,
                       aggregate, evaluate, optimal_control_score,
                       read_metrics_csv, run_training, write_metrics_csv,
                       write_summary_csv, plot_curves)
from cvi.envs import PointEnv, PointEnvConfig


class TestOptimalControlScore:
    def test_optimal_is_one(self):
        assert optimal_control_score(5, 5, 30, True) == 1.0

    def test_not_reached_is_zero(self):
        assert optimal_control_score(30, 5, 30, False) == 0.0

    def test_budget_exhausted_reach_is_zero(self):
        assert optimal_control_score(30, 5, 30, True) == 0.0  # 1 - 25/25

    def test_linear_in_between(self):
        assert optimal_control_score(10, 5, 30, True) == pytest.approx(0.8)

    def test_clamped_when_beating_formula_optimum(self):
        assert optimal_control_score(4, 5, 30, True) == 1.0

    def test_invalid_opt(self):
        with pytest.raises(ValueError):
            optimal_control_score(3, 30, 30, True)
        with pytest.raises(ValueError):
            optimal_control_score(3, -1, 30, True)

    @given(st.integers(0, 29), st.integers(1, 30), st.booleans())
    def test_bounds(self, opt, m, reached):
        s = optimal_control_score(m, opt, 30, reached)
        assert 0.0 <= s <= 1.0


class TestAggregate:
    def rec(self, system, it, score, seed=0):
        return MetricsRecord(f"{system}-s{seed}", seed, system, it, score, 0, 0, 0.0)

    def test_single_run(self):
        run = [self.rec("CVI", 1, 0.5), self.rec("CVI", 2, 0.7)]
        rows = aggregate([run])
        assert rows == [("CVI", 1, 0.5, 0.0, 1), ("CVI", 2, 0.7, 0.0, 1)]

    def test_two_runs(self):
        r1 = [self.rec("CVI", 1, 0.4, seed=0)]
        r2 = [self.rec("CVI", 1, 0.6, seed=1)]
        [(system, it, mean, std, n)] = aggregate([r1, r2])
        assert (system, it, n) == ("CVI", 1, 2)
        assert mean == pytest.approx(0.5)
        assert std == pytest.approx(0.1)

    def test_constant_runs(self):
        runs = [[self.rec("CVI", 1, 1.0, seed=s)] for s in range(10)]
        [(_, _, mean, std, n)] = aggregate(runs)
        assert mean == 1.0 and std == 0.0 and n == 10

    def test_ragged_rejected(self):
        r1 = [self.rec("CVI", 1, 0.4), self.rec("CVI", 2, 0.5)]
        r2 = [self.rec("CVI", 1, 0.6)]
        with pytest.raises(ValueError):
            aggregate([r1, r2])

    def test_systems_grouped(self):
        r1 = [self.rec("CVI", 1, 0.4)]
        r2 = [self.rec("CVI+HER", 1, 0.6)]
        rows = aggregate([r1, r2])
        assert {r[0] for r in rows} == {"CVI", "CVI+HER"}


class TestCsvRoundTrip:
    def test_metrics(self, tmp_path):
        recs = [MetricsRecord("CVI-s1", 1, "CVI", i, 0.1 * i, i, 10 * i, 0.0)
                for i in range(1, 4)]
        path = tmp_path / "metrics.csv"
        write_metrics_csv(path, recs)
        assert read_metrics_csv(path) == recs

    def test_summary_and_plot(self, tmp_path):
        rows = [("CVI", 1, 0.5, 0.1, 10), ("CVI", 2, 0.7, 0.05, 10)]
        write_summary_csv(tmp_path / "summary.csv", rows)
        text = (tmp_path / "summary.csv").read_text()
        assert text.splitlines()[0] == "system,iteration,mean,std,n"
        plot_curves(tmp_path / "curves.svg", rows)
        svg = (tmp_path / "curves.svg").read_text()
        assert svg.lstrip().startswith("<?xml")


def small_protocol(**kw):
    defaults = dict(goal_mode="one_goal", episode_max_steps=100, trial_max_steps=30,
                    reset_agent_on_trial_end=True, total_outer_iterations=3)
    defaults.update(kw)
    return TrainingProtocol(**defaults)


class TestEvaluate:
    def test_trial_accounting(self):
        env = PointEnv()
        from cvi.agent import CviAgent
        agent = CviAgent(env, CviParams())  # empty models: random policy
        proto = small_protocol()
        ev = EvalProtocol(eval_max_steps=300, trial_max_steps=30)
        rng = np.random.default_rng(0)
        score, successes = evaluate(agent, env, proto, ev, rng,
                                    fixed_goal=np.array([0.5, 0.5]))
        assert 0.0 <= score <= 1.0
        assert successes >= 0

    def test_random_goal_mode_draws_goals(self):
        env = PointEnv()
        from cvi.agent import CviAgent
        agent = CviAgent(env, CviParams())
        proto = small_protocol(goal_mode="random_goal")
        ev = EvalProtocol(eval_max_steps=120, trial_max_steps=30)
        score, _ = evaluate(agent, env, proto, ev, np.random.default_rng(1))
        assert 0.0 <= score <= 1.0


class TestRunTraining:
    def test_metrics_shape_and_determinism(self):
        proto = small_protocol()
        ev = EvalProtocol(eval_max_steps=240, trial_max_steps=30)
        args = ("CVI", CviParams(max_v_iters=10), lambda: PointEnv(), proto, ev, 123)
        r1 = run_training(*args)
        r2 = run_training(*args)
        assert r1 == r2
        assert [r.iteration for r in r1] == [1, 2, 3]
        assert all(rec.run_id == "CVI-s123" for rec in r1)
        assert all(0.0 <= rec.score <= 1.0 for rec in r1)
        assert all(rec.wall_time_s == 0.0 for rec in r1)

    def test_one_goal_learns(self):
        proto = small_protocol(episode_max_steps=200, total_outer_iterations=6)
        ev = EvalProtocol(eval_max_steps=1000, trial_max_steps=30)
        recs = run_training("CVI", CviParams(), lambda: PointEnv(), proto, ev, 5)
        assert recs[-1].score > 0.5

    def test_random_system_never_learns(self):
        proto = small_protocol(total_outer_iterations=2)
        ev = EvalProtocol(eval_max_steps=120, trial_max_steps=30)
        recs = run_training("RANDOM", CviParams(), lambda: PointEnv(), proto, ev, 9)
        assert all(rec.buffer_size > 0 for rec in recs)

    def test_her_system_grows_buffer(self):
        proto = small_protocol(goal_mode="random_goal", total_outer_iterations=2)
        ev = EvalProtocol(eval_max_steps=120, trial_max_steps=30)
        plain = run_training("CVI", CviParams(max_v_iters=5), lambda: PointEnv(), proto, ev, 3)
        her = run_training("CVI+HER", CviParams(max_v_iters=5), lambda: PointEnv(), proto, ev, 3)
        assert her[-1].buffer_size > plain[-1].buffer_size

    def test_timing_flag(self):
        proto = small_protocol(total_outer_iterations=1)
        ev = EvalProtocol(eval_max_steps=60, trial_max_steps=30)
        recs = run_training("CVI", CviParams(max_v_iters=3), lambda: PointEnv(),
                            proto, ev, 1, record_timing=True)
        assert recs[0].wall_time_s > 0.0

    def test_snapshots_written(self, tmp_path):
        proto = small_protocol(total_outer_iterations=2)
        ev = EvalProtocol(eval_max_steps=60, trial_max_steps=30)
        run_training("CVI", CviParams(max_v_iters=3), lambda: PointEnv(), proto, ev, 1,
                     snapshot_dir=tmp_path)
        files = sorted(p.name for p in tmp_path.iterdir())
        assert files == ["CVI-s1-it0001.csv", "CVI-s1-it0002.csv"]

    def test_all_systems_registered(self):
        assert set(SYSTEMS) == {"CVI", "CVI+HER", "CVI+IER", "CVI+IER3X",
                                "CVI+IER10X", "CVI+HER+IER", "RANDOM"}
