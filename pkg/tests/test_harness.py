import numpy as np
import pytest

from rotorfall.env import EpisodeConfig
from rotorfall.harness import (
    ENV_LOG_COLUMNS,
    MANEUVERS,
    TrainRun,
    agent_policy,
    evaluate,
    format_report_table,
    make_trajectory,
    maneuver_suite,
    random_policy_baseline,
    tail_slope,
    train,
    zero_policy,
)
from rotorfall.sac import SacAgent, SacConfig


def quick_run(**over):
    base = dict(
        total_steps=1500,
        eval_interval=500,
        checkpoint_interval=500,
        log_interval=100,
        eval_seconds=2.0,
        seed=0,
        sac=SacConfig(warmup_steps=200, batch_size=64, hidden_width=16),
    )
    base.update(over)
    return TrainRun(**base)


class TestTrainRunValidation:
    def test_intervals_must_divide_log_cadence(self):
        with pytest.raises(ValueError):
            TrainRun(total_steps=1000, log_interval=300)
        with pytest.raises(ValueError):
            TrainRun(eval_interval=150, log_interval=100)
        with pytest.raises(ValueError):
            TrainRun(checkpoint_interval=199, log_interval=100)

    def test_negative_steps_rejected(self):
        with pytest.raises(ValueError):
            TrainRun(total_steps=-1)


class TestTrain:
    def test_zero_steps_emits_initial_checkpoint_and_empty_metrics(self, tmp_path):
        res = train(quick_run(total_steps=0), tmp_path / "run")
        assert res.last_checkpoint.exists()
        assert res.metrics_path.read_text().splitlines() == [
            "step,episode,ep_reward,q1_loss,q2_loss,pi_loss,alpha"
        ]
        agent = SacAgent.load(res.last_checkpoint)
        assert agent.loaded_meta["env_steps"] == 0

    def test_metrics_row_count_exact(self, tmp_path):
        run = quick_run(total_steps=1200)
        res = train(run, tmp_path / "run")
        rows = res.metrics_path.read_text().splitlines()
        assert len(rows) == 1 + run.total_steps // run.log_interval

    def test_seeded_runs_byte_identical(self, tmp_path):
        a = train(quick_run(seed=7), tmp_path / "a")
        b = train(quick_run(seed=7), tmp_path / "b")
        assert a.metrics_path.read_bytes() == b.metrics_path.read_bytes()
        assert (tmp_path / "a" / "evals.csv").read_bytes() == (
            tmp_path / "b" / "evals.csv"
        ).read_bytes()

    def test_different_seeds_differ(self, tmp_path):
        a = train(quick_run(seed=1), tmp_path / "a")
        b = train(quick_run(seed=2), tmp_path / "b")
        assert a.metrics_path.read_bytes() != b.metrics_path.read_bytes()

    def test_first_episode_log_has_fault_pinned(self, tmp_path):
        run = quick_run(episode=EpisodeConfig(failed_rotor=2))
        res = train(run, tmp_path / "run")
        lines = (tmp_path / "run" / "episode0.csv").read_text().splitlines()
        assert lines[0] == ENV_LOG_COLUMNS
        w2 = lines[0].split(",").index("w2")
        assert len(lines) > 10
        assert all(float(row.split(",")[w2]) == 0.0 for row in lines[1:])

    def test_resume_continues_step_count(self, tmp_path):
        first = train(quick_run(total_steps=600), tmp_path / "a")
        second = train(
            quick_run(total_steps=400), tmp_path / "b", resume_from=first.last_checkpoint
        )
        agent = SacAgent.load(second.last_checkpoint)
        assert agent.loaded_meta["env_steps"] == 1000
        assert second.steps == 1000

    def test_best_checkpoint_saved_when_eval_runs(self, tmp_path):
        res = train(quick_run(), tmp_path / "run")
        assert res.best_checkpoint is not None
        assert res.best_checkpoint.exists()


class TestEvaluate:
    def test_healthy_equilibrium_hover_is_clean(self):
        report = evaluate(
            zero_policy,
            maneuver="hover",
            duration=8.0,
            episode=EpisodeConfig(failed_rotor=None),
        )
        assert not report.crashed
        assert report.rmse < 1e-6
        assert report.max_error < 1e-6
        assert report.steps == 800

    def test_stabilization_window_respected_with_wind(self, tmp_path):
        # moving goal starts only after the 10 s wind stabilization window
        log = tmp_path / "traj.csv"
        report = evaluate(
            zero_policy,
            maneuver="saddle",
            wind_speed=0.5,
            duration=12.0,
            episode=EpisodeConfig(failed_rotor=None),
            log_path=log,
        )
        lines = log.read_text().splitlines()
        cols = lines[0].split(",")
        it, igx = cols.index("t"), cols.index("goal_x")
        for row in lines[1:]:
            vals = row.split(",")
            t, gx = float(vals[it]), float(vals[igx])
            if t <= 10.0:
                assert gx == 0.0
        last = lines[-1].split(",")
        assert float(last[it]) > 10.0
        assert float(last[igx]) != 0.0

    def test_no_wind_uses_five_second_window(self, tmp_path):
        log = tmp_path / "traj.csv"
        evaluate(
            zero_policy,
            maneuver="circle-xy",
            duration=6.0,
            episode=EpisodeConfig(failed_rotor=None),
            log_path=log,
        )
        lines = log.read_text().splitlines()
        cols = lines[0].split(",")
        it, igy = cols.index("t"), cols.index("goal_y")
        moved = [float(r.split(",")[igy]) for r in lines[1:] if float(r.split(",")[it]) > 5.5]
        assert any(g != 0.0 for g in moved)

    def test_crash_keeps_partial_trajectory(self, tmp_path):
        log = tmp_path / "traj.csv"
        report = evaluate(
            zero_policy,
            maneuver="hover",
            duration=40.0,
            episode=EpisodeConfig(failed_rotor=1),
            log_path=log,
        )
        assert report.crashed
        assert report.reason == "crash"
        lines = log.read_text().splitlines()
        assert len(lines) == report.steps + 2  # header + initial row + steps

    def test_landing_cutoff_with_descending_policy(self, tmp_path):
        # hold hover through stabilization, then bleed thrust to descend
        calls = {"n": 0}

        def descender(obs_vec):
            calls["n"] += 1
            if calls["n"] <= 500:
                return np.zeros(4)
            return np.full(4, -0.001)

        log = tmp_path / "land.csv"
        report = evaluate(
            descender,
            maneuver="land",
            duration=40.0,
            episode=EpisodeConfig(failed_rotor=None),
            log_path=log,
        )
        assert report.reason == "landed"
        lines = log.read_text().splitlines()
        cols = lines[0].split(",")
        iz = cols.index("z")
        ipwm = [cols.index(f"pwm{i}") for i in (1, 2, 3, 4)]
        final = lines[-1].split(",")
        assert float(final[iz]) >= 1.5
        assert all(float(final[i]) == 0.0 for i in ipwm)

    def test_unknown_maneuver_rejected(self):
        with pytest.raises(ValueError, match="hover"):
            make_trajectory("loop-the-loop", 5.0)


class TestManeuverSuite:
    def fresh_policy(self, seed=0):
        return agent_policy(SacAgent(22, 4, SacConfig(hidden_width=16), seed=seed))

    def test_suite_has_five_rows_and_untrained_crashes(self, tmp_path):
        reports = maneuver_suite(self.fresh_policy(), tmp_path, seed=3, duration=12.0)
        assert [r.maneuver for r in reports] == list(MANEUVERS)
        assert all(r.crashed for r in reports)  # negative control
        summary = (tmp_path / "summary.csv").read_text().splitlines()
        assert len(summary) == 6
        assert (tmp_path / "summary.txt").exists()
        for m in MANEUVERS:
            assert (tmp_path / f"{m}.csv").exists()

    def test_suite_deterministic_given_seed(self, tmp_path):
        a = maneuver_suite(self.fresh_policy(1), tmp_path / "a", seed=9, duration=6.0)
        b = maneuver_suite(self.fresh_policy(1), tmp_path / "b", seed=9, duration=6.0)
        for ra, rb in zip(a, b):
            assert ra.maneuver == rb.maneuver
            assert ra.episode_return == rb.episode_return
            assert ra.rmse == rb.rmse or (np.isnan(ra.rmse) and np.isnan(rb.rmse))
            assert ra.crashed == rb.crashed
            assert ra.steps == rb.steps

    def test_report_table_formatting(self, tmp_path):
        reports = maneuver_suite(self.fresh_policy(), tmp_path, seed=0, duration=4.0)
        table = format_report_table(reports)
        lines = table.splitlines()
        assert lines[0].startswith("maneuver")
        assert len(lines) == 6


class TestBaselineAndSlope:
    def test_random_baseline_statistics(self):
        stats = random_policy_baseline(episodes=5, seed=11)
        assert len(stats.returns) == 5
        assert stats.mean < 0
        assert stats.std > 0

    def test_baseline_reproducible(self):
        a = random_policy_baseline(episodes=3, seed=4)
        b = random_policy_baseline(episodes=3, seed=4)
        assert a.returns == b.returns

    def test_tail_slope_flat_and_rising(self):
        assert tail_slope(np.ones(100)) == pytest.approx(0.0, abs=1e-12)
        assert tail_slope(np.arange(100.0)) == pytest.approx(1.0)
        assert tail_slope(-np.arange(100.0)) == pytest.approx(-1.0)
