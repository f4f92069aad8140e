import json
import math

import numpy as np
import pytest

from gpmppi.cli import EXIT_COLLIDED, EXIT_CONFIG, EXIT_OK, EXIT_TRAPPED, main
from gpmppi.harness import (TRAJECTORY_COLUMNS, ConfigError, MissionConfig, MissionResult,
                            goal_in_sight, read_trajectory, run_batch, run_mission, select_target,
                            summarize, trial_config, uses_subgoal)
from gpmppi.mppi import MppiParams
from gpmppi.sim import Obstacle, PointCloud, RobotState, World

GOAL = RobotState(5.0, 0.0, 0.0)
SUB = RobotState(1.0, 1.0, 0.5)


def _empty_mission(**kw):
    base = dict(world={"kind": "empty", "seed": 0}, start=(0.0, 0.0, 0.0), goal=(5.0, 0.0, 0.0),
                max_steps=400, name="empty")
    base.update(kw)
    return MissionConfig(**base)


def _state_columns(res):
    return np.array([row[1:6] for row in res.trajectory])


class TestSelectTarget:
    def test_rm_slow(self):
        assert select_target("RM", 0.0, 0.55, GOAL, SUB) is SUB

    def test_rm_fast(self):
        assert select_target("RM", 1.0, 0.55, GOAL, SUB) is GOAL

    @pytest.mark.parametrize("mu", [0.0, 0.3, 1.5])
    def test_sm(self, mu):
        assert select_target("SM", mu, 0.55, GOAL, SUB) is SUB

    def test_baseline(self):
        assert select_target("baseline", 0.0, 0.55, GOAL, SUB) is GOAL

    def test_missing_subgoal_falls_back(self):
        assert select_target("SM", 0.0, 0.55, GOAL, None) is GOAL

    def test_hold_keeps_recovery(self):
        assert select_target("RM", 1.0, 0.55, GOAL, SUB, hold=True) is SUB

    def test_threshold_is_strict(self):
        assert not uses_subgoal("RM", 0.55, 0.55)
        assert uses_subgoal("RM", math.nextafter(0.55, 0.0), 0.55)

    def test_unknown_mode(self):
        with pytest.raises(ConfigError):
            select_target("XM", 0.0, 0.55, GOAL, SUB)


class TestConfig:
    def test_round_trip(self):
        cfg = MissionConfig(mode="SM", seed=4, name="x")
        again = MissionConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
        assert again.to_dict() == cfg.to_dict()

    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            MissionConfig.from_dict({"speed": 3})

    def test_invalid_values(self):
        with pytest.raises(ConfigError):
            MissionConfig(mode="fast").validate()
        with pytest.raises(ConfigError):
            MissionConfig(max_steps=0).validate()

    def test_start_in_obstacle(self):
        world = World((-5, -5, 5, 5), (Obstacle.circle(0.0, 0.0, 1.0),))
        with pytest.raises(ConfigError):
            run_mission(MissionConfig(world=world, start=(0, 0, 0), goal=(3, 0, 0)))

    def test_trial_config_advances_seeds(self):
        cfg = trial_config(MissionConfig(seed=10, world={"kind": "maze", "seed": 3}), 2)
        assert cfg.seed == 12 and cfg.world["seed"] == 5


class TestMission:
    def test_empty_world(self):
        cfg = _empty_mission()
        res = run_mission(cfg)
        assert res.completed and not res.collided
        # arrival is declared inside the goal tolerance, so the path can be that much shorter
        assert 5.0 - cfg.goal_tolerance <= res.distance <= 5.6

    def test_start_equals_goal(self):
        res = run_mission(_empty_mission(goal=(0.0, 0.0, 0.0)))
        assert res.completed and res.distance == 0.0 and res.steps == 0

    def test_trajectory_continuity(self):
        cfg = _empty_mission()
        res = run_mission(cfg)
        xy = _state_columns(res)[:, :2]
        step = np.hypot(*np.diff(xy, axis=0).T)
        assert step.max() <= cfg.mppi.v_max * cfg.mppi.dt + 1e-12

    def test_executed_control_is_first_filtered_entry(self):
        seen = []

        def hook(k, state, info, target):
            seen.append((info.u0.copy(), info.sequence[0].copy()))
        res = run_mission(_empty_mission(max_steps=30), on_step=hook)
        for (u0, first), row in zip(seen, res.trajectory[1:]):
            assert np.array_equal(u0, first)
            assert (row[4], row[5]) == (u0[0], u0[1])

    def test_rm_zero_threshold_is_baseline(self):
        kw = dict(world={"kind": "maze", "seed": 0}, u_th=0.0, max_steps=150, seed=3)
        rm = run_mission(MissionConfig(mode="RM", **kw))
        base = run_mission(MissionConfig(mode="baseline", **kw))
        assert np.array_equal(_state_columns(rm), _state_columns(base))
        assert rm.gp_assist == 0.0

    def test_sm_with_goal_recommender_is_baseline(self):
        kw = dict(world={"kind": "maze", "seed": 0}, max_steps=150, seed=5)
        sm = run_mission(MissionConfig(mode="SM", **kw), recommender=lambda c, s, g, k: g)
        base = run_mission(MissionConfig(mode="baseline", **kw))
        assert np.array_equal(_state_columns(sm), _state_columns(base))

    def test_gp_assist_accounting(self):
        cfg = MissionConfig(world={"kind": "maze", "seed": 0}, mode="RM", max_steps=400, seed=0)
        res = run_mission(cfg)
        labels = [row[6] for row in res.trajectory[1:]]
        assert res.gp_assist == pytest.approx(labels.count("subgoal") / res.steps)
        assert res.gp_assist > 0.0

    def test_csv_round_trip(self, tmp_path):
        res = run_mission(_empty_mission(max_steps=20))
        res.write_csv(tmp_path / "t.csv")
        tr = read_trajectory(tmp_path / "t.csv")
        assert set(tr) == set(TRAJECTORY_COLUMNS)
        np.testing.assert_allclose(tr["x"], [r[1] for r in res.trajectory])

    def test_goal_in_sight(self):
        s = RobotState(0, 0, 0)
        blocked = PointCloud(np.array([0.0]), np.array([0.0]), np.array([2.0]))
        assert goal_in_sight(PointCloud(), s, RobotState(3, 0, 0), 5.0)
        assert not goal_in_sight(blocked, s, RobotState(3, 0, 0), 5.0)
        assert not goal_in_sight(PointCloud(), s, RobotState(6, 0, 0), 5.0)


def _result(progress, completed=False, trapped=True):
    return MissionResult(completed, trapped, False, 3.0, 1.0, 0.0, progress, 10, 1.0, 0.1)


class TestBatch:
    def test_all_complete(self):
        s = summarize([_result(1.0, True, False)] * 3)
        assert s["T_c"]["mean"] == 100.0 and s["R_lm"] == 0

    def test_partial_progress(self):
        s = summarize([_result(0.22)])
        assert s["T_c"]["mean"] == pytest.approx(22.0)
        assert s["R_lm"] == 1

    def test_deterministic(self, tmp_path):
        cfg = _empty_mission(max_steps=40)
        a = run_batch([cfg], 2, tmp_path / "a")
        b = run_batch([cfg], 2)
        for key in ("T_c", "d_av", "v_av", "A_gp"):
            assert a.summaries["empty"][key] == b.summaries["empty"][key]
        doc = json.loads((tmp_path / "a" / "metrics.json").read_text())
        assert doc["summaries"]["empty"]["trials"] == 2
        assert (tmp_path / "a" / "empty_trial1.csv").exists()

    def test_rejects_zero_trials(self):
        with pytest.raises(ConfigError):
            run_batch([_empty_mission()], 0)

    def test_rejects_duplicate_names(self):
        with pytest.raises(ConfigError):
            run_batch([_empty_mission(), _empty_mission()], 1)


class TestCli:
    def _config(self, tmp_path, **kw):
        d = _empty_mission(**kw).to_dict()
        path = tmp_path / "mission.json"
        path.write_text(json.dumps(d))
        return str(path)

    def test_run_completed(self, tmp_path):
        out = tmp_path / "run"
        code = main(["run", "--config", self._config(tmp_path), "--out", str(out), "--dump-surface"])
        assert code == EXIT_OK
        for name in ("trajectory.csv", "result.json", "world.json", "config.json"):
            assert (out / name).exists()

    def test_trapped(self, tmp_path):
        code = main(["run", "--world", "maze", "--mode", "baseline", "--max-steps", "20",
                     "--out", str(tmp_path / "trap")])
        assert code == EXIT_TRAPPED

    def test_collided(self, tmp_path):
        # the planner is told the robot is tiny, the true footprint is 0.3 m
        wall = Obstacle.rect(2.0, -0.1, 2.2, 0.1)
        world = World((-5, -5, 5, 5), (wall,)).to_dict()
        mppi = MppiParams(M=512, N=60, footprint_radius=0.01)
        path = self._config(tmp_path, world=world, mppi=mppi, max_steps=300, goal=(4.0, 0.0, 0.0))
        assert main(["run", "--config", path, "--mode", "baseline", "--out", str(tmp_path / "c")]) == EXIT_COLLIDED

    def test_missing_config(self, tmp_path):
        assert main(["run", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == EXIT_CONFIG

    def test_bad_config_value(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"mode": "warp"}))
        assert main(["run", "--config", str(path), "--out", str(tmp_path)]) == EXIT_CONFIG

    def test_batch_and_plot(self, tmp_path):
        out = tmp_path / "batch"
        code = main(["batch", "--config", self._config(tmp_path, max_steps=30), "--trials", "2",
                     "--modes", "baseline,RM", "--out", str(out)])
        assert code == EXIT_TRAPPED     # 30 steps cannot cover 5 m
        doc = json.loads((out / "metrics.json").read_text())
        assert set(doc["summaries"]) == {"empty_baseline", "empty_RM"}
        png = tmp_path / "fig.png"
        assert main(["plot", str(out / "empty_RM_trial0.csv"), "--out", str(png)]) == EXIT_OK
        assert png.stat().st_size > 0

    def test_plot_with_world_and_surface(self, tmp_path):
        out = tmp_path / "run"
        main(["run", "--world", "maze", "--mode", "SM", "--max-steps", "10", "--dump-surface",
              "--out", str(out)])
        png = tmp_path / "fig.png"
        code = main(["plot", str(out / "trajectory.csv"), "--world", str(out / "world.json"),
                     "--surface", str(out / "surface.json"), "--out", str(png)])
        assert code == EXIT_OK and png.exists()
