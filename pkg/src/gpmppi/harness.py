"""Mission loop, mode arbitration, metrics and result files.

One control step: scan the world twice (everything for the costmap, only
recommender-visible obstacles for the SGP), pick the tracking target,
run one MPPI iteration, execute ``u_0`` on the true dynamics and check for
goal arrival, collision and entrapment.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, List, Optional, Sequence

import numpy as np

from .mppi import MppiParams, MppiPlanner, shift_sequence
from .sim.costmap import build_costmap
from .sim.dynamics import ControlInput, RobotState, step_dynamics, wrap_angle
from .sim.lidar import SensorConfig, simulate_lidar
from .sim.world import World, make_world
from .subgoal import OccupancySurfaceConfig, RecommenderError, recommend_detailed

log = logging.getLogger(__name__)

MODES = ("SM", "RM", "baseline")
TRAJECTORY_COLUMNS = ("t", "x", "y", "theta", "v", "omega", "mode_target", "mu_u")


class ConfigError(ValueError):
    """Mission configuration is invalid; raised before any stepping."""


def select_target(mode: str, mu_u: float, u_th: float, goal: RobotState,
                  subgoal: Optional[RobotState], hold: bool = False) -> RobotState:
    """Tracking target for this step.

    SM always follows the subgoal, RM only while the predicted mean speed is
    below ``u_th`` (or while ``hold`` keeps an active recovery), baseline
    never.  A missing subgoal falls back to the goal.
    """
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}")
    if uses_subgoal(mode, mu_u, u_th, hold) and subgoal is not None:
        return subgoal
    return goal


def uses_subgoal(mode: str, mu_u: float, u_th: float, hold: bool = False) -> bool:
    return mode == "SM" or (mode == "RM" and (mu_u < u_th or hold))


def desk_mppi() -> MppiParams:
    """Controller settings for desk-scale runs (fewer rollouts, shorter horizon).

    Rollouts use a footprint inflated by one costmap cell: the grid lookup can
    under-estimate clearance by up to a cell, and the true check is exact.
    """
    return MppiParams(M=512, N=60, footprint_radius=0.35)


def desk_surface() -> OccupancySurfaceConfig:
    """Recommender settings sized for per-step refits on one CPU core."""
    return OccupancySurfaceConfig(m_s=40, max_points=240, fit_iters=30)


def desk_sensor(r_oc: float = 5.0) -> SensorConfig:
    """Four rings over 0-15 deg with range reaching ``r_oc`` horizontally on every ring.

    With ``r_max = r_oc`` the upper rings lose returns from obstacles just
    inside ``r_oc`` (their slant range is longer), which leaves spurious
    high-variance holes in the top rows of the surface.
    """
    base = SensorConfig()
    return replace(base, r_max=r_oc / math.cos(max(base.elevations)))


@dataclass
class MissionConfig:
    world: dict = field(default_factory=lambda: {"kind": "maze", "seed": 0})
    mode: str = "RM"
    u_th: float = 0.55
    goal_tolerance: float = 0.3
    max_steps: int = 1800
    seed: int = 0
    start: Optional[tuple] = None               # defaults to the world's start
    goal: Optional[tuple] = None                # defaults to the world's goal
    mppi: MppiParams = field(default_factory=desk_mppi)
    surface: OccupancySurfaceConfig = field(default_factory=desk_surface)
    sensor: SensorConfig = field(default_factory=desk_sensor)
    recommender_every: int = 5                  # refit cadence in control steps
    entrapment_window: float = 10.0             # seconds of sub-threshold speed
    costmap_size: int = 200
    costmap_resolution: float = 0.05
    robot_radius: float = 0.3                   # true-world collision footprint
    # an RM recovery ends once the robot is this much closer to the goal than
    # where it started (None: release as soon as the speed recovers)
    recovery_release: Optional[float] = 0.5
    goal_capture: bool = True                   # track the goal itself once it is in sight
    name: str = "mission"

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.u_th < 0:
            raise ConfigError("u_th must be non-negative")
        if self.goal_tolerance <= 0:
            raise ConfigError("goal_tolerance must be positive")
        if self.max_steps < 1:
            raise ConfigError("max_steps must be at least 1")
        if self.recommender_every < 1:
            raise ConfigError("recommender_every must be at least 1")
        if self.entrapment_window <= 0:
            raise ConfigError("entrapment_window must be positive")
        if self.robot_radius <= 0:
            raise ConfigError("robot_radius must be positive")

    def build_world(self) -> World:
        if isinstance(self.world, World):
            return self.world
        spec = dict(self.world)
        if "obstacles" in spec:
            return World.from_dict(spec)
        try:
            return make_world(spec.get("kind", "maze"), spec.get("params"), spec.get("seed", 0))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        world = self.world.to_dict() if isinstance(self.world, World) else dict(self.world)
        return {
            "world": world, "mode": self.mode, "u_th": self.u_th,
            "goal_tolerance": self.goal_tolerance, "max_steps": self.max_steps, "seed": self.seed,
            "start": self.start, "goal": self.goal, "mppi": self.mppi.to_dict(),
            "surface": asdict(self.surface), "sensor": asdict(self.sensor),
            "recommender_every": self.recommender_every,
            "entrapment_window": self.entrapment_window, "costmap_size": self.costmap_size,
            "costmap_resolution": self.costmap_resolution, "robot_radius": self.robot_radius,
            "recovery_release": self.recovery_release,
            "goal_capture": self.goal_capture, "name": self.name,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MissionConfig":
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown mission config keys: {sorted(unknown)}")
        try:
            if "mppi" in d:
                d["mppi"] = MppiParams.from_dict(d["mppi"])
            if "surface" in d:
                s = dict(d["surface"])
                if "elevation_range" in s:
                    s["elevation_range"] = tuple(s["elevation_range"])
                d["surface"] = OccupancySurfaceConfig(**s)
            if "sensor" in d:
                s = dict(d["sensor"])
                if "elevations" in s:
                    s["elevations"] = tuple(s["elevations"])
                d["sensor"] = SensorConfig(**s)
            return cls(**d)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc


@dataclass
class MissionResult:
    completed: bool
    trapped: bool
    collided: bool
    distance: float
    mean_speed: float
    gp_assist: float
    progress: float                     # fraction of the start-goal distance covered
    steps: int
    duration: float                     # simulated seconds
    wall_time: float                    # seconds spent computing
    trajectory: List[tuple] = field(default_factory=list, repr=False)
    name: str = "mission"
    seed: int = 0
    last_recommendation: Optional[object] = field(default=None, repr=False)

    @property
    def status(self) -> str:
        if self.completed:
            return "completed"
        if self.collided:
            return "collided"
        return "trapped" if self.trapped else "incomplete"

    def summary(self) -> dict:
        return {"name": self.name, "seed": self.seed, "status": self.status,
                "completed": self.completed, "trapped": self.trapped, "collided": self.collided,
                "distance": self.distance, "mean_speed": self.mean_speed,
                "gp_assist": self.gp_assist, "progress": self.progress, "steps": self.steps,
                "duration": self.duration, "wall_time": self.wall_time}

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRAJECTORY_COLUMNS)
            for row in self.trajectory:
                w.writerow(row)


def read_trajectory(path) -> dict:
    """Load a trajectory CSV into column arrays (``mode_target`` stays a string array)."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = {}
    for col in TRAJECTORY_COLUMNS:
        vals = [r[col] for r in rows]
        out[col] = np.array(vals) if col == "mode_target" else np.array(vals, dtype=float)
    return out


# a recommender maps (recommender-visible cloud, pose, goal, previous kernel) to a recommendation
Recommender = Callable


def goal_in_sight(cloud, state: RobotState, goal: RobotState, r_oc: float,
                  tolerance: float = math.radians(3.0)) -> bool:
    """Goal closer than ``r_oc`` with no return in front of it along its bearing."""
    d = state.distance_to(goal)
    if d > r_oc:
        return False
    if len(cloud) == 0:
        return True
    bearing = wrap_angle(math.atan2(goal.y - state.y, goal.x - state.x) - state.theta)
    near = np.abs(wrap_angle(cloud.azimuth - bearing)) <= tolerance
    return not np.any(cloud.horizontal_range[near] < d)


def _gp_recommender(config: MissionConfig):
    def run(cloud, state, goal, step):
        if config.goal_capture and goal_in_sight(cloud, state, goal, config.surface.r_oc):
            # same heading convention as frontier subgoals: face along the approach
            return RobotState(goal.x, goal.y, math.atan2(goal.y - state.y, goal.x - state.x))
        return recommend_detailed(cloud, state, goal, config.surface, seed=config.seed)
    return run


def run_mission(config: MissionConfig, recommender: Optional[Recommender] = None,
                on_step: Optional[Callable] = None) -> MissionResult:
    """Drive from start to goal and report what happened.

    ``recommender(cloud, state, goal, step)`` may replace the GP pipeline; it
    must return an object with a ``subgoal`` attribute or a pose/None.
    """
    config.validate()
    world = config.build_world()
    start = RobotState(*config.start) if config.start is not None else world.start
    goal = RobotState(*config.goal) if config.goal is not None else world.goal
    if start is None or goal is None:
        raise ConfigError("start and goal must be given by the config or the world")
    fp = config.robot_radius
    for name, p in (("start", start), ("goal", goal)):
        if not world.is_free(p.x, p.y, fp):
            raise ConfigError(f"{name} pose ({p.x}, {p.y}) is not in free space")
    recommender = recommender or _gp_recommender(config)
    hidden = any(not o.recommender_visible for o in world.obstacles)

    p = config.mppi
    dt = p.dt
    # the primary planner tracks the goal (baseline, RM) or the subgoal (SM);
    # in RM a second planner on its own noise stream drives recovery while the
    # primary keeps measuring the goal-directed predicted speed
    primary = MppiPlanner(p, seed=config.seed)
    recovery = MppiPlanner(p, seed=config.seed, stream=1)
    state = start
    d0 = start.distance_to(goal)
    trajectory = [(0.0, state.x, state.y, state.theta, 0.0, 0.0, "goal", 0.0)]
    distance = 0.0
    subgoal = None
    last_rec = None
    last_fit = None
    assisted = 0
    low_speed = 0
    recovering = False
    hold = False
    entry_distance = math.inf
    window_steps = int(math.ceil(config.entrapment_window / dt))
    completed = d0 <= config.goal_tolerance
    collided = trapped = False
    steps = 0
    t_wall = time.perf_counter()

    def refresh_subgoal(cloud):
        nonlocal subgoal, last_fit, last_rec
        if last_fit is not None and steps - last_fit < config.recommender_every:
            return
        rcloud = simulate_lidar(world, state, config.sensor, recommender_only=True) if hidden else cloud
        try:
            rec = recommender(rcloud, state, goal, steps)
            subgoal = getattr(rec, "subgoal", rec)
            if hasattr(rec, "surface"):
                last_rec = rec
            last_fit = steps
        except RecommenderError as exc:
            log.warning("step %d: recommender failed (%s); keeping previous subgoal", steps, exc)

    while not completed and steps < config.max_steps:
        cloud = simulate_lidar(world, state, config.sensor)
        costmap = build_costmap(cloud, state, config.costmap_size, config.costmap_resolution)
        if config.mode == "SM":
            refresh_subgoal(cloud)
            target = select_target("SM", 0.0, config.u_th, goal, subgoal)
            info = primary.step(state, costmap, target)
            mu_u = info.mu_u
        else:
            info = primary.step(state, costmap, goal)
            mu_u = info.mu_u
            target = goal
            if config.mode == "RM" and config.recovery_release is not None:
                d_goal = state.distance_to(goal)
                if hold and d_goal < entry_distance - config.recovery_release:
                    hold = False
                if mu_u < config.u_th and not hold:
                    hold, entry_distance = True, d_goal
            if uses_subgoal(config.mode, mu_u, config.u_th, hold):
                refresh_subgoal(cloud)
                target = select_target(config.mode, mu_u, config.u_th, goal, subgoal, hold)
            if target is not goal:
                if not recovering and recovery.iteration == 0:
                    recovery.U = info.sequence.copy()
                info = recovery.step(state, costmap, target)
            else:
                # idle recovery plan stays time-aligned for the next hand-over
                recovery.U = shift_sequence(recovery.U)
            recovering = target is not goal
        assisted += target is not goal
        v, w = float(info.u0[0]), float(info.u0[1])
        nxt = step_dynamics(state, ControlInput(v, w), dt)
        distance += math.hypot(nxt.x - state.x, nxt.y - state.y)
        state = nxt
        steps += 1
        trajectory.append((steps * dt, state.x, state.y, state.theta, v, w,
                           "subgoal" if target is not goal else "goal", mu_u))
        if on_step is not None:
            on_step(steps, state, info, target)
        if float(world.clearance(state.x, state.y)) < fp:
            collided = True
            break
        if state.distance_to(goal) <= config.goal_tolerance:
            completed = True
            break
        low_speed = low_speed + 1 if mu_u < config.u_th else 0
        if config.mode == "baseline" and low_speed >= window_steps:
            trapped = True
            break

    if not completed and not collided and steps >= config.max_steps:
        trapped = True
    duration = steps * dt
    progress = 1.0 if completed else float(np.clip((d0 - state.distance_to(goal)) / d0, 0.0, 1.0))
    return MissionResult(
        completed=completed, trapped=trapped, collided=collided, distance=distance,
        mean_speed=distance / duration if duration > 0 else 0.0,
        gp_assist=assisted / steps if steps else (1.0 if config.mode == "SM" else 0.0),
        progress=progress, steps=steps, duration=duration,
        wall_time=time.perf_counter() - t_wall, trajectory=trajectory,
        name=config.name, seed=config.seed, last_recommendation=last_rec)


def _mean_std(values) -> dict:
    a = np.asarray(values, dtype=float)
    if len(a) == 0:
        return {"mean": float("nan"), "std": float("nan")}
    return {"mean": float(a.mean()), "std": float(a.std())}


def summarize(results: Sequence[MissionResult]) -> dict:
    """Batch metrics.  T_c gives partial credit for progress on unfinished trials."""
    tc = [100.0 * r.progress for r in results]
    return {
        "trials": len(results),
        "completed": int(sum(r.completed for r in results)),
        "T_c": _mean_std(tc),
        "d_av": _mean_std([r.distance for r in results]),
        "v_av": _mean_std([r.mean_speed for r in results]),
        "A_gp": _mean_std([r.gp_assist for r in results]),
        "R_lm": int(sum(r.trapped for r in results)),
        "collisions": int(sum(r.collided for r in results)),
        "wall_time": float(sum(r.wall_time for r in results)),
    }


@dataclass
class BatchResult:
    summaries: dict
    results: dict

    def to_dict(self) -> dict:
        return {"summaries": self.summaries,
                "trials": {k: [r.summary() for r in v] for k, v in self.results.items()}}


def trial_config(config: MissionConfig, trial: int) -> MissionConfig:
    """Config of trial ``trial``: planner seed and world seed both advance by ``trial``."""
    world = config.world
    if isinstance(world, dict) and "obstacles" not in world:
        world = dict(world, seed=int(world.get("seed", 0)) + trial)
    return replace(config, seed=config.seed + trial, world=world)


def run_batch(configs: Sequence[MissionConfig], trials: int, out_dir=None) -> BatchResult:
    """Run ``trials`` seeded trials of every config.

    With ``out_dir`` the metrics go to ``metrics.json`` and each trial's
    trajectory to ``<name>_trial<k>.csv``.
    """
    if trials < 1:
        raise ConfigError("trials must be at least 1")
    names = [c.name for c in configs]
    if len(set(names)) != len(names):
        raise ConfigError("mission names must be unique within a batch")
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    results, summaries = {}, {}
    for cfg in configs:
        runs = []
        for k in range(trials):
            res = run_mission(trial_config(cfg, k))
            log.info("%s trial %d: %s in %.1f s", cfg.name, k, res.status, res.wall_time)
            if out is not None:
                res.write_csv(out / f"{cfg.name}_trial{k}.csv")
            runs.append(res)
        results[cfg.name] = runs
        summaries[cfg.name] = summarize(runs)
    batch = BatchResult(summaries, results)
    if out is not None:
        (out / "metrics.json").write_text(json.dumps(batch.to_dict(), indent=2))
    return batch
