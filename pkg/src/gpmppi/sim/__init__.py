"""Deterministic 2D world simulator: kinematics, ray-cast sensing, local costmaps."""

from .costmap import FREE, OCCUPIED, UNKNOWN, Costmap2D, build_costmap, collision_state
from .dynamics import ControlInput, RobotState, step_dynamics, step_dynamics_batch, wrap_angle
from .lidar import PointCloud, SensorConfig, ray_distances, simulate_lidar
from .world import Obstacle, World, make_world, u_room

__all__ = [
    "FREE", "OCCUPIED", "UNKNOWN", "Costmap2D", "build_costmap", "collision_state",
    "ControlInput", "RobotState", "step_dynamics", "step_dynamics_batch", "wrap_angle",
    "PointCloud", "SensorConfig", "ray_distances", "simulate_lidar",
    "Obstacle", "World", "make_world", "u_room",
]
