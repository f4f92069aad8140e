"""GP-MPPI: MPPI local planning with a sparse-GP subgoal recommender.

Modules
-------
sim        deterministic 2D worlds, lidar ray casting, local costmaps
mppi       sampling-based MPC (rollouts, softmax update, Savitzky-Golay smoothing)
sgp        exact and sparse (collapsed variational) GP regression
subgoal    occupancy surface, variance frontiers, subgoal scoring
harness    mission loop, SM/RM arbitration, batch metrics
"""

from .harness import MissionConfig, MissionResult, run_batch, run_mission, select_target
from .mppi import MppiParams, MppiPlanner
from .sgp import KernelParams, SgpModel, TrainingSet, fit, gp_predict, sgp_predict
from .subgoal import OccupancySurfaceConfig, recommend

__version__ = "0.1.0"

__all__ = [
    "MissionConfig", "MissionResult", "run_batch", "run_mission", "select_target",
    "MppiParams", "MppiPlanner",
    "KernelParams", "SgpModel", "TrainingSet", "fit", "gp_predict", "sgp_predict",
    "OccupancySurfaceConfig", "recommend",
]
