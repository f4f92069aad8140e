"""The pieces of one MPPI iteration, checked against hand-computed values.

Run:  python demos/02_mppi_building_blocks.py
"""

import numpy as np

from gpmppi.mppi import (MppiParams, MppiPlanner, importance_weights, rollout_cost,
                         savgol_coefficients, sg_filter, shift_sequence, update_controls)
from gpmppi.sim import ControlInput, RobotState, step_dynamics

p = MppiParams()
print(f"lambda={p.lam}  nu={p.nu}  gamma_u={p.gamma_u:.5f}  R=diag{tuple(np.round(np.diag(p.R), 3))}")

# Cost of a rollout that sits still 1 m from the goal for one step:
# running 2.5 plus terminal 2.5.
one = MppiParams(N=1)
print("static rollout cost:", rollout_cost(RobotState(1, 0, 0), np.zeros((1, 2)), np.zeros((1, 2)),
                                           None, RobotState(0, 0, 0), one))

# Importance weights only depend on cost differences.
costs = np.array([3.0, 4.0, 10.0])
print("weights:", np.round(importance_weights(costs, 1.0), 4),
      "shifted:", np.round(importance_weights(costs + 1e6, 1.0), 4))
noise = np.random.default_rng(0).normal(size=(2, 3, 2))
print("lambda -> 0 picks the cheapest perturbation:",
      np.allclose(update_controls(np.zeros((3, 2)), noise, [0.0, 10.0], 1e-6), noise[0]))

# Savitzky-Golay: the 5-point quadratic kernel, and exactness on a parabola.
print("5-point kernel * 35:", np.round(savgol_coefficients(5, 2) * 35, 9))
k = np.arange(60.0)
parabola = 0.01 * k ** 2 - 0.3 * k + 1.0
print("max change on a parabola:", np.abs(sg_filter(parabola, 2, 51) - parabola).max())
print("shift [1,2,3] ->", shift_sequence(np.array([1, 2, 3])))

# A full planner driving to a goal 3 m ahead in free space.
planner = MppiPlanner(MppiParams(M=512, N=60), seed=0)
s, goal = RobotState(0, 0, 0), RobotState(3, 0, 0)
for i in range(150):
    info = planner.step(s, None, goal)
    s = step_dynamics(s, ControlInput(*info.u0), planner.params.dt)
    if i % 30 == 0:
        print(f"t={i / 30:4.1f}s  x={s.x:5.2f} y={s.y:5.2f}  mu_u={info.mu_u:.2f}  ess={info.ess:6.1f}")
print(f"final distance to goal: {s.distance_to(goal):.3f} m")
