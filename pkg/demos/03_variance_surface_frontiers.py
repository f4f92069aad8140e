"""From a scan to a subgoal: occupancy surface, SGP variance, frontiers, scoring.

The robot stands in the mouth of the maze trap looking at the goal behind
the back wall.  Directions without returns keep a high predictive variance;
the cheapest frontier under the distance/heading cost becomes the subgoal.

Run:  python demos/03_variance_surface_frontiers.py [out_dir]
"""

import math
import sys
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from gpmppi.harness import desk_sensor, desk_surface
from gpmppi.sim import RobotState, make_world, simulate_lidar
from gpmppi.subgoal import cloud_to_training_set, recommend_detailed

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
out.mkdir(parents=True, exist_ok=True)

world = make_world("maze", seed=0)
robot = RobotState(-1.0, 0.0, 0.0)
cfg = desk_surface()
cloud = simulate_lidar(world, robot, desk_sensor(cfg.r_oc), recommender_only=True)
train = cloud_to_training_set(cloud, cfg)
print(f"{len(cloud)} returns -> {len(train)} training points, occupancy in "
      f"[{train.targets.min():.2f}, {train.targets.max():.2f}]")

rec = recommend_detailed(cloud, robot, world.goal, cfg, seed=0)
surf, model = rec.surface, rec.surface.model
print(f"SGP: m_s={model.num_inducing}  sigma_f2={model.kernel.sigma_f2:.3f}  "
      f"l={model.kernel.length_scale:.3f}  alpha={model.kernel.alpha:.2f}  "
      f"ELBO {model.initial_elbo:.1f} -> {model.elbo:.1f}")
print(f"threshold V_th = {surf.threshold:.4f}; {surf.mask.mean():.0%} of cells above it")
for i, f in enumerate(rec.frontiers):
    mark = "  <- subgoal" if i == rec.optimal_index else ""
    print(f"  frontier az={math.degrees(f.azimuth):7.1f} deg  cells={f.n_cells:3d}  J={f.cost:6.2f}{mark}")
sg = rec.subgoal
print(f"subgoal ({sg.x:.2f}, {sg.y:.2f}) heading {math.degrees(sg.theta):.1f} deg")

fig, ax = plt.subplots(figsize=(10, 3.5))
im = ax.pcolormesh(np.degrees(surf.azimuths), np.degrees(surf.elevations), surf.variance, shading="nearest")
ax.contour(np.degrees(surf.azimuths), np.degrees(surf.elevations), surf.mask.astype(float), [0.5], colors="w")
for i, f in enumerate(rec.frontiers):
    ax.plot(math.degrees(f.azimuth), math.degrees(f.elevation), "r*" if i == rec.optimal_index else "wx", ms=10)
fig.colorbar(im, ax=ax, label="predictive variance")
ax.set_xlabel("azimuth [deg]")
ax.set_ylabel("elevation [deg]")
fig.tight_layout()
fig.savefig(out / "variance_surface.png", dpi=100)
print("wrote", out / "variance_surface.png")
