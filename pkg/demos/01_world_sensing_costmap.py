"""Walk through the simulator: world, scan, costmap, and a few Euler steps.

Run:  python demos/01_world_sensing_costmap.py [out_dir]
Writes sensing.png into out_dir (default: demo_out/).
"""

import math
import sys
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
from matplotlib.patches import Rectangle

from gpmppi.harness import desk_sensor
from gpmppi.sim import (FREE, OCCUPIED, ControlInput, RobotState, build_costmap, collision_state,
                        make_world, simulate_lidar, step_dynamics)

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
out.mkdir(parents=True, exist_ok=True)

# The maze world puts a U-shaped room between start and goal.  Red boxes are
# invisible to the recommender but not to the costmap.
world = make_world("maze", seed=0)
print(f"maze: {len(world.obstacles)} obstacles, start {world.start}, goal {world.goal}")

# Drive straight at the trap for two seconds.
state = world.start
for _ in range(60):
    state = step_dynamics(state, ControlInput(1.5, 0.0), 1 / 30)
print(f"after 2 s at 1.5 m/s: x={state.x:.2f} y={state.y:.2f}")

sensor = desk_sensor()
cloud = simulate_lidar(world, state, sensor)
hidden = simulate_lidar(world, state, sensor, recommender_only=True)
print(f"scan: {len(cloud)} returns over {len(sensor.elevations)} rings, "
      f"{len(cloud) - len(hidden)} of them from recommender-invisible boxes")

cmap = build_costmap(cloud, state)
print(f"costmap {cmap.width}x{cmap.height} @ {cmap.resolution} m: "
      f"{(cmap.cells == OCCUPIED).sum()} occupied, {(cmap.cells == FREE).sum()} free")
print("collision at current pose:", collision_state(state, cmap))

fig, (a, b) = plt.subplots(1, 2, figsize=(12, 5.5))
for o in world.obstacles:
    x0, y0, x1, y1 = o.bounds
    a.add_patch(Rectangle((x0, y0), x1 - x0, y1 - y0, color="0.2" if o.recommender_visible else "tab:red"))
pts = cloud.to_cartesian()
c, s = math.cos(state.theta), math.sin(state.theta)
a.plot(state.x + c * pts[:, 0] - s * pts[:, 1], state.y + s * pts[:, 0] + c * pts[:, 1], ".", ms=1)
a.plot(state.x, state.y, "go")
a.plot(world.goal.x, world.goal.y, "g*", ms=12)
a.set_xlim(world.bounds[0], world.bounds[2])
a.set_ylim(world.bounds[1], world.bounds[3])
a.set_aspect("equal")
a.set_title("world and scan")
extent = (cmap.origin[0], cmap.origin[0] + cmap.width * cmap.resolution,
          cmap.origin[1], cmap.origin[1] + cmap.height * cmap.resolution)
b.imshow(np.where(cmap.cells == OCCUPIED, 0, np.where(cmap.cells == FREE, 2, 1)), origin="lower",
         extent=extent, cmap="gray")
b.set_title("robot-centred costmap (black occupied, grey unknown)")
fig.tight_layout()
fig.savefig(out / "sensing.png", dpi=100)
print("wrote", out / "sensing.png")
