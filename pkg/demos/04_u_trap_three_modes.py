"""Baseline MPPI, recovery mode and simple mode on the same maze world.

Baseline drives into the U-shaped room and stalls.  RM switches to GP
subgoals once the predicted speed collapses; SM follows subgoals all along.
With the default seed 0 SM also stalls: it parks against the end of the
room's lower wall, a pose from which the small sampling noise finds no
rollout that turns away first.  Seeds 1-4 show SM escaping.

Run:  python demos/04_u_trap_three_modes.py [seed] [out_dir]     (about a minute)
"""

import sys
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
from matplotlib.patches import Rectangle

from gpmppi.harness import MissionConfig, run_mission

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
out = Path(sys.argv[2] if len(sys.argv) > 2 else "demo_out")
out.mkdir(parents=True, exist_ok=True)

fig, ax = plt.subplots(figsize=(8, 8))
world = None
for mode, color in (("baseline", "tab:gray"), ("RM", "tab:blue"), ("SM", "tab:green")):
    cfg = MissionConfig(world={"kind": "maze", "seed": seed}, mode=mode, seed=seed, name=mode)
    world = world or cfg.build_world()
    res = run_mission(cfg)
    print(f"{mode:8s} {res.status:9s} d={res.distance:5.1f} m  v_av={res.mean_speed:.2f} m/s  "
          f"A_gp={res.gp_assist:.2f}  progress={res.progress:.0%}  ({res.wall_time:.0f} s)")
    xy = np.array([r[1:3] for r in res.trajectory])
    ax.plot(xy[:, 0], xy[:, 1], color=color, label=f"{mode}: {res.status}")
    sub = np.array([r[6] == "subgoal" for r in res.trajectory])
    ax.plot(xy[sub, 0], xy[sub, 1], ".", color=color, ms=2)

for o in world.obstacles:
    x0, y0, x1, y1 = o.bounds
    ax.add_patch(Rectangle((x0, y0), x1 - x0, y1 - y0, color="0.2" if o.recommender_visible else "tab:red"))
ax.plot(world.goal.x, world.goal.y, "k*", ms=14)
ax.set_xlim(world.bounds[0], world.bounds[2])
ax.set_ylim(world.bounds[1], world.bounds[3])
ax.set_aspect("equal")
ax.legend()
ax.set_title("dots: steps tracking a GP subgoal")
fig.savefig(out / "u_trap.png", dpi=100)
print("wrote", out / "u_trap.png")
