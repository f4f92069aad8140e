"""2D worlds: obstacle records, scenario generators and JSON round-tripping.

Worlds are plain data.  Three generators are provided:

* ``forest``   -- scattered circular trunks at a requested density,
* ``maze``     -- U-shaped rooms, one of them sitting between start and goal
                  with its opening toward the start (a local-minimum trap),
                  plus small boxes that the subgoal recommender cannot see,
* ``corridor`` -- an L-shaped hallway with box clutter.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .dynamics import RobotState

WORLD_KINDS = ("forest", "maze", "corridor", "empty")


@dataclass(frozen=True)
class Obstacle:
    """A circle (``radius``) or an axis-aligned rectangle (``half_extents``)."""

    kind: str
    x: float
    y: float
    radius: float = 0.0
    half_extents: tuple = (0.0, 0.0)
    recommender_visible: bool = True

    def __post_init__(self):
        if self.kind not in ("circle", "rect"):
            raise ValueError(f"unknown obstacle kind {self.kind!r}")

    @classmethod
    def circle(cls, x, y, radius, recommender_visible=True):
        return cls("circle", float(x), float(y), radius=float(radius),
                   recommender_visible=recommender_visible)

    @classmethod
    def rect(cls, xmin, ymin, xmax, ymax, recommender_visible=True):
        """Rectangle from its corner coordinates."""
        hx, hy = 0.5 * (xmax - xmin), 0.5 * (ymax - ymin)
        if hx <= 0 or hy <= 0:
            raise ValueError("rectangle must have positive extent")
        return cls("rect", 0.5 * (xmin + xmax), 0.5 * (ymin + ymax),
                   half_extents=(float(hx), float(hy)),
                   recommender_visible=recommender_visible)

    @property
    def bounds(self):
        if self.kind == "circle":
            r = self.radius
            return (self.x - r, self.y - r, self.x + r, self.y + r)
        hx, hy = self.half_extents
        return (self.x - hx, self.y - hy, self.x + hx, self.y + hy)

    def signed_distance(self, px, py):
        """Euclidean signed distance from points to the boundary (negative inside)."""
        px = np.asarray(px, dtype=float)
        py = np.asarray(py, dtype=float)
        if self.kind == "circle":
            return np.hypot(px - self.x, py - self.y) - self.radius
        hx, hy = self.half_extents
        qx = np.abs(px - self.x) - hx
        qy = np.abs(py - self.y) - hy
        outside = np.hypot(np.maximum(qx, 0.0), np.maximum(qy, 0.0))
        inside = np.minimum(np.maximum(qx, qy), 0.0)
        return outside + inside

    def area(self) -> float:
        if self.kind == "circle":
            return math.pi * self.radius ** 2
        return 4.0 * self.half_extents[0] * self.half_extents[1]

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "x": self.x, "y": self.y,
             "recommender_visible": self.recommender_visible}
        if self.kind == "circle":
            d["radius"] = self.radius
        else:
            d["half_extents"] = list(self.half_extents)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Obstacle":
        return cls(d["kind"], float(d["x"]), float(d["y"]),
                   radius=float(d.get("radius", 0.0)),
                   half_extents=tuple(float(v) for v in d.get("half_extents", (0.0, 0.0))),
                   recommender_visible=bool(d.get("recommender_visible", True)))


@dataclass(frozen=True)
class World:
    bounds: tuple                      # (xmin, ymin, xmax, ymax) in meters
    obstacles: tuple = ()
    seed: int = 0
    kind: str = "empty"
    start: Optional[RobotState] = None
    goal: Optional[RobotState] = None
    params: dict = field(default_factory=dict, compare=False)

    @property
    def area(self) -> float:
        xmin, ymin, xmax, ymax = self.bounds
        return (xmax - xmin) * (ymax - ymin)

    def contains(self, x, y) -> bool:
        xmin, ymin, xmax, ymax = self.bounds
        return xmin <= x <= xmax and ymin <= y <= ymax

    def clearance(self, x, y, recommender_only=False):
        """Distance from points to the nearest obstacle boundary (inf if none)."""
        x = np.asarray(x, dtype=float)
        best = np.full(x.shape, np.inf)
        for obs in self.obstacles:
            if recommender_only and not obs.recommender_visible:
                continue
            best = np.minimum(best, obs.signed_distance(x, y))
        return best

    def is_free(self, x, y, margin=0.0) -> bool:
        return bool(self.clearance(x, y) > margin)

    def to_dict(self) -> dict:
        def pose(p):
            return None if p is None else [p.x, p.y, p.theta]
        return {
            "kind": self.kind,
            "seed": self.seed,
            "bounds": list(self.bounds),
            "start": pose(self.start),
            "goal": pose(self.goal),
            "params": _jsonable(self.params),
            "obstacles": [o.to_dict() for o in self.obstacles],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "World":
        def pose(p):
            return None if p is None else RobotState(*map(float, p))
        return cls(
            bounds=tuple(float(b) for b in d["bounds"]),
            obstacles=tuple(Obstacle.from_dict(o) for o in d.get("obstacles", [])),
            seed=int(d.get("seed", 0)),
            kind=d.get("kind", "empty"),
            start=pose(d.get("start")),
            goal=pose(d.get("goal")),
            params=d.get("params", {}),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "World":
        return cls.from_dict(json.loads(text))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "World":
        return cls.from_json(Path(path).read_text())


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


FOREST_DEFAULTS = {
    "size": (20.0, 20.0),
    "density": 0.2,                 # trunks per square meter
    "radius_range": (0.1, 0.2),
    "min_gap": 1.0,                 # edge-to-edge spacing between trunks
    "start": (-8.0, -8.0, math.pi / 4),
    "goal": (8.0, 8.0, math.pi / 4),
    "clearance": 1.0,               # keep-out radius around start and goal
    "max_tries": 200000,
}

MAZE_DEFAULTS = {
    "size": (20.0, 20.0),
    "start": (-7.0, 0.0, 0.0),
    "goal": (7.0, 0.0, 0.0),
    # trap room: center offset from the start-goal midpoint, inner size, wall thickness
    "trap_offset": (0.0, 0.0),
    "room_width": 5.0,              # across the opening
    "room_depth": 4.0,              # opening to back wall
    "wall": 0.2,
    # decoy rooms as (x, y, opening) with opening in {"+x", "-x", "+y", "-y"}
    "extra_rooms": [(-6.5, 7.0, "-x"), (-6.5, -7.0, "-x")],
    "extra_room_size": (3.0, 2.5),
    "hidden_obstacles": 4,
    "hidden_size": (0.3, 0.5),
    "clearance": 1.5,
    "room_clearance": 1.0,          # hidden boxes stay this far from room walls
}

CORRIDOR_DEFAULTS = {
    "length": 9.0,                  # first leg (along +x)
    "height": 14.0,                 # second leg (along +y)
    "width": 2.4,
    "wall": 0.2,
    "boxes": 4,
    "box_size": (0.3, 0.5),
    "start": (0.0, 0.0, 0.0),
    "goal": (7.5, 13.0, math.pi / 2),
    "clearance": 1.2,
}


def make_world(kind: str, params: Optional[dict] = None, seed: int = 0) -> World:
    """Generate a world of the given kind.  Deterministic in ``(kind, params, seed)``."""
    if kind not in WORLD_KINDS:
        raise ValueError(f"unknown world kind {kind!r}; expected one of {WORLD_KINDS}")
    builders = {"forest": (_forest, FOREST_DEFAULTS), "maze": (_maze, MAZE_DEFAULTS),
                "corridor": (_corridor, CORRIDOR_DEFAULTS), "empty": (_empty, {"size": (20.0, 20.0)})}
    build, defaults = builders[kind]
    merged = dict(defaults)
    merged.update(params or {})
    rng = np.random.default_rng(seed)
    world = build(merged, rng)
    world = replace(world, seed=int(seed), kind=kind, params=merged)
    for p in (world.start, world.goal):
        if p is not None and not world.is_free(p.x, p.y):
            raise ValueError(f"{kind} world: start/goal {p} is not in free space")
    return world


def _arena(size):
    w, h = size
    return (-0.5 * w, -0.5 * h, 0.5 * w, 0.5 * h)


def _empty(p, rng):
    return World(bounds=_arena(p["size"]))


def _forest(p, rng):
    bounds = _arena(p["size"])
    xmin, ymin, xmax, ymax = bounds
    count = int(round(p["density"] * (xmax - xmin) * (ymax - ymin)))
    start = RobotState(*p["start"])
    goal = RobotState(*p["goal"])
    rlo, rhi = p["radius_range"]
    centers = np.empty((0, 2))
    radii = np.empty(0)
    tries = 0
    while len(radii) < count:
        tries += 1
        if tries > p["max_tries"]:
            raise ValueError(
                f"forest: could only place {len(radii)} of {count} trunks at "
                f"density {p['density']}; lower the density or min_gap")
        r = rng.uniform(rlo, rhi)
        c = rng.uniform([xmin + r, ymin + r], [xmax - r, ymax - r])
        if min(math.hypot(c[0] - s.x, c[1] - s.y) for s in (start, goal)) < p["clearance"] + r:
            continue
        if len(radii):
            gaps = np.hypot(*(centers - c).T) - radii - r
            if gaps.min() < p["min_gap"]:
                continue
        centers = np.vstack([centers, c])
        radii = np.append(radii, r)
    obstacles = tuple(Obstacle.circle(cx, cy, r) for (cx, cy), r in zip(centers, radii))
    return World(bounds=bounds, obstacles=obstacles, start=start, goal=goal)


def u_room(cx, cy, width, depth, wall, opening, visible=True):
    """Three walls enclosing a ``width`` x ``depth`` interior centred at (cx, cy).

    ``opening`` names the open side: "+x", "-x", "+y" or "-y".
    """
    hw, hd = 0.5 * width, 0.5 * depth
    if opening in ("-x", "+x"):
        sign = 1.0 if opening == "-x" else -1.0   # back wall on the side opposite the opening
        xb = cx + sign * (hd + 0.5 * wall)
        back = Obstacle.rect(xb - 0.5 * wall, cy - hw - wall, xb + 0.5 * wall, cy + hw + wall, visible)
        x0, x1 = cx - hd, cx + hd
        sides = [Obstacle.rect(x0, cy + hw, x1, cy + hw + wall, visible),
                 Obstacle.rect(x0, cy - hw - wall, x1, cy - hw, visible)]
    elif opening in ("-y", "+y"):
        sign = 1.0 if opening == "-y" else -1.0
        yb = cy + sign * (hd + 0.5 * wall)
        back = Obstacle.rect(cx - hw - wall, yb - 0.5 * wall, cx + hw + wall, yb + 0.5 * wall, visible)
        y0, y1 = cy - hd, cy + hd
        sides = [Obstacle.rect(cx + hw, y0, cx + hw + wall, y1, visible),
                 Obstacle.rect(cx - hw - wall, y0, cx - hw, y1, visible)]
    else:
        raise ValueError(f"bad opening {opening!r}")
    return [back] + sides


def _facing(dx, dy):
    """Axis direction label closest to the vector (dx, dy)."""
    if abs(dx) >= abs(dy):
        return "+x" if dx > 0 else "-x"
    return "+y" if dy > 0 else "-y"


def _maze(p, rng):
    bounds = _arena(p["size"])
    start = RobotState(*p["start"])
    goal = RobotState(*p["goal"])
    mx = 0.5 * (start.x + goal.x) + p["trap_offset"][0]
    my = 0.5 * (start.y + goal.y) + p["trap_offset"][1]
    opening = _facing(start.x - mx, start.y - my)
    obstacles = u_room(mx, my, p["room_width"], p["room_depth"], p["wall"], opening)
    ew, ed = p["extra_room_size"]
    for ex, ey, eo in p["extra_rooms"]:
        obstacles += u_room(ex, ey, ew, ed, p["wall"], eo)

    lo, hi = p["hidden_size"]
    xmin, ymin, xmax, ymax = bounds
    placed = 0
    tries = 0
    while placed < p["hidden_obstacles"]:
        tries += 1
        if tries > 20000:
            raise ValueError("maze: cannot place hidden obstacles")
        s = rng.uniform(lo, hi)
        cx, cy = rng.uniform([xmin + 1, ymin + 1], [xmax - 1, ymax - 1])
        if min(math.hypot(cx - q.x, cy - q.y) for q in (start, goal)) < p["clearance"] + s:
            continue
        if min(o.signed_distance(cx, cy) for o in obstacles) < p["room_clearance"] + s:
            continue
        # keep the trap interior and its mouth clear so the trap stays a trap
        if _inside_box(cx, cy, mx, my, p["room_width"] + 2.0, p["room_depth"] + 2.0, opening):
            continue
        obstacles.append(Obstacle.rect(cx - s / 2, cy - s / 2, cx + s / 2, cy + s / 2,
                                       recommender_visible=False))
        placed += 1
    return World(bounds=bounds, obstacles=tuple(obstacles), start=start, goal=goal)


def _inside_box(x, y, cx, cy, width, depth, opening):
    if opening in ("-x", "+x"):
        return abs(x - cx) <= depth / 2 + 1.0 and abs(y - cy) <= width / 2
    return abs(y - cy) <= depth / 2 + 1.0 and abs(x - cx) <= width / 2


def _corridor(p, rng):
    L, H, w, t = p["length"], p["height"], p["width"], p["wall"]
    gx = p["goal"][0]
    hw = 0.5 * w
    # first leg runs along +x at y in [-hw, hw]; second leg runs along +y at x in [gx-hw, gx+hw]
    x_end = gx + hw
    walls = [
        Obstacle.rect(-1.5 - t, -hw - t, x_end + t, -hw),          # south wall of leg 1
        Obstacle.rect(-1.5 - t, hw, gx - hw, hw + t),               # north wall of leg 1
        Obstacle.rect(-1.5 - t, -hw, -1.5, hw),                     # west end cap
        Obstacle.rect(x_end, -hw, x_end + t, H),                    # east wall of leg 2
        Obstacle.rect(gx - hw - t, hw, gx - hw, H),                 # west wall of leg 2
    ]
    start = RobotState(*p["start"])
    goal = RobotState(*p["goal"])
    boxes = []
    lo, hi = p["box_size"]
    tries = 0
    while len(boxes) < p["boxes"]:
        tries += 1
        if tries > 20000:
            raise ValueError("corridor: cannot place boxes")
        s = rng.uniform(lo, hi)
        if rng.uniform() < L / (L + H):
            cx, cy = rng.uniform(0.5, gx - hw), rng.uniform(-hw + s, hw - s)
        else:
            cx, cy = rng.uniform(gx - hw + s, gx + hw - s), rng.uniform(hw + 0.5, H - 1.0)
        if min(math.hypot(cx - q.x, cy - q.y) for q in (start, goal)) < p["clearance"] + s:
            continue
        # leave a passage at least 0.9 m wide beside each box
        box = Obstacle.rect(cx - s / 2, cy - s / 2, cx + s / 2, cy + s / 2)
        if any(b.signed_distance(cx, cy) < 1.2 + s for b in boxes):
            continue
        if _passage_width(cx, cy, s, gx, hw) < 0.9:
            continue
        boxes.append(box)
    xmin, ymin = -2.5, -hw - 1.5
    xmax, ymax = x_end + 1.5, H + 0.5
    return World(bounds=(xmin, ymin, xmax, ymax), obstacles=tuple(walls + boxes),
                 start=start, goal=goal)


def _passage_width(cx, cy, s, gx, hw):
    if cy <= hw and cx < gx - hw:   # leg 1: measure across y
        return max((hw - (cy + s / 2)), ((cy - s / 2) + hw))
    return max((gx + hw - (cx + s / 2)), ((cx - s / 2) - (gx - hw)))
