"""First-hit ray casting against circles and axis-aligned rectangles."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import RobotState, wrap_angle
from .world import World


@dataclass(frozen=True)
class SensorConfig:
    n_azimuth: int = 360
    elevations: tuple = tuple(np.deg2rad(np.linspace(0.0, 15.0, 4)))
    r_max: float = 5.0
    range_noise_std: float = 0.0
    noise_seed: int = 0

    def azimuths(self) -> np.ndarray:
        """Ray azimuths in the sensor frame, ascending over (-pi, pi]."""
        n = self.n_azimuth
        return wrap_angle(2.0 * np.pi * (np.arange(n) - (n - 1) // 2) / n)


@dataclass
class PointCloud:
    """Returns in the sensor frame as (azimuth, elevation, range) triples."""

    azimuth: np.ndarray = field(default_factory=lambda: np.empty(0))
    elevation: np.ndarray = field(default_factory=lambda: np.empty(0))
    range: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __len__(self):
        return len(self.range)

    @property
    def horizontal_range(self) -> np.ndarray:
        return self.range * np.cos(self.elevation)

    def to_cartesian(self) -> np.ndarray:
        """(n, 3) points in the sensor frame."""
        rc = self.horizontal_range
        return np.column_stack([rc * np.cos(self.azimuth), rc * np.sin(self.azimuth),
                                self.range * np.sin(self.elevation)])

    @classmethod
    def from_cartesian(cls, points) -> "PointCloud":
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
        r = np.sqrt(x * x + y * y + z * z)
        return cls(np.arctan2(y, x), np.arctan2(z, np.hypot(x, y)), r)

    def rotated(self, angle: float) -> "PointCloud":
        return PointCloud(wrap_angle(self.azimuth + angle), self.elevation.copy(), self.range.copy())


def ray_distances(world: World, ox: float, oy: float, directions: np.ndarray,
                  recommender_only: bool = False) -> np.ndarray:
    """Distance along each unit direction (world frame angle) to the first boundary hit.

    Returns ``inf`` for rays that hit nothing.
    """
    dx = np.cos(directions)
    dy = np.sin(directions)
    best = np.full(directions.shape, np.inf)
    for obs in world.obstacles:
        if recommender_only and not obs.recommender_visible:
            continue
        if obs.kind == "circle":
            t = _ray_circle(ox, oy, dx, dy, obs.x, obs.y, obs.radius)
        else:
            t = _ray_rect(ox, oy, dx, dy, *obs.bounds)
        np.minimum(best, t, out=best)
    return best


def _ray_circle(ox, oy, dx, dy, cx, cy, r):
    fx, fy = ox - cx, oy - cy
    b = dx * fx + dy * fy
    c = fx * fx + fy * fy - r * r
    disc = b * b - c
    t = np.full(dx.shape, np.inf)
    ok = disc >= 0.0
    root = -b[ok] - np.sqrt(disc[ok])
    t_ok = np.where(root > 0.0, root, np.inf)
    t[ok] = t_ok
    return t


def _ray_rect(ox, oy, dx, dy, xmin, ymin, xmax, ymax):
    with np.errstate(divide="ignore", invalid="ignore"):
        tx1 = (xmin - ox) / dx
        tx2 = (xmax - ox) / dx
        ty1 = (ymin - oy) / dy
        ty2 = (ymax - oy) / dy
    # rays parallel to a slab: inside it -> unconstrained, outside -> never hit
    par_x = dx == 0.0
    par_y = dy == 0.0
    inside_x = xmin <= ox <= xmax
    inside_y = ymin <= oy <= ymax
    txn = np.where(par_x, -np.inf if inside_x else np.inf, np.minimum(tx1, tx2))
    txf = np.where(par_x, np.inf if inside_x else -np.inf, np.maximum(tx1, tx2))
    tyn = np.where(par_y, -np.inf if inside_y else np.inf, np.minimum(ty1, ty2))
    tyf = np.where(par_y, np.inf if inside_y else -np.inf, np.maximum(ty1, ty2))
    tnear = np.maximum(txn, tyn)
    tfar = np.minimum(txf, tyf)
    hit = (tnear <= tfar) & (tnear > 0.0)
    return np.where(hit, tnear, np.inf)


def simulate_lidar(world: World, pose: RobotState, config: SensorConfig = SensorConfig(),
                   recommender_only: bool = False) -> PointCloud:
    """Scan the world from ``pose``.

    Obstacles are infinite vertical prisms, so a ring at elevation ``e`` sees
    a 3D range of ``horizontal / cos(e)``.  Returns beyond ``r_max`` are omitted.
    With ``recommender_only`` the obstacles flagged ``recommender_visible=False``
    are transparent.
    """
    if world.clearance(pose.x, pose.y) <= 0.0:
        raise ValueError(f"sensor pose ({pose.x:.3f}, {pose.y:.3f}) is inside an obstacle")
    az = config.azimuths()
    horizontal = ray_distances(world, pose.x, pose.y, az + pose.theta, recommender_only)
    elev = np.asarray(config.elevations, dtype=float)
    rng3d = horizontal[None, :] / np.cos(elev)[:, None]
    if config.range_noise_std > 0.0:
        gen = np.random.default_rng(config.noise_seed)
        rng3d = rng3d + gen.normal(0.0, config.range_noise_std, rng3d.shape)
    az_grid = np.broadcast_to(az[None, :], rng3d.shape)
    el_grid = np.broadcast_to(elev[:, None], rng3d.shape)
    keep = np.isfinite(rng3d) & (rng3d > 0.0) & (rng3d <= config.r_max)
    return PointCloud(az_grid[keep].copy(), el_grid[keep].copy(), rng3d[keep].copy())

