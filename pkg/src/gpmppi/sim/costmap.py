"""Robot-centred occupancy grid built from a single scan."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import ndimage

from .dynamics import RobotState
from .lidar import PointCloud

FREE = 0
OCCUPIED = 100
UNKNOWN = -1


@dataclass(eq=False)
class Costmap2D:
    """Grid of FREE / OCCUPIED / UNKNOWN cells, indexed ``cells[iy, ix]``.

    ``origin`` is the world position of the lower-left corner of cell (0, 0).
    """

    origin: tuple
    resolution: float
    cells: np.ndarray

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    @classmethod
    def unknown(cls, pose: RobotState, size: int = 200, resolution: float = 0.05) -> "Costmap2D":
        c = size // 2
        origin = (pose.x - (c + 0.5) * resolution, pose.y - (c + 0.5) * resolution)
        return cls(origin, resolution, np.full((size, size), UNKNOWN, dtype=np.int8))

    def world_to_cell(self, x, y):
        """Integer (ix, iy) of the cell containing each point; may be out of range."""
        ix = np.floor((np.asarray(x) - self.origin[0]) / self.resolution).astype(int)
        iy = np.floor((np.asarray(y) - self.origin[1]) / self.resolution).astype(int)
        return ix, iy

    def cell_center(self, ix, iy):
        return (self.origin[0] + (np.asarray(ix) + 0.5) * self.resolution,
                self.origin[1] + (np.asarray(iy) + 0.5) * self.resolution)

    def in_bounds(self, ix, iy):
        return (ix >= 0) & (ix < self.width) & (iy >= 0) & (iy < self.height)

    @cached_property
    def occupied_centers(self) -> np.ndarray:
        iy, ix = np.nonzero(self.cells == OCCUPIED)
        return np.column_stack(self.cell_center(ix, iy))

    @cached_property
    def obstacle_distance(self) -> np.ndarray:
        """Distance [m] from every cell centre to the nearest occupied cell centre."""
        occ = self.cells == OCCUPIED
        if not occ.any():
            return np.full(self.cells.shape, np.inf)
        return ndimage.distance_transform_edt(~occ) * self.resolution

    def distance_at(self, x, y) -> np.ndarray:
        """Obstacle distance bilinearly interpolated between cell centres.

        Points outside the grid get ``inf`` (nothing is known there).
        """
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        out = np.full(x.shape, np.inf)
        field = self.obstacle_distance
        if not np.isfinite(field).any():
            return out
        fx = (x - self.origin[0]) / self.resolution - 0.5
        fy = (y - self.origin[1]) / self.resolution - 0.5
        inside = (fx >= -0.5) & (fx < self.width - 0.5) & (fy >= -0.5) & (fy < self.height - 0.5)
        # clamp the half cell at the border, then lerp along x and y on the flat field
        fx = np.clip(fx[inside], 0.0, self.width - 1.0)
        fy = np.clip(fy[inside], 0.0, self.height - 1.0)
        i0 = np.minimum(fx.astype(np.intp), self.width - 2)
        j0 = np.minimum(fy.astype(np.intp), self.height - 2)
        tx, ty = fx - i0, fy - j0
        flat = field.ravel()
        k = j0 * self.width + i0
        f00, f01 = flat[k], flat[k + 1]
        f10, f11 = flat[k + self.width], flat[k + self.width + 1]
        lo = f00 + tx * (f01 - f00)
        hi = f10 + tx * (f11 - f10)
        out[inside] = lo + ty * (hi - lo)
        return out

    def collides(self, x, y, footprint_radius: float) -> np.ndarray:
        """Vectorised collision lookup on the interpolated distance field.

        Used inside rollouts; the error against the exact disc test
        (:func:`collision_state`) is below one cell.
        """
        return self.distance_at(x, y) <= footprint_radius

    def to_pgm(self, path) -> None:
        """Write a binary PGM (P5): occupied black, free white, unknown grey."""
        img = np.full(self.cells.shape, 205, dtype=np.uint8)
        img[self.cells == FREE] = 254
        img[self.cells == OCCUPIED] = 0
        img = img[::-1]                      # row 0 at the top of the image
        header = f"P5\n# resolution {self.resolution} origin {self.origin[0]} {self.origin[1]}\n"
        header += f"{self.width} {self.height}\n255\n"
        Path(path).write_bytes(header.encode("ascii") + img.tobytes())


def build_costmap(cloud: PointCloud, pose: RobotState, size: int = 200,
                  resolution: float = 0.05) -> Costmap2D:
    """Project a scan taken at ``pose`` onto a world-aligned grid centred on the robot.

    Endpoint cells become occupied, cells strictly between the sensor cell and
    the endpoint become free, everything else stays unknown.  Returns outside
    the grid are dropped.
    """
    cmap = Costmap2D.unknown(pose, size, resolution)
    if len(cloud) == 0:
        return cmap
    c = size // 2
    rh = cloud.horizontal_range
    ang = cloud.azimuth + pose.theta
    di = np.rint(rh * np.cos(ang) / resolution).astype(int)
    dj = np.rint(rh * np.sin(ang) / resolution).astype(int)
    ex, ey = c + di, c + dj
    keep = cmap.in_bounds(ex, ey)
    di, dj, ex, ey = di[keep], dj[keep], ex[keep], ey[keep]
    if len(di) == 0:
        return cmap
    n = np.maximum(np.abs(di), np.abs(dj))
    steps = np.arange(1, max(int(n.max()), 1))
    if len(steps):
        # rounding-based line trace; symmetric under point reflection of the ray
        frac = steps[None, :] / np.maximum(n, 1)[:, None]
        tx = c + np.rint(frac * di[:, None]).astype(int)
        ty = c + np.rint(frac * dj[:, None]).astype(int)
        valid = steps[None, :] < n[:, None]
        cmap.cells[ty[valid], tx[valid]] = FREE
    cmap.cells[ey, ex] = OCCUPIED
    return cmap


def collision_state(state: RobotState, costmap: Costmap2D, footprint_radius: float = 0.3) -> bool:
    """Exact disc test: any occupied cell centre within ``footprint_radius`` of (x, y)."""
    if footprint_radius <= 0:
        raise ValueError("footprint_radius must be positive")
    ix, iy = costmap.world_to_cell(state.x, state.y)
    if not costmap.in_bounds(ix, iy):
        return False
    centers = costmap.occupied_centers
    if len(centers) == 0:
        return False
    d2 = (centers[:, 0] - state.x) ** 2 + (centers[:, 1] - state.y) ** 2
    return bool(np.any(d2 <= footprint_radius ** 2))
