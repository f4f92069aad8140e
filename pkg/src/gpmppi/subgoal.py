"""GP-subgoal recommender.

A scan becomes an occupancy surface over (azimuth, elevation): every return
at range ``r`` carries occupancy ``r_oc - r``.  A sparse GP is fitted to it
and its predictive variance is evaluated on a regular grid.  Directions
without returns keep a high variance.  Connected high-variance regions are
the GP frontiers; the cheapest one under

    J = k_dst * |frontier - goal| + k_dir * bearing^2

becomes the subgoal.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy import ndimage

from .sgp import FactorizationError, FitConfig, KernelParams, SgpModel, TrainingSet, fit, sgp_predict
from .sim.dynamics import RobotState, wrap_angle
from .sim.lidar import PointCloud


class RecommenderError(RuntimeError):
    """The SGP fit failed; the caller should keep its previous subgoal."""


@dataclass
class OccupancySurfaceConfig:
    r_oc: float = 5.0
    n_azimuth: int = 90
    n_elevation: int = 4
    elevation_range: tuple = (0.0, math.radians(15.0))
    k_m: float = 0.4
    k_dst: float = 5.0
    k_dir: float = 4.0
    m_s: int = 100
    min_cells: int = 3
    # components wider than max_span are cut into sectors of sector_width,
    # centred on multiples of sector_width (one sector looks straight ahead)
    max_span: float = math.pi / 2
    sector_width: float = math.pi / 6
    prior_variance: float = 1.0         # surface variance when there is no data at all
    max_points: Optional[int] = None    # stride-subsample larger training sets
    fit_iters: int = 200
    noise_variance: float = 0.01

    def __post_init__(self):
        if self.r_oc <= 0:
            raise ValueError("r_oc must be positive")
        if self.n_azimuth < 3 or self.n_elevation < 1:
            raise ValueError("grid needs at least 3 azimuth cells and 1 elevation cell")
        lo, hi = self.elevation_range
        if hi < lo:
            raise ValueError("elevation range is reversed")
        self.elevation_range = (float(lo), float(hi))

    def azimuth_grid(self) -> np.ndarray:
        """Cell azimuths from -pi in equal steps; the grid closes on itself at +pi."""
        return -np.pi + 2.0 * np.pi * np.arange(self.n_azimuth) / self.n_azimuth

    def elevation_grid(self) -> np.ndarray:
        lo, hi = self.elevation_range
        return np.linspace(lo, hi, self.n_elevation)

    def query_points(self) -> np.ndarray:
        """(n_elevation * n_azimuth, 2) grid inputs, row-major over (elevation, azimuth)."""
        az, el = np.meshgrid(self.azimuth_grid(), self.elevation_grid())
        return np.column_stack([az.ravel(), el.ravel()])


@dataclass
class OccupancyTrainingSet:
    inputs: np.ndarray
    targets: np.ndarray

    def __len__(self):
        return len(self.targets)

    def to_training_set(self, noise_variance: float) -> TrainingSet:
        return TrainingSet(self.inputs, self.targets, noise_variance)


def cloud_to_training_set(cloud: PointCloud, config: OccupancySurfaceConfig) -> OccupancyTrainingSet:
    """Occupancy ``r_oc - r`` per return; returns beyond ``r_oc`` count as free (0).

    Returns outside the elevation band are dropped.
    """
    lo, hi = config.elevation_range
    tol = 1e-9
    keep = (cloud.elevation >= lo - tol) & (cloud.elevation <= hi + tol)
    az = wrap_angle(np.asarray(cloud.azimuth, dtype=float)[keep])
    el = np.asarray(cloud.elevation, dtype=float)[keep]
    occ = np.maximum(config.r_oc - np.asarray(cloud.range, dtype=float)[keep], 0.0)
    return OccupancyTrainingSet(np.column_stack([np.atleast_1d(az), el]).reshape(-1, 2), occ)


@dataclass
class VarianceSurface:
    azimuths: np.ndarray
    elevations: np.ndarray
    mean: np.ndarray              # (n_elevation, n_azimuth)
    variance: np.ndarray          # (n_elevation, n_azimuth)
    threshold: float
    k_m: float
    model: Optional[SgpModel] = None

    @property
    def mask(self) -> np.ndarray:
        return self.variance > self.threshold

    def to_dict(self) -> dict:
        return {
            "azimuths": self.azimuths.tolist(),
            "elevations": self.elevations.tolist(),
            "mean": self.mean.tolist(),
            "variance": self.variance.tolist(),
            "threshold": self.threshold,
            "k_m": self.k_m,
        }


def variance_threshold(variance: np.ndarray, k_m: float) -> float:
    return float(k_m * np.mean(variance))


def build_variance_surface(train: OccupancyTrainingSet, config: OccupancySurfaceConfig,
                           m_s: Optional[int] = None, seed: int = 0,
                           init_kernel: Optional[KernelParams] = None) -> VarianceSurface:
    """Fit the SGP and evaluate its mean and latent variance on the query grid.

    An empty training set gives a flat prior surface, so every cell is above
    the threshold.
    """
    az, el = config.azimuth_grid(), config.elevation_grid()
    shape = (len(el), len(az))
    if len(train) == 0:
        var = np.full(shape, float(config.prior_variance))
        return VarianceSurface(az, el, np.zeros(shape), var, variance_threshold(var, config.k_m),
                               config.k_m)
    inputs, targets = train.inputs, train.targets
    if config.max_points is not None and len(train) > config.max_points:
        stride = int(math.ceil(len(train) / config.max_points))
        inputs, targets = inputs[::stride], targets[::stride]
    ts = TrainingSet(inputs, targets, config.noise_variance)
    m = min(m_s if m_s is not None else config.m_s, len(ts))
    fc = FitConfig(max_iter=config.fit_iters, elevation_bounds=config.elevation_range,
                   init_kernel=init_kernel)
    try:
        model = fit(ts, m, init_seed=seed, config=fc)
    except FactorizationError as exc:
        raise RecommenderError(str(exc)) from exc
    pred = sgp_predict(model, config.query_points())
    var = pred.variance.reshape(shape)
    return VarianceSurface(az, el, pred.mean.reshape(shape), var,
                           variance_threshold(var, config.k_m), config.k_m, model)


@dataclass
class Frontier:
    azimuth: float                # sensor frame, i.e. bearing relative to the robot heading
    elevation: float
    n_cells: int
    x: float = float("nan")       # world-frame subgoal position at range r_oc
    y: float = float("nan")
    cost: float = float("nan")

    def to_dict(self) -> dict:
        return {"azimuth": self.azimuth, "elevation": self.elevation, "n_cells": self.n_cells,
                "x": self.x, "y": self.y, "cost": self.cost}


def _label_with_wrap(mask: np.ndarray) -> np.ndarray:
    """4-connected labels where the first and last azimuth columns are neighbours."""
    labels, n = ndimage.label(mask)
    if n == 0:
        return labels
    parent = np.arange(n + 1)

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for row in range(mask.shape[0]):
        a, b = labels[row, 0], labels[row, -1]
        if a and b:
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
    roots = np.array([find(i) for i in range(n + 1)])
    return roots[labels]


def _azimuth_span(cols: np.ndarray, n_az: int) -> float:
    """Angular width covered by a set of azimuth columns on the circle."""
    occupied = np.unique(cols)
    if len(occupied) == n_az:
        return 2.0 * np.pi
    gaps = np.diff(np.concatenate([occupied, occupied[:1] + n_az]))
    return 2.0 * np.pi * (n_az - (gaps.max() - 1)) / n_az


def _centroid(rows, cols, surface: VarianceSurface) -> tuple:
    w = surface.variance[rows, cols] - surface.threshold
    az = surface.azimuths[cols]
    el = surface.elevations[rows]
    if w.sum() <= 0:
        w = np.ones_like(w)
    c_az = math.atan2(float(np.sum(w * np.sin(az))), float(np.sum(w * np.cos(az))))
    c_el = float(np.sum(w * el) / np.sum(w))
    # a non-convex region can put its centroid on a low-variance cell: snap to the region
    i_az = int(np.rint((c_az + np.pi) / (2.0 * np.pi) * len(surface.azimuths))) % len(surface.azimuths)
    i_el = int(np.argmin(np.abs(surface.elevations - c_el)))
    member = np.any((rows == i_el) & (cols == i_az))
    if not member:
        d_az = wrap_angle(az - c_az)
        k = int(np.argmin(d_az ** 2 + (el - c_el) ** 2))
        c_az, c_el = float(az[k]), float(el[k])
    return float(wrap_angle(c_az)), c_el


def extract_frontiers(surface: VarianceSurface, min_cells: int = 3,
                      max_span: float = math.pi / 2, sector_width: float = math.pi / 6) -> List[Frontier]:
    """Centroids of the connected high-variance regions of the surface.

    Regions smaller than ``min_cells`` are noise and are dropped.  Regions
    wider than ``max_span`` in azimuth (in the limit, a ring around the whole
    robot) have no meaningful single centroid and are split into sectors.
    """
    mask = surface.mask
    labels = _label_with_wrap(mask)
    n_az = len(surface.azimuths)
    frontiers = []
    for lab in np.unique(labels[labels > 0]):
        rows, cols = np.nonzero(labels == lab)
        if len(rows) < min_cells:
            continue
        if _azimuth_span(cols, n_az) <= max_span:
            pieces = [(rows, cols)]
        else:
            sector = np.floor(np.mod(surface.azimuths[cols] + sector_width / 2.0, 2.0 * np.pi) / sector_width)
            pieces = [(rows[sector == s], cols[sector == s]) for s in np.unique(sector)]
        for r, c in pieces:
            if len(r) < min_cells:
                continue
            az, el = _centroid(r, c, surface)
            frontiers.append(Frontier(az, el, int(len(r))))
    return frontiers


def frontier_position(frontier: Frontier, robot: RobotState, r_oc: float) -> tuple:
    """World-frame planar point at distance ``r_oc`` along the frontier bearing."""
    ang = robot.theta + frontier.azimuth
    return robot.x + r_oc * math.cos(ang), robot.y + r_oc * math.sin(ang)


def frontier_cost(frontier: Frontier, robot: RobotState, goal: RobotState,
                  k_dst: float = 5.0, k_dir: float = 4.0) -> float:
    """``k_dst * d_fs + k_dir * bearing^2`` from the frontier's world position."""
    d_fs = math.hypot(frontier.x - goal.x, frontier.y - goal.y)
    bearing = wrap_angle(math.atan2(frontier.y - robot.y, frontier.x - robot.x) - robot.theta)
    return float(k_dst * d_fs + k_dir * bearing * bearing)


def score_frontiers(frontiers: List[Frontier], robot: RobotState, goal: RobotState,
                    config: OccupancySurfaceConfig) -> Optional[int]:
    """Fill in positions and costs; return the index of the best frontier (or None)."""
    for f in frontiers:
        f.x, f.y = frontier_position(f, robot, config.r_oc)
        f.cost = frontier_cost(f, robot, goal, config.k_dst, config.k_dir)
    if not frontiers:
        return None
    keys = [(f.cost, abs(f.azimuth), f.azimuth) for f in frontiers]
    return min(range(len(frontiers)), key=keys.__getitem__)


@dataclass
class Recommendation:
    subgoal: Optional[RobotState]
    surface: VarianceSurface
    frontiers: List[Frontier] = field(default_factory=list)
    optimal_index: Optional[int] = None

    def to_dict(self) -> dict:
        sg = self.subgoal
        return {
            "subgoal": None if sg is None else [sg.x, sg.y, sg.theta],
            "optimal_index": self.optimal_index,
            "frontiers": [f.to_dict() for f in self.frontiers],
            "surface": self.surface.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def recommend_detailed(cloud: PointCloud, robot: RobotState, goal: RobotState,
                       config: Optional[OccupancySurfaceConfig] = None, seed: int = 0,
                       init_kernel: Optional[KernelParams] = None) -> Recommendation:
    config = config or OccupancySurfaceConfig()
    train = cloud_to_training_set(cloud, config)
    surface = build_variance_surface(train, config, seed=seed, init_kernel=init_kernel)
    frontiers = extract_frontiers(surface, config.min_cells, config.max_span, config.sector_width)
    best = score_frontiers(frontiers, robot, goal, config)
    if best is None:
        return Recommendation(None, surface, frontiers, None)
    f = frontiers[best]
    heading = math.atan2(f.y - robot.y, f.x - robot.x)
    return Recommendation(RobotState(f.x, f.y, heading), surface, frontiers, best)


def recommend(cloud: PointCloud, robot: RobotState, goal: RobotState,
              config: Optional[OccupancySurfaceConfig] = None, seed: int = 0) -> Optional[RobotState]:
    """Subgoal pose facing away from the robot, or None when no frontier exists."""
    return recommend_detailed(cloud, robot, goal, config, seed).subgoal
