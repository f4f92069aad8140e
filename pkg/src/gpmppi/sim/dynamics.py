"""Planar differential-drive kinematics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def wrap_angle(angle):
    """Wrap an angle (scalar or array) to the half-open interval (-pi, pi]."""
    angle = np.asarray(angle, dtype=float)
    # in-range values pass through untouched so fixed points stay bit-exact
    outside = (angle > np.pi) | (angle <= -np.pi)
    wrapped = np.where(outside, np.pi - np.mod(np.pi - angle, 2.0 * np.pi), angle)
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


@dataclass(frozen=True)
class RobotState:
    """Pose of the vehicle in the world frame (meters, meters, radians)."""

    x: float
    y: float
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta])

    @classmethod
    def from_array(cls, arr) -> "RobotState":
        return cls(float(arr[0]), float(arr[1]), float(arr[2]))

    def distance_to(self, other: "RobotState") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True)
class ControlInput:
    """Linear speed v [m/s] and angular rate omega [rad/s]."""

    v: float
    omega: float

    def clamped(self, v_max: float, omega_max: float = math.inf) -> "ControlInput":
        return ControlInput(
            float(np.clip(self.v, -v_max, v_max)),
            float(np.clip(self.omega, -omega_max, omega_max)),
        )


def step_dynamics(state: RobotState, control: ControlInput, dt: float) -> RobotState:
    """Advance the unicycle model by one explicit Euler step.

    The map is deterministic; process noise enters through ``control``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    return RobotState(
        state.x + control.v * math.cos(state.theta) * dt,
        state.y + control.v * math.sin(state.theta) * dt,
        state.theta + control.omega * dt,
    )


def step_dynamics_batch(x, y, theta, v, omega, dt):
    """Vectorised Euler step over arrays of states and controls."""
    return (
        x + v * np.cos(theta) * dt,
        y + v * np.sin(theta) * dt,
        wrap_angle(theta + omega * dt),
    )
