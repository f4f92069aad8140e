"""Sampling-based MPPI optimiser for the unicycle model.

Control sequences are ``(N, 2)`` arrays of (v, omega); noise tensors are
``(M, N, 2)``.  One call to :meth:`MppiPlanner.step` runs a full iteration:
sample, roll out, reweight, smooth, emit ``u_0`` and shift.
"""

from __future__ import annotations

import json
from functools import lru_cache
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .sim.costmap import Costmap2D
from .sim.dynamics import RobotState


@dataclass
class MppiParams:
    lam: float = 0.572                      # inverse temperature
    nu: float = 1200.0                      # exploration variance
    sigma: tuple = (0.023, 0.028)           # diagonal of the control noise covariance
    R: Optional[np.ndarray] = None          # control weight; defaults to lam * Sigma^(-1/2)
    Q: np.ndarray = field(default_factory=lambda: np.diag([2.5, 2.5, 5.0]))
    crash_penalty: float = 1e3
    M: int = 2528
    N: int = 180
    dt: float = 1.0 / 30.0
    v_max: float = 1.5
    omega_max: float = 2.0
    footprint_radius: float = 0.3
    sg_window: int = 51
    sg_order: int = 2
    sticky_crash: bool = True
    goal_tolerance: float = 0.3

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lam must be positive")
        self.sigma = tuple(float(s) for s in self.sigma)
        self.Q = np.asarray(self.Q, dtype=float)
        if self.R is None:
            self.R = self.lam * np.diag(1.0 / np.sqrt(self.sigma))
        self.R = np.asarray(self.R, dtype=float)

    @property
    def gamma_u(self) -> float:
        return (self.nu - 1.0) / (2.0 * self.nu)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["R"] = self.R.tolist()
        d["Q"] = self.Q.tolist()
        d["sigma"] = list(self.sigma)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MppiParams":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**known)

    @classmethod
    def from_json(cls, text: str) -> "MppiParams":
        return cls.from_dict(json.loads(text))


def gamma_u(nu: float) -> float:
    return (nu - 1.0) / (2.0 * nu)


def sample_noise(M: int, N: int, sigma, seed) -> np.ndarray:
    """Draw an ``(M, N, 2)`` tensor of zero-mean Gaussian control perturbations.

    ``sigma`` is the covariance, given as its diagonal or as a diagonal matrix.
    Zero variance is allowed and yields zeros for that channel.
    """
    if M < 1 or N < 1:
        raise ValueError("M and N must be at least 1")
    var = np.asarray(sigma, dtype=float)
    if var.ndim == 2:
        if np.any(var - np.diag(np.diag(var))):
            raise ValueError("only diagonal covariances are supported")
        var = np.diag(var)
    if np.any(var < 0):
        raise ValueError("noise variances must be non-negative")
    rng = np.random.default_rng(seed)
    return rng.standard_normal((M, N, len(var))) * np.sqrt(var)


def _quad_goal(x, y, th, goal: RobotState, Q: np.ndarray):
    ex = x - goal.x
    ey = y - goal.y
    et = th - goal.theta
    # only et**2 is used, so the sign at +-pi does not matter; in-range values stay exact
    et = et - (2.0 * np.pi) * np.round(et / (2.0 * np.pi))
    q = Q[0, 0] * ex * ex + Q[1, 1] * ey * ey + Q[2, 2] * et * et
    if Q[0, 1] or Q[0, 2] or Q[1, 2]:
        q = q + 2.0 * (Q[0, 1] * ex * ey + Q[0, 2] * ex * et + Q[1, 2] * ey * et)
    return q


def state_cost(state: RobotState, goal: RobotState, crashed: bool,
               Q=np.diag([2.5, 2.5, 5.0]), crash_penalty: float = 1e3) -> float:
    """Quadratic goal-tracking cost plus the crash penalty.  Heading error is wrapped."""
    Q = np.asarray(Q, dtype=float)
    q = _quad_goal(state.x, state.y, state.theta, goal, Q)
    return float(q + (crash_penalty if crashed else 0.0))


def rollout_costs(x0: RobotState, U: np.ndarray, noise: np.ndarray, costmap: Optional[Costmap2D],
                  goal: RobotState, params: MppiParams) -> np.ndarray:
    """Cost-to-go of every perturbed rollout, shape ``(M,)``.

    Each step applies the clamped control ``u_k + du_k``, then accumulates the
    state cost of the reached state and the quadratic control cost
    ``gamma du'R du + u'R du + 0.5 u'R u`` with ``du`` the clamped perturbation.
    The terminal cost reuses ``Q``.  Once a rollout collides it stays crashed
    unless ``params.sticky_crash`` is off.  If ``x0`` itself is already within
    the footprint of an occupied cell, a state counts as colliding only when it
    is closer to the obstacles than ``x0``.
    """
    U = np.asarray(U, dtype=float)
    noise = np.asarray(noise, dtype=float)
    M, N = noise.shape[0], noise.shape[1]
    if U.shape[0] != N:
        raise ValueError("noise horizon does not match the control sequence")
    R, Q = params.R, params.Q
    # executed controls per channel, (M, N); min/max is much cheaper than np.clip here
    v = np.minimum(np.maximum(U[:, 0] + noise[..., 0], -params.v_max), params.v_max)
    w = np.minimum(np.maximum(U[:, 1] + noise[..., 1], -params.omega_max), params.omega_max)
    dv, dw = v - U[:, 0], w - U[:, 1]
    dt = params.dt
    # closed-form Euler integration: heading is a running sum, positions follow
    th = x0.theta + np.cumsum(w, axis=1) * dt
    th_prev = np.empty_like(th)
    th_prev[:, 0] = x0.theta
    th_prev[:, 1:] = th[:, :-1]
    x = x0.x + np.cumsum(v * np.cos(th_prev), axis=1) * dt
    y = x0.y + np.cumsum(v * np.sin(th_prev), axis=1) * dt
    if costmap is not None:
        d = costmap.distance_at(x, y)
        d0 = float(costmap.distance_at(np.array([x0.x]), np.array([x0.y]))[0])
        hit = d <= params.footprint_radius
        if d0 <= params.footprint_radius:
            # already inside the footprint: only moving deeper counts, so that
            # rollouts backing out still score better than those pressing on
            hit &= d < d0
        crashed = np.logical_or.accumulate(hit, axis=1) if params.sticky_crash else hit
    else:
        crashed = np.zeros((M, N), dtype=bool)
    # gamma du'R du + u'R du = (gamma du + u)'R du
    g = params.gamma_u
    ctrl = ((g * dv + U[:, 0]) * (R[0, 0] * dv + R[0, 1] * dw)
            + (g * dw + U[:, 1]) * (R[1, 0] * dv + R[1, 1] * dw))
    uRu = 0.5 * np.einsum("ki,ij,kj->", U, R, U)
    S = np.sum(_quad_goal(x, y, th, goal, Q) + params.crash_penalty * crashed + ctrl, axis=1) + uRu
    S += _quad_goal(x[:, -1], y[:, -1], th[:, -1], goal, Q)
    return S


def rollout_cost(x0: RobotState, U: np.ndarray, noise_row: np.ndarray, costmap: Optional[Costmap2D],
                 goal: RobotState, params: MppiParams) -> float:
    """Cost-to-go of a single rollout (same arithmetic as :func:`rollout_costs`)."""
    return float(rollout_costs(x0, U, np.asarray(noise_row)[None], costmap, goal, params)[0])


def importance_weights(costs, lam: float) -> np.ndarray:
    """Softmax weights ``exp(-(S - S_min) / lam)``, normalised."""
    if lam <= 0:
        raise ValueError("lam must be positive")
    costs = np.asarray(costs, dtype=float)
    w = np.exp(-(costs - costs.min()) / lam)
    return w / w.sum()


def update_controls(U: np.ndarray, noise: np.ndarray, costs, lam: float) -> np.ndarray:
    """Return ``U + sum_m w_m du_m`` with importance weights from the rollout costs."""
    noise = np.asarray(noise, dtype=float)
    if noise.shape[0] != len(costs):
        raise ValueError("one cost per rollout is required")
    w = importance_weights(costs, lam)
    return np.asarray(U, dtype=float) + np.tensordot(w, noise, axes=1)


def effective_sample_size(costs, lam: float) -> float:
    w = importance_weights(costs, lam)
    return float(1.0 / np.sum(w * w))


@lru_cache(maxsize=256)
def savgol_coefficients(window: int, order: int, pos: Optional[int] = None) -> np.ndarray:
    """Least-squares weights that evaluate the fitted polynomial at sample ``pos``.

    ``pos`` defaults to the window centre; off-centre positions give the
    one-sided fits used at the sequence ends.
    """
    if window % 2 == 0:
        raise ValueError("window must be odd")
    if window <= order:
        raise ValueError("window must exceed the polynomial order")
    if pos is None:
        pos = window // 2
    t = np.arange(window) - pos
    A = np.vander(t, order + 1, increasing=True)
    # row 0 of the pseudo-inverse evaluates the fit at t = 0
    coeffs = np.linalg.pinv(A)[0]
    coeffs.flags.writeable = False
    return coeffs


def sg_filter(U: np.ndarray, poly_order: int = 2, window: int = 51) -> np.ndarray:
    """Savitzky-Golay smoothing of each column of ``U``.

    Interior samples use the centred kernel; the first and last ``window // 2``
    samples are evaluated from a polynomial fitted to the first/last ``window``
    samples.
    """
    U = np.asarray(U, dtype=float)
    squeeze = U.ndim == 1
    if squeeze:
        U = U[:, None]
    N = U.shape[0]
    if window % 2 == 0:
        raise ValueError("window must be odd")
    if window > N:
        raise ValueError(f"window {window} longer than the sequence ({N})")
    if window <= poly_order:
        raise ValueError("window must exceed the polynomial order")
    half = window // 2
    out = np.empty_like(U)
    center = savgol_coefficients(window, poly_order)
    # correlate, not convolve: coefficient j multiplies sample k - half + j
    windows = np.lib.stride_tricks.sliding_window_view(U, window, axis=0)   # (N-w+1, C, w)
    out[half:N - half] = windows @ center
    for i in range(half):
        out[i] = savgol_coefficients(window, poly_order, pos=i) @ U[:window]
        j = N - half + i
        out[j] = savgol_coefficients(window, poly_order, pos=window - half + i) @ U[N - window:]
    return out[:, 0] if squeeze else out


def shift_sequence(U: np.ndarray) -> np.ndarray:
    """Drop ``u_0``, slide the rest forward and repeat the last entry."""
    U = np.asarray(U)
    return np.concatenate([U[1:], U[-1:]], axis=0)


def predicted_mean_speed(U: np.ndarray) -> float:
    """Mean absolute linear speed over the horizon."""
    U = np.asarray(U, dtype=float)
    return float(np.mean(np.abs(U[:, 0])))


@dataclass
class StepInfo:
    u0: np.ndarray
    mu_u: float
    min_cost: float
    mean_cost: float
    ess: float
    sequence: np.ndarray


class MppiPlanner:
    """Warm-started MPPI iteration loop.

    Noise for step ``k`` is drawn from ``SeedSequence([seed, stream, k])`` so
    two planners with the same seed and stream see identical perturbations
    regardless of anything else happening in the program.
    """

    def __init__(self, params: MppiParams, seed: int = 0, stream: int = 0):
        self.stream = int(stream)
        self.params = params
        self.seed = int(seed)
        self.U = np.zeros((params.N, 2))
        self.iteration = 0

    def reset(self):
        self.U = np.zeros((self.params.N, 2))
        self.iteration = 0

    def step(self, state: RobotState, costmap: Optional[Costmap2D], target: RobotState) -> StepInfo:
        p = self.params
        noise = sample_noise(p.M, p.N, p.sigma, np.random.SeedSequence([self.seed, self.stream, self.iteration]))
        lo = np.array([-p.v_max, -p.omega_max])
        # perturbations that would exceed actuator limits are clipped at the source,
        # so the cost and the update see the same effective noise
        noise = np.minimum(np.maximum(self.U[None] + noise, lo), -lo) - self.U[None]
        costs = rollout_costs(state, self.U, noise, costmap, target, p)
        U = update_controls(self.U, noise, costs, p.lam)
        U = sg_filter(U, p.sg_order, p.sg_window)
        U = np.clip(U, lo, -lo)
        mu_u = predicted_mean_speed(U)
        info = StepInfo(u0=U[0].copy(), mu_u=mu_u, min_cost=float(costs.min()),
                        mean_cost=float(costs.mean()), ess=effective_sample_size(costs, p.lam),
                        sequence=U)
        self.U = shift_sequence(U)
        self.iteration += 1
        return info


__all__ = [
    "MppiParams", "MppiPlanner", "StepInfo", "gamma_u", "sample_noise", "state_cost",
    "rollout_costs", "rollout_cost", "importance_weights", "update_controls",
    "effective_sample_size", "savgol_coefficients", "sg_filter", "shift_sequence",
    "predicted_mean_speed",
]
