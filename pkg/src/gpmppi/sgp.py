"""Exact and variational sparse GP regression on the (azimuth, elevation) surface.

Inputs are ``(n, 2)`` arrays of (azimuth, elevation) in radians.  The
azimuth distance is the chord between the two directions, so the kernel is
periodic in that axis (see :func:`sq_dist`).

The sparse model uses the collapsed variational bound

    F = log N(y | 0, s I + Q_nn) - tr(K_nn - Q_nn) / (2 s),
    Q_nn = K_nm K_mm^-1 K_mn,

whose gradients with respect to the kernel parameters, the noise variance and
the inducing inputs are computed in closed form.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy import linalg, optimize

LOG_2PI = math.log(2.0 * math.pi)
NOISE_FLOOR = 1e-6
# relative jitter added to K_mm, escalated whenever a Cholesky factorisation fails
JITTER_SCHEDULE = (1e-10, 1e-8, 1e-6, 1e-5, 1e-4)


class FactorizationError(np.linalg.LinAlgError):
    """Cholesky failed even at the largest jitter."""


@dataclass(frozen=True)
class KernelParams:
    sigma_f2: float = 1.0
    length_scale: float = 0.2
    alpha: float = 1.0

    def __post_init__(self):
        if not (self.sigma_f2 > 0 and self.length_scale > 0 and self.alpha > 0):
            raise ValueError(f"kernel parameters must be positive: {self}")


@dataclass
class TrainingSet:
    inputs: np.ndarray
    targets: np.ndarray
    noise_variance: float = 0.01

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        self.targets = np.asarray(self.targets, dtype=float).ravel()
        if len(self.inputs) != len(self.targets):
            raise ValueError("inputs and targets differ in length")
        self.noise_variance = max(float(self.noise_variance), NOISE_FLOOR)

    def __len__(self):
        return len(self.targets)


@dataclass
class Prediction:
    mean: np.ndarray
    variance: np.ndarray


def _pair_terms(A, B):
    """Squared distances and their half-gradients w.r.t. the rows of ``A``.

    The azimuth contribution is the squared chord ``2 (1 - cos(da))`` of the
    angular difference: periodic at +-pi, equal to ``da^2`` to second order,
    and a genuine Euclidean embedding, so every Gram matrix stays PSD.
    """
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    daz = A[:, None, 0] - B[None, :, 0]
    delv = A[:, None, 1] - B[None, :, 1]
    d2 = 2.0 * (1.0 - np.cos(daz)) + delv * delv
    half_grad = np.stack([np.sin(daz), delv], axis=-1)
    return d2, half_grad


def sq_dist(A, B):
    """Squared kernel distance between every pair of inputs."""
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    daz = A[:, None, 0] - B[None, :, 0]
    delv = A[:, None, 1] - B[None, :, 1]
    return 2.0 * (1.0 - np.cos(daz)) + delv * delv


def rq_gram(A, B, params: KernelParams) -> np.ndarray:
    """Rational-quadratic covariance matrix between two input sets."""
    return _rq_from_sq(sq_dist(A, B), params)


def _rq_from_sq(d2, params):
    a, l2 = params.alpha, params.length_scale ** 2
    return params.sigma_f2 * (1.0 + d2 / (2.0 * a * l2)) ** (-a)


def rq_kernel(z, z_prime, params: KernelParams) -> float:
    """k(z, z') = s_f^2 (1 + d^2 / (2 alpha l^2))^-alpha, ``d`` periodic in azimuth."""
    return float(rq_gram(np.asarray(z, float)[None], np.asarray(z_prime, float)[None], params)[0, 0])


def jittered_cholesky(K: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of ``K``, adding diagonal jitter on failure."""
    scale = max(float(np.mean(np.diag(K))), 1e-12)
    for jitter in JITTER_SCHEDULE:
        try:
            return linalg.cholesky(K + jitter * scale * np.eye(len(K)), lower=True)
        except linalg.LinAlgError:
            continue
    raise FactorizationError(f"Cholesky failed with jitter up to {JITTER_SCHEDULE[-1]:g}")


def _noisy_factor(train: TrainingSet, params: KernelParams):
    K = rq_gram(train.inputs, train.inputs, params)
    K[np.diag_indices_from(K)] += train.noise_variance
    return jittered_cholesky(K)


def gp_predict(train: TrainingSet, params: KernelParams, queries) -> Prediction:
    """Exact zero-mean GP posterior of the latent function at ``queries``."""
    queries = np.atleast_2d(np.asarray(queries, dtype=float))
    prior = np.full(len(queries), params.sigma_f2)
    if len(train) == 0:
        return Prediction(np.zeros(len(queries)), prior)
    L = _noisy_factor(train, params)
    Kqn = rq_gram(queries, train.inputs, params)
    alpha = linalg.cho_solve((L, True), train.targets)
    V = linalg.solve_triangular(L, Kqn.T, lower=True)
    var = prior - np.sum(V * V, axis=0)
    return Prediction(Kqn @ alpha, np.maximum(var, 0.0))


def log_marginal_likelihood(train: TrainingSet, params: KernelParams) -> float:
    """log N(y | 0, K_nn + s I)."""
    L = _noisy_factor(train, params)
    a = linalg.solve_triangular(L, train.targets, lower=True)
    n = len(train)
    return float(-0.5 * a @ a - np.sum(np.log(np.diag(L))) - 0.5 * n * LOG_2PI)


@dataclass
class SgpModel:
    """Kernel, noise, inducing inputs and the cached posterior factors.

    The cache (``_L``, ``_LB``, ``_c``) is what prediction needs: each query
    then costs two triangular solves of size m.
    """

    kernel: KernelParams
    inducing: np.ndarray
    noise_variance: float
    elbo: float = float("nan")
    initial_elbo: float = float("nan")
    converged: bool = True
    n_iter: int = 0
    _L: Optional[np.ndarray] = field(default=None, repr=False)
    _LB: Optional[np.ndarray] = field(default=None, repr=False)
    _c: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def num_inducing(self) -> int:
        return len(self.inducing)

    def condition(self, train: TrainingSet) -> "SgpModel":
        """Compute the posterior cache from ``train`` (in place; returns self)."""
        t = _bound_terms(train.inputs, train.targets, self.inducing, self.kernel,
                         max(self.noise_variance, NOISE_FLOOR))
        self._L, self._LB, self._c = t["L"], t["LB"], t["c"]
        return self

    @classmethod
    def from_training(cls, train: TrainingSet, kernel: KernelParams, inducing=None) -> "SgpModel":
        inducing = train.inputs.copy() if inducing is None else np.atleast_2d(np.asarray(inducing, float))
        model = cls(kernel, inducing, train.noise_variance)
        model.condition(train)
        model.elbo = elbo(train, model)
        return model

    def to_dict(self) -> dict:
        d = {
            "kernel": {"sigma_f2": self.kernel.sigma_f2, "length_scale": self.kernel.length_scale,
                       "alpha": self.kernel.alpha},
            "noise_variance": self.noise_variance,
            "inducing": self.inducing.tolist(),
            "elbo": self.elbo,
            "converged": self.converged,
            "n_iter": self.n_iter,
        }
        if self._L is not None:
            d["posterior"] = {"L": self._L.tolist(), "LB": self._LB.tolist(), "c": self._c.tolist()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SgpModel":
        model = cls(KernelParams(**d["kernel"]), np.asarray(d["inducing"], dtype=float),
                    float(d["noise_variance"]), elbo=float(d.get("elbo", float("nan"))),
                    converged=bool(d.get("converged", True)), n_iter=int(d.get("n_iter", 0)))
        post = d.get("posterior")
        if post:
            model._L = np.asarray(post["L"])
            model._LB = np.asarray(post["LB"])
            model._c = np.asarray(post["c"])
        return model

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "SgpModel":
        return cls.from_dict(json.loads(text))


def _bound_terms(X, y, Z, kern: KernelParams, noise: float, grad: bool = False):
    """Collapsed bound, optionally with gradients.

    Gradients are returned for (log sigma_f2, log length_scale, log alpha,
    log noise) and for the inducing inputs.
    """
    n = len(y)
    beta = 1.0 / noise
    d2_uu, D_uu = _pair_terms(Z, Z)
    d2_uf, D_uf = _pair_terms(Z, X)
    Kuu = _rq_from_sq(d2_uu, kern)
    Kuf = _rq_from_sq(d2_uf, kern)
    L = jittered_cholesky(Kuu)
    A = linalg.solve_triangular(L, Kuf, lower=True) * math.sqrt(beta)
    AAT = A @ A.T
    B = AAT + np.eye(len(Z))
    LB = jittered_cholesky(B)
    Ay = A @ y
    c = linalg.solve_triangular(LB, Ay, lower=True) * math.sqrt(beta)
    yy = float(y @ y)
    trace_knn = n * kern.sigma_f2
    bound = (-0.5 * n * LOG_2PI - np.sum(np.log(np.diag(LB))) - 0.5 * n * math.log(noise)
             - 0.5 * beta * yy + 0.5 * float(c @ c)
             - 0.5 * beta * trace_knn + 0.5 * float(np.trace(AAT)))
    out = {"bound": float(bound), "L": L, "LB": LB, "c": c}
    if not grad:
        return out

    m = len(Z)
    eye = np.eye(m)
    Linv = linalg.solve_triangular(L, eye, lower=True)
    Kuu_inv = Linv.T @ Linv
    LBinv = linalg.solve_triangular(LB, eye, lower=True)
    P_inv = Linv.T @ (LBinv.T @ LBinv) @ Linv            # (K_uu + beta K_uf K_fu)^-1
    C = Kuf @ Kuf.T
    b = Kuf @ y
    v = P_inv @ b
    diff_inv = Kuu_inv - P_inv
    Kuu_inv_C = Kuu_inv @ C
    G_uu = 0.5 * diff_inv - 0.5 * beta ** 2 * np.outer(v, v) - 0.5 * beta * Kuu_inv_C @ Kuu_inv
    r = y - beta * (Kuf.T @ v)
    G_uf = beta * (diff_inv @ Kuf) + beta ** 2 * np.outer(v, r)
    G_diag = -0.5 * beta

    dF_dbeta = (0.5 * n / beta - 0.5 * np.sum(P_inv * C) - 0.5 * yy + beta * float(b @ v)
                - 0.5 * beta ** 2 * float(v @ C @ v) - 0.5 * trace_knn + 0.5 * np.trace(Kuu_inv_C))
    g_log_noise = -beta * dF_dbeta

    a, l2 = kern.alpha, kern.length_scale ** 2

    def pieces(K, d2):
        t = 1.0 + d2 / (2.0 * a * l2)
        dlog_l = K * (d2 / l2) / t
        dlog_a = -a * K * (np.log(t) - (t - 1.0) / t)
        dd2 = -K / (2.0 * l2 * t)
        return dlog_l, dlog_a, dd2

    l_uu, a_uu, dd2_uu = pieces(Kuu, d2_uu)
    l_uf, a_uf, dd2_uf = pieces(Kuf, d2_uf)
    g_log_sf2 = np.sum(G_uu * Kuu) + np.sum(G_uf * Kuf) + G_diag * trace_knn
    g_log_l = np.sum(G_uu * l_uu) + np.sum(G_uf * l_uf)
    g_log_a = np.sum(G_uu * a_uu) + np.sum(G_uf * a_uf)

    W_uu = 2.0 * (G_uu + G_uu.T) * dd2_uu
    W_uf = 2.0 * G_uf * dd2_uf
    gZ = np.einsum("ij,ijk->ik", W_uu, D_uu) + np.einsum("ij,ijk->ik", W_uf, D_uf)

    out["grad_hyper"] = np.array([g_log_sf2, g_log_l, g_log_a, g_log_noise])
    out["grad_Z"] = gZ
    return out


def elbo(train: TrainingSet, model: SgpModel) -> float:
    """Collapsed variational lower bound on the log marginal likelihood."""
    if model.num_inducing < 1:
        raise ValueError("at least one inducing point is required")
    return _bound_terms(train.inputs, train.targets, model.inducing, model.kernel,
                        max(model.noise_variance, NOISE_FLOOR))["bound"]


def elbo_and_gradients(train: TrainingSet, model: SgpModel):
    """Bound plus gradients w.r.t. (log sf2, log l, log alpha, log noise) and inducing inputs."""
    t = _bound_terms(train.inputs, train.targets, model.inducing, model.kernel,
                     max(model.noise_variance, NOISE_FLOOR), grad=True)
    return t["bound"], t["grad_hyper"], t["grad_Z"]


@dataclass
class FitConfig:
    max_iter: int = 200
    optimize_inducing: bool = True
    optimize_hyper: bool = True
    elevation_bounds: Optional[tuple] = None     # defaults to the training-input range
    init_kernel: Optional[KernelParams] = None
    init_noise: Optional[float] = None
    tol: float = 1e-9


def stratified_subsample(inputs: np.ndarray, m: int, seed: int) -> np.ndarray:
    """Pick one input from each of ``m`` equal strata of the (azimuth, elevation)-sorted set."""
    n = len(inputs)
    if m > n:
        raise ValueError(f"cannot choose {m} inducing points from {n} inputs")
    order = np.lexsort((inputs[:, 1], inputs[:, 0]))
    edges = np.linspace(0, n, m + 1)
    lo = np.floor(edges[:-1]).astype(int)
    hi = np.maximum(np.floor(edges[1:]).astype(int), lo + 1)
    rng = np.random.default_rng(seed)
    picks = lo + np.floor(rng.uniform(size=m) * (hi - lo)).astype(int)
    return inputs[order[np.minimum(picks, n - 1)]].copy()


def default_kernel(train: TrainingSet) -> KernelParams:
    var = float(np.var(train.targets)) if len(train) > 1 else 0.0
    return KernelParams(sigma_f2=max(var, 1e-3), length_scale=0.2, alpha=1.0)


def fit(train: TrainingSet, m_s: int, init_seed: int = 0, config: Optional[FitConfig] = None) -> SgpModel:
    """Maximise the collapsed bound over kernel, noise and inducing inputs.

    Parameters are optimised in log space with L-BFGS-B; elevations of the
    inducing inputs are box-constrained to the surface band and azimuths are
    wrapped afterwards.  The best bound seen is returned even if the optimiser
    stops early, with ``converged`` recording whether it terminated normally.
    """
    config = config or FitConfig()
    n = len(train)
    if n < 1:
        raise ValueError("cannot fit an empty training set")
    if m_s < 1 or m_s > n:
        raise ValueError(f"need 1 <= m_s <= n, got m_s={m_s}, n={n}")
    X, y = train.inputs, train.targets
    kern0 = config.init_kernel or default_kernel(train)
    noise0 = config.init_noise if config.init_noise is not None else 0.01 * kern0.sigma_f2
    noise0 = max(noise0, NOISE_FLOOR)
    Z0 = stratified_subsample(X, m_s, init_seed)
    if m_s == n:
        # Z = X makes the bound tight for every kernel, so it is already optimal
        Z0 = X.copy()
        config = replace(config, optimize_inducing=False)
    el_lo, el_hi = config.elevation_bounds or (float(X[:, 1].min()), float(X[:, 1].max()))

    hyper0 = np.log([kern0.sigma_f2, kern0.length_scale, kern0.alpha, noise0])
    hyper_bounds = [(math.log(1e-6), math.log(1e4)), (math.log(1e-3), math.log(10.0)),
                    (math.log(1e-3), math.log(1e3)), (math.log(NOISE_FLOOR), math.log(1e4))]

    def unpack(theta):
        h = theta[:4] if config.optimize_hyper else hyper0
        Z = theta[4:].reshape(-1, 2) if config.optimize_inducing else Z0
        if not config.optimize_hyper:
            Z = theta.reshape(-1, 2) if config.optimize_inducing else Z0
        sf2, ls, al, noise = np.exp(h)
        return KernelParams(sf2, ls, al), noise, Z

    parts, bounds = [], []
    if config.optimize_hyper:
        parts.append(hyper0)
        bounds += hyper_bounds
    if config.optimize_inducing:
        parts.append(Z0.ravel())
        bounds += [(None, None), (el_lo, el_hi)] * m_s
    theta0 = np.concatenate(parts) if parts else np.empty(0)

    best = {"f": -np.inf, "theta": theta0.copy()}

    def objective(theta):
        kern, noise, Z = unpack(theta)
        try:
            t = _bound_terms(X, y, Z, kern, noise, grad=True)
        except (FactorizationError, ValueError, FloatingPointError):
            return 1e25, np.zeros_like(theta)
        f = t["bound"]
        if not np.isfinite(f):
            return 1e25, np.zeros_like(theta)
        if f > best["f"]:
            best["f"], best["theta"] = f, theta.copy()
        g = []
        if config.optimize_hyper:
            g.append(t["grad_hyper"])
        if config.optimize_inducing:
            g.append(t["grad_Z"].ravel())
        return -f, -np.concatenate(g)

    initial = -objective(theta0)[0]
    converged, n_iter = True, 0
    if len(theta0) and config.max_iter > 0:
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            res = optimize.minimize(objective, theta0, jac=True, method="L-BFGS-B", bounds=bounds,
                                    options={"maxiter": config.max_iter, "ftol": config.tol,
                                             "gtol": 1e-8})
        converged, n_iter = bool(res.success), int(res.nit)

    kern, noise, Z = unpack(best["theta"])
    Z = Z.copy()
    Z[:, 0] = np.mod(Z[:, 0] + np.pi, 2.0 * np.pi) - np.pi
    Z[:, 1] = np.clip(Z[:, 1], el_lo, el_hi)
    model = SgpModel(kern, Z, float(noise), initial_elbo=float(initial), converged=converged,
                     n_iter=n_iter)
    model.condition(train)
    model.elbo = elbo(train, model)
    return model


def sgp_predict(model: SgpModel, queries) -> Prediction:
    """Variational predictive mean and latent variance at ``queries``."""
    if model._L is None:
        raise ValueError("model has no posterior cache; call condition(train) first")
    queries = np.atleast_2d(np.asarray(queries, dtype=float))
    Kuq = rq_gram(model.inducing, queries, model.kernel)
    tmp1 = linalg.solve_triangular(model._L, Kuq, lower=True)
    tmp2 = linalg.solve_triangular(model._LB, tmp1, lower=True)
    mean = tmp2.T @ model._c
    var = model.kernel.sigma_f2 - np.sum(tmp1 * tmp1, axis=0) + np.sum(tmp2 * tmp2, axis=0)
    return Prediction(mean, np.maximum(var, 0.0))
