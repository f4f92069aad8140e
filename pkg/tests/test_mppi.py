import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gpmppi.mppi import (MppiParams, MppiPlanner, gamma_u, importance_weights, predicted_mean_speed,
                         rollout_cost, rollout_costs, sample_noise, savgol_coefficients, sg_filter,
                         shift_sequence, state_cost, update_controls)
from gpmppi.sim import OCCUPIED, Costmap2D, RobotState
from gpmppi.sim.dynamics import ControlInput, step_dynamics

costs_st = arrays(np.float64, st.integers(1, 40), elements=st.floats(-1e3, 1e3))


def _naive_rollout(x0, U, noise_row, costmap, goal, p):
    """Step-by-step reference for one rollout."""
    lo = np.array([-p.v_max, -p.omega_max])
    s, crashed, S = x0, False, 0.0
    for k in range(len(U)):
        ue = np.clip(U[k] + noise_row[k], lo, -lo)
        du = ue - U[k]
        s = step_dynamics(s, ControlInput(*ue), p.dt)
        if costmap is not None:
            crashed = crashed or bool(costmap.distance_at(np.array([s.x]), np.array([s.y]))[0]
                                      <= p.footprint_radius)
        S += state_cost(s, goal, crashed, p.Q, p.crash_penalty)
        S += p.gamma_u * du @ p.R @ du + U[k] @ p.R @ du + 0.5 * U[k] @ p.R @ U[k]
    return S + state_cost(s, goal, False, p.Q)


class TestNoise:
    def test_zero_variance(self):
        assert not np.any(sample_noise(8, 5, np.diag([0.0, 0.0]), 0))

    def test_sample_variance(self):
        eps = sample_noise(100_000, 1, (0.023, 0.028), 12345)
        var = eps.reshape(-1, 2).var(axis=0)
        assert 0.021 <= var[0] <= 0.025
        assert 0.026 <= var[1] <= 0.030

    def test_deterministic(self):
        assert np.array_equal(sample_noise(20, 7, (0.1, 0.2), 4), sample_noise(20, 7, (0.1, 0.2), 4))

    def test_rejects_offdiagonal(self):
        with pytest.raises(ValueError):
            sample_noise(2, 2, np.array([[1.0, 0.1], [0.1, 1.0]]), 0)


class TestCosts:
    Q = np.diag([2.5, 2.5, 5.0])

    def test_state_cost_at_goal(self):
        g = RobotState(1.0, -2.0, 0.4)
        assert state_cost(g, g, False, self.Q) == 0.0
        assert state_cost(g, g, True, self.Q) == 1000.0

    def test_state_cost_offset(self):
        assert state_cost(RobotState(1, 0, 0), RobotState(0, 0, 0), False, self.Q) == pytest.approx(2.5)

    def test_heading_error_wrapped(self):
        a = state_cost(RobotState(0, 0, math.pi - 0.1), RobotState(0, 0, -math.pi + 0.1), False, self.Q)
        assert a == pytest.approx(5.0 * 0.2 ** 2)

    def test_rollout_zero(self):
        p = MppiParams(N=5)
        g = RobotState(0, 0, 0)
        assert rollout_cost(g, np.zeros((5, 2)), np.zeros((5, 2)), None, g, p) == 0.0

    def test_rollout_static_offset(self):
        p = MppiParams(N=1, Q=self.Q)
        c = rollout_cost(RobotState(1, 0, 0), np.zeros((1, 2)), np.zeros((1, 2)), None,
                         RobotState(0, 0, 0), p)
        assert c == pytest.approx(5.0, abs=1e-12)

    def test_rollout_through_obstacle(self):
        p = MppiParams(N=30)
        cmap = Costmap2D.unknown(RobotState(0, 0, 0))
        ix, iy = cmap.world_to_cell(0.5, 0.0)
        cmap.cells[iy, ix] = OCCUPIED
        U = np.tile([1.5, 0.0], (30, 1))
        c = rollout_cost(RobotState(0, 0, 0), U, np.zeros((30, 2)), cmap, RobotState(5, 0, 0), p)
        assert c >= 1e3

    def test_vectorised_matches_loop(self):
        p = MppiParams(M=6, N=25)
        rng = np.random.default_rng(0)
        cmap = Costmap2D.unknown(RobotState(0, 0, 0))
        cmap.cells[rng.integers(0, 200, 30), rng.integers(0, 200, 30)] = OCCUPIED
        U = rng.normal(0.5, 0.5, (25, 2))
        noise = rng.normal(0.0, 0.5, (6, 25, 2))
        x0, goal = RobotState(0.1, -0.2, 0.3), RobotState(2.0, 1.0, 0.5)
        fast = rollout_costs(x0, U, noise, cmap, goal, p)
        slow = [_naive_rollout(x0, U, noise[m], cmap, goal, p) for m in range(6)]
        np.testing.assert_allclose(fast, slow, rtol=1e-10)

    def test_rollout_deterministic(self):
        p = MppiParams(N=10)
        rng = np.random.default_rng(1)
        U, n = rng.normal(size=(10, 2)), rng.normal(size=(4, 10, 2))
        a = rollout_costs(RobotState(0, 0, 0), U, n, None, RobotState(1, 1, 0), p)
        b = rollout_costs(RobotState(0, 0, 0), U, n, None, RobotState(1, 1, 0), p)
        assert np.array_equal(a, b)

    def test_gamma_u(self):
        assert gamma_u(1200) == pytest.approx(1199 / 2400)
        assert MppiParams().gamma_u == pytest.approx(0.49958, abs=1e-5)

    @given(st.floats(1.0, 1e9))
    def test_gamma_u_bounds(self, nu):
        assert 0.0 <= gamma_u(nu) < 0.5


class TestUpdate:
    def test_single_rollout(self):
        rng = np.random.default_rng(2)
        U, n = rng.normal(size=(6, 2)), rng.normal(size=(1, 6, 2))
        assert np.array_equal(update_controls(U, n, [3.7], 0.5), U + n[0])

    def test_equal_costs(self):
        rng = np.random.default_rng(3)
        U, n = rng.normal(size=(6, 2)), rng.normal(size=(2, 6, 2))
        np.testing.assert_allclose(update_controls(U, n, [1.0, 1.0], 0.5), U + (n[0] + n[1]) / 2,
                                   atol=1e-15)

    def test_small_lambda_selects_argmin(self):
        rng = np.random.default_rng(4)
        U, n = np.zeros((6, 2)), rng.normal(size=(2, 6, 2))
        np.testing.assert_allclose(update_controls(U, n, [0.0, 10.0], 1e-6), n[0], atol=1e-9)

    @given(costs_st, st.floats(-1e6, 1e6), st.floats(1e-3, 1e3))
    def test_shift_invariance(self, costs, c, lam):
        n = np.random.default_rng(len(costs)).normal(size=(len(costs), 4, 2))
        a = update_controls(np.zeros((4, 2)), n, costs, lam)
        b = update_controls(np.zeros((4, 2)), n, costs + c, lam)
        np.testing.assert_allclose(a, b, atol=1e-12)

    @given(costs_st, st.floats(1e-3, 1e3))
    def test_simplex(self, costs, lam):
        w = importance_weights(costs, lam)
        assert np.all(w >= 0)
        assert abs(w.sum() - 1.0) <= 1e-12

    @given(costs_st, st.floats(1e-2, 1e2))
    def test_monotone(self, costs, lam):
        w = importance_weights(costs, lam)
        i, j = np.argmin(costs), np.argmax(costs)
        # strictness needs a gap that survives exp() in double precision
        if (costs[j] - costs[i]) / lam > 1e-12 and w[j] > 0:
            assert w[i] > w[j]

    def test_rejects_nonpositive_lambda(self):
        with pytest.raises(ValueError):
            importance_weights([1.0, 2.0], 0.0)


class TestSavitzkyGolay:
    def test_five_point_kernel(self):
        np.testing.assert_allclose(savgol_coefficients(5, 2), np.array([-3, 12, 17, 12, -3]) / 35,
                                   atol=1e-12)

    def test_impulse(self):
        out = sg_filter(np.array([0.0, 0, 1, 0, 0]), 2, 5)
        assert out[2] == pytest.approx(17 / 35, abs=1e-12)

    def test_constant(self):
        U = np.full((60, 2), 0.7)
        np.testing.assert_allclose(sg_filter(U, 2, 51), U, atol=1e-12)

    @given(st.floats(-1, 1), st.floats(-5, 5), st.floats(-5, 5))
    def test_quadratic_exact(self, a, b, c):
        k = np.arange(80.0)
        u = a * k * k / 80 + b * k + c
        # one-sided edge fits are exact on polynomials too, so check everything
        np.testing.assert_allclose(sg_filter(u, 2, 51), u, atol=1e-9 * max(1.0, np.abs(u).max()))

    def test_window_validation(self):
        with pytest.raises(ValueError):
            sg_filter(np.zeros(10), 2, 51)
        with pytest.raises(ValueError):
            sg_filter(np.zeros(60), 2, 50)

    def test_agrees_with_scipy_interior(self):
        from scipy.signal import savgol_filter
        u = np.random.default_rng(0).normal(size=120)
        np.testing.assert_allclose(sg_filter(u, 2, 51)[25:-25], savgol_filter(u, 51, 2)[25:-25],
                                   atol=1e-12)


class TestSequence:
    def test_shift(self):
        assert shift_sequence(np.array([1, 2, 3])).tolist() == [2, 3, 3]

    def test_shift_constant(self):
        assert shift_sequence(np.array([4, 4, 4])).tolist() == [4, 4, 4]

    def test_shift_n_times(self):
        U = np.arange(7.0)
        for _ in range(7):
            U = shift_sequence(U)
        assert U.tolist() == [6.0] * 7

    def test_mean_speed(self):
        assert predicted_mean_speed(np.zeros((5, 2))) == 0.0
        alt = np.column_stack([np.tile([1.0, -1.0], 3), np.zeros(6)])
        assert predicted_mean_speed(alt) == 1.0
        assert predicted_mean_speed(np.array([[1.5, 0], [0, 0], [0.3, 0]])) == pytest.approx(0.6)


class TestPlanner:
    def test_drives_toward_goal(self):
        p = MppiParams(M=256, N=60)
        planner = MppiPlanner(p, seed=0)
        s, goal = RobotState(0, 0, 0), RobotState(3, 0, 0)
        for _ in range(90):
            info = planner.step(s, None, goal)
            s = step_dynamics(s, ControlInput(*info.u0), p.dt)
        assert s.distance_to(goal) < 1.5

    def test_executed_control_is_first_filtered_entry(self):
        p = MppiParams(M=64, N=60)
        planner = MppiPlanner(p, seed=3)
        info = planner.step(RobotState(0, 0, 0), None, RobotState(2, 1, 0))
        assert np.array_equal(info.u0, info.sequence[0])
        assert np.array_equal(planner.U, shift_sequence(info.sequence))

    def test_same_seed_same_controls(self):
        p = MppiParams(M=64, N=60)
        a, b = MppiPlanner(p, seed=9), MppiPlanner(p, seed=9)
        for _ in range(3):
            ia = a.step(RobotState(0, 0, 0), None, RobotState(2, 1, 0))
            ib = b.step(RobotState(0, 0, 0), None, RobotState(2, 1, 0))
            assert np.array_equal(ia.u0, ib.u0)

    def test_streams_differ(self):
        p = MppiParams(M=64, N=60)
        a, b = MppiPlanner(p, seed=9), MppiPlanner(p, seed=9, stream=1)
        ia = a.step(RobotState(0, 0, 0), None, RobotState(2, 1, 0))
        ib = b.step(RobotState(0, 0, 0), None, RobotState(2, 1, 0))
        assert not np.array_equal(ia.u0, ib.u0)

    def test_params_round_trip(self):
        p = MppiParams(M=10, N=20, lam=0.3)
        q = MppiParams.from_dict(p.to_dict())
        assert q.M == 10 and q.lam == 0.3
        np.testing.assert_array_equal(q.R, p.R)
