import numpy as np
import pytest
from oracles import central_difference, rel_error

from hkdmpc.costs import (
    CostWeights,
    cone_rows,
    grf_barrier_terms,
    grf_residuals,
    relaxed_log_barrier,
    running_cost,
    terminal_cost,
    touchdown_residual,
    touchdown_residual_grad,
)
from hkdmpc.dynamics import POS, THETA, grf_slice, standing_state, y_slice
from hkdmpc.robot import LEGS, LegIndex
from test_dynamics import random_state_control


@pytest.fixture(scope="module")
def weights():
    return CostWeights.from_diagonals(
        body=[10.0] * 3 + [20.0] * 3 + [1.0] * 3 + [2.0] * 3,
        joint=[0.5, 0.5, 0.5],
        foot=[30.0, 30.0, 30.0],
        grf=[1e-3, 1e-3, 1e-3],
        terminal_scale=10.0,
    )


def reference_point(a1, s, rng):
    x_ref, _ = random_state_control(rng, a1, s)
    lam_ref = np.zeros((4, 3))
    for leg in LEGS:
        if s[leg.idx]:
            lam_ref[leg.idx] = rng.uniform(0.0, 40.0, 3)
    return x_ref, lam_ref


class TestRunningCost:
    def test_zero_at_reference(self, a1, weights):
        rng = np.random.default_rng(51)
        s = np.array([True, True, False, False])
        x_ref, lam_ref = reference_point(a1, s, rng)
        u = np.zeros(24)
        for leg in LEGS:
            u[grf_slice(leg)] = lam_ref[leg.idx]
        val, lx, lu, _, _ = running_cost(x_ref, u, x_ref, lam_ref, s, weights, 0.01)
        assert val == 0.0
        np.testing.assert_array_equal(lx, 0.0)
        np.testing.assert_array_equal(lu, 0.0)

    def test_swing_foothold_slot_gated_out(self, a1, weights):
        rng = np.random.default_rng(52)
        s = np.array([False, True, True, True])
        x_ref, lam_ref = reference_point(a1, s, rng)
        x = x_ref.copy()
        u = np.zeros(24)
        base, *_ = running_cost(x, u, x_ref, lam_ref, s, weights, 0.01)
        # perturbing the swing leg's q-reference deviation through the foot
        # weight path must not happen: only the joint weight applies; and a
        # stance leg's joint-interpretation slot likewise contributes nothing
        x2 = x.copy()
        x2[y_slice(LegIndex.FRONT_RIGHT)] += 0.1  # swing leg: joint weight only
        v2, *_ = running_cost(x2, u, x_ref, lam_ref, s, weights, 0.01)
        dq = 0.1 * np.ones(3)
        assert v2 - base == pytest.approx(dq @ weights.joint @ dq * 0.01)
        # swing-leg GRF deviation is free
        u3 = u.copy()
        u3[grf_slice(LegIndex.FRONT_RIGHT)] += 50.0
        v3, *_ = running_cost(x, u3, x_ref, lam_ref, s, weights, 0.01)
        assert v3 == pytest.approx(base)

    def test_derivatives_match_finite_difference(self, a1, weights):
        rng = np.random.default_rng(53)
        for s in (np.array([True] * 4), np.array([False] * 4), np.array([True, False, True, False])):
            x_ref, lam_ref = reference_point(a1, s, rng)
            for _ in range(10):
                x, u = random_state_control(rng, a1, s)
                val, lx, lu, lxx, luu = running_cost(x, u, x_ref, lam_ref, s, weights, 0.01)
                fx = lambda xx: running_cost(xx, u, x_ref, lam_ref, s, weights, 0.01)[0]
                fu = lambda uu: running_cost(x, uu, x_ref, lam_ref, s, weights, 0.01)[0]
                assert rel_error(lx, central_difference(fx, x).ravel()) < 1e-6
                assert rel_error(lu, central_difference(fu, u).ravel()) < 1e-6
                gx = lambda xx: running_cost(xx, u, x_ref, lam_ref, s, weights, 0.01)[1]
                gu = lambda uu: running_cost(x, uu, x_ref, lam_ref, s, weights, 0.01)[2]
                assert rel_error(lxx, central_difference(gx, x)) < 1e-6
                assert rel_error(luu, central_difference(gu, u)) < 1e-6


class TestTerminalCost:
    def test_zero_at_reference(self, a1, weights):
        rng = np.random.default_rng(54)
        s = np.ones(4, dtype=bool)
        x_ref, _ = reference_point(a1, s, rng)
        val, gx, _ = terminal_cost(x_ref, x_ref, s, weights)
        assert val == 0.0
        np.testing.assert_array_equal(gx, 0.0)

    def test_independent_of_grf(self, a1, weights):
        rng = np.random.default_rng(55)
        s = np.ones(4, dtype=bool)
        x_ref, _ = reference_point(a1, s, rng)
        x, _ = random_state_control(rng, a1, s)
        v1, _, _ = terminal_cost(x, x_ref, s, weights)
        # no control argument exists; value depends on state only
        v2, _, _ = terminal_cost(x, x_ref, s, weights)
        assert v1 == v2

    def test_terminal_scaling(self, a1, weights):
        rng = np.random.default_rng(56)
        s = np.zeros(4, dtype=bool)
        x_ref, lam_ref = reference_point(a1, s, rng)
        x, u = random_state_control(rng, a1, s)
        v_run, *_ = running_cost(x, np.zeros(24), x_ref, lam_ref, s, weights, 1.0)
        v_term, _, _ = terminal_cost(x, x_ref, s, weights)
        assert v_term == pytest.approx(weights.terminal_scale * v_run)

    def test_derivatives_match_finite_difference(self, a1, weights):
        rng = np.random.default_rng(57)
        s = np.array([False, True, False, True])
        x_ref, _ = reference_point(a1, s, rng)
        for _ in range(10):
            x, _ = random_state_control(rng, a1, s)
            _, gx, gxx = terminal_cost(x, x_ref, s, weights)
            f = lambda xx: terminal_cost(xx, x_ref, s, weights)[0]
            g = lambda xx: terminal_cost(xx, x_ref, s, weights)[1]
            assert rel_error(gx, central_difference(f, x).ravel()) < 1e-6
            assert rel_error(gxx, central_difference(g, x)) < 1e-6


class TestTouchdownResidual:
    def test_foot_on_ground_zero(self, a1):
        from hkdmpc.robot import inverse_kinematics_world

        x = standing_state(a1)
        leg = LegIndex.FRONT_LEFT
        target = np.array([a1.hip_offset(leg)[0], a1.hip_offset(leg)[1] + 0.08, 0.0])
        x[y_slice(leg)] = inverse_kinematics_world(a1, leg, target, x[POS], np.eye(3))
        assert touchdown_residual(x, leg, a1) == pytest.approx(0.0, abs=1e-9)

    def test_direct_height_readout(self, a1):
        from hkdmpc.robot import inverse_kinematics_world

        x = standing_state(a1)
        leg = LegIndex.HIND_RIGHT
        target = np.array([a1.hip_offset(leg)[0], a1.hip_offset(leg)[1] - 0.08, 0.03])
        x[y_slice(leg)] = inverse_kinematics_world(a1, leg, target, x[POS], np.eye(3))
        assert touchdown_residual(x, leg, a1) == pytest.approx(0.03, abs=1e-9)

    def test_gradient_matches_finite_difference(self, a1):
        rng = np.random.default_rng(58)
        leg = LegIndex.FRONT_RIGHT
        s = np.zeros(4, dtype=bool)
        for _ in range(20):
            x, _ = random_state_control(rng, a1, s)
            h, grad = touchdown_residual_grad(x, leg, a1)
            assert h == pytest.approx(touchdown_residual(x, leg, a1))
            fd = central_difference(lambda xx: touchdown_residual(xx, leg, a1), x).ravel()
            assert rel_error(grad, fd) < 1e-6


class TestGrfResiduals:
    def test_feasible_example(self):
        u = np.zeros(24)
        u[grf_slice(LegIndex.FRONT_RIGHT)] = (0.0, 0.0, 10.0)
        s = np.array([True, False, False, False])
        r = grf_residuals(u, s, 0.7)
        np.testing.assert_allclose(r, [10.0, 7.0, 7.0, 7.0, 7.0])
        assert np.all(r >= 0)

    def test_infeasible_example(self):
        u = np.zeros(24)
        u[grf_slice(LegIndex.FRONT_RIGHT)] = (8.0, 0.0, 10.0)
        s = np.array([True, False, False, False])
        r = grf_residuals(u, s, 0.7)
        assert r[1] == pytest.approx(-1.0)
        assert np.any(r < 0)

    def test_flight_empty(self):
        r = grf_residuals(np.ones(24), np.zeros(4, dtype=bool), 0.7)
        assert r.size == 0

    def test_cone_scaling_invariance(self):
        rng = np.random.default_rng(59)
        s = np.array([True, True, False, False])
        for _ in range(20):
            u = np.zeros(24)
            u[:6] = rng.uniform(-5, 30, 6)
            r = grf_residuals(u, s, 0.6)
            if np.all(r >= 0):
                for c in (0.5, 2.0, 7.3):
                    assert np.all(grf_residuals(c * u, s, 0.6) >= 0)


class TestRelaxedBarrier:
    def test_matches_log_above_delta(self):
        z = np.array([0.02, 0.5, 3.0])
        b, d1, d2 = relaxed_log_barrier(z, 0.01)
        np.testing.assert_allclose(b, -np.log(z))
        np.testing.assert_allclose(d1, -1.0 / z)
        np.testing.assert_allclose(d2, 1.0 / z**2)

    def test_c2_at_junction(self):
        # value, slope, and curvature agree across the junction to O(eps)
        delta = 0.01
        eps = 1e-7
        bl, d1l, d2l = relaxed_log_barrier(np.array([delta - eps]), delta)
        br, d1r, d2r = relaxed_log_barrier(np.array([delta + eps]), delta)
        assert bl[0] - br[0] == pytest.approx(2 * eps / delta, rel=1e-3)
        assert d1l[0] == pytest.approx(d1r[0], abs=3 * eps / delta**2)
        assert d2l[0] == pytest.approx(d2r[0], rel=1e-4)

    def test_finite_outside_feasible(self):
        b, d1, _ = relaxed_log_barrier(np.array([-0.5]), 0.01)
        assert np.isfinite(b[0]) and b[0] > 0
        assert d1[0] < 0

    def test_barrier_terms_derivatives(self, a1):
        rng = np.random.default_rng(60)
        s = np.array([True, True, True, False])
        for _ in range(10):
            u = np.zeros(24)
            u[:12] = rng.uniform(5.0, 50.0, 12)
            val, lu, luu = grf_barrier_terms(u, s, 0.6, weight=1e-2, delta=0.01)
            f = lambda uu: grf_barrier_terms(uu, s, 0.6, 1e-2, 0.01)[0]
            g = lambda uu: grf_barrier_terms(uu, s, 0.6, 1e-2, 0.01)[1]
            assert rel_error(lu, central_difference(f, u).ravel()) < 1e-6
            assert rel_error(luu, central_difference(g, u)) < 1e-5


class TestCostWeights:
    def test_rejects_asymmetric(self):
        body = np.eye(12)
        body[0, 1] = 0.5
        with pytest.raises(ValueError, match="symmetric"):
            CostWeights(body=body, joint=np.eye(3), foot=np.eye(3), grf=np.eye(3))

    def test_rejects_indefinite_grf(self):
        with pytest.raises(ValueError, match="definite"):
            CostWeights(body=np.eye(12), joint=np.eye(3), foot=np.eye(3),
                        grf=np.diag([1.0, 1.0, 0.0]))
