import numpy as np
import pytest
from oracles import central_difference, rel_error

from hkdmpc import dynamics, robot
from hkdmpc.dynamics import (
    GimbalLock,
    ModeError,
    OMEGA,
    POS,
    THETA,
    VEL,
    continuous_dynamics,
    euler_rate_matrix,
    grf_slice,
    integrate_step,
    joint_vel_slice,
    linearize_rollout,
    linearize_step,
    reset_jacobian,
    reset_takeoff,
    reset_touchdown,
    standing_state,
    y_slice,
)
from hkdmpc.robot import LEGS, LegIndex
from hkdmpc.rotations import euler_to_rotation, skew


def random_state_control(rng, params, s):
    """Random but physically plausible state/control pair for flags s."""
    x = np.zeros(24)
    x[THETA] = rng.uniform(-0.4, 0.4, 3)
    x[POS] = rng.uniform(-0.5, 0.5, 3) + np.array([0.0, 0.0, 0.3])
    x[OMEGA] = rng.uniform(-2.0, 2.0, 3)
    x[VEL] = rng.uniform(-1.0, 1.0, 3)
    u = np.zeros(24)
    for leg in LEGS:
        if s[leg.idx]:
            x[y_slice(leg)] = x[POS] + rng.uniform(-0.3, 0.3, 3) - np.array([0, 0, 0.55])
            u[grf_slice(leg)] = rng.uniform(-30.0, 60.0, 3)
        else:
            x[y_slice(leg)] = params.default_angles(leg) + rng.uniform(-0.3, 0.3, 3)
            u[joint_vel_slice(leg)] = rng.uniform(-4.0, 4.0, 3)
    return x, u


class TestEulerRateMatrix:
    def test_identity_at_zero(self):
        np.testing.assert_allclose(euler_rate_matrix(np.zeros(3)), np.eye(3), atol=1e-15)

    def test_gimbal_lock_raises(self):
        with pytest.raises(GimbalLock):
            euler_rate_matrix(np.array([0.0, np.pi / 2, 0.0]))
        with pytest.raises(GimbalLock):
            euler_rate_matrix(np.array([0.3, -np.pi / 2 + 1e-5, 1.0]))

    def test_consistent_with_rotation_integration(self):
        # integrate R_dot = R [w]x from random attitudes and check that the
        # finite-difference Euler-angle rate matches T(theta) @ omega
        rng = np.random.default_rng(21)
        h = 1e-6
        for _ in range(20):
            theta = rng.uniform(-0.9, 0.9, 3)
            omega = rng.uniform(-2.0, 2.0, 3)
            T = euler_rate_matrix(theta)
            R = euler_to_rotation(theta)
            R_next = R @ (np.eye(3) + h * skew(omega) + 0.5 * h * h * skew(omega) @ skew(omega))
            pitch = np.arctan2(-R_next[2, 0], np.hypot(R_next[2, 1], R_next[2, 2]))
            roll = np.arctan2(R_next[2, 1], R_next[2, 2])
            yaw = np.arctan2(R_next[1, 0], R_next[0, 0])
            fd = (np.array([roll, pitch, yaw]) - theta) / h
            assert rel_error(T @ omega, fd) < 1e-4


class TestContinuousDynamics:
    def test_static_equilibrium(self, a1):
        x = standing_state(a1)
        u = np.zeros(24)
        fz = a1.mass * 9.81 / 4.0
        for leg in LEGS:
            u[grf_slice(leg)] = (0.0, 0.0, fz)
        xdot = continuous_dynamics(x, u, np.ones(4, dtype=bool), a1)
        np.testing.assert_allclose(xdot[VEL], 0.0, atol=1e-12)
        np.testing.assert_allclose(xdot[OMEGA], 0.0, atol=1e-10)

    def test_flight_is_ballistic(self, a1):
        rng = np.random.default_rng(22)
        x, u = random_state_control(rng, a1, np.zeros(4, dtype=bool))
        u[:12] = rng.normal(size=12) * 50.0  # GRFs are ignored in flight
        xdot = continuous_dynamics(x, u, np.zeros(4, dtype=bool), a1)
        np.testing.assert_array_equal(xdot[VEL], a1.gravity)
        for leg in LEGS:
            np.testing.assert_array_equal(xdot[y_slice(leg)], u[joint_vel_slice(leg)])

    def test_single_foot_moment_oracle(self, a1):
        x = standing_state(a1)
        s = np.zeros(4, dtype=bool)
        s[0] = True
        foot = x[POS] + np.array([0.1, 0.0, -0.26])
        x[y_slice(LegIndex.FRONT_RIGHT)] = foot
        u = np.zeros(24)
        lam = np.array([0.0, 0.0, 40.0])
        u[grf_slice(LegIndex.FRONT_RIGHT)] = lam
        xdot = continuous_dynamics(x, u, s, a1)
        expected = a1.inertia_inv @ np.cross(foot - x[POS], lam)  # R = I at zero attitude
        np.testing.assert_allclose(xdot[OMEGA], expected, atol=1e-10)

    def test_mode_complementarity(self, a1):
        rng = np.random.default_rng(23)
        s = np.array([True, False, True, False])
        x, u = random_state_control(rng, a1, s)
        base = continuous_dynamics(x, u, s, a1)
        u2 = u.copy()
        u2[joint_vel_slice(LegIndex.FRONT_RIGHT)] += 5.0   # stance leg joint rate
        u2[grf_slice(LegIndex.FRONT_LEFT)] += 100.0        # swing leg force
        np.testing.assert_array_equal(continuous_dynamics(x, u2, s, a1), base)


class TestIntegrateStep:
    def test_gravity_only_velocity_drop(self, a1):
        x = standing_state(a1)
        x_next = integrate_step(x, np.zeros(24), np.zeros(4, dtype=bool), 0.01, a1)
        assert x_next[VEL][2] == pytest.approx(-0.0981, abs=1e-12)

    def test_stance_foothold_bit_identical(self, a1):
        rng = np.random.default_rng(24)
        s = np.ones(4, dtype=bool)
        x, u = random_state_control(rng, a1, s)
        x_next = integrate_step(x, u, s, 0.01, a1)
        for leg in LEGS:
            np.testing.assert_array_equal(x_next[y_slice(leg)], x[y_slice(leg)])

    def test_first_order_convergence(self, a1):
        # step-halving on a 0.5 s stance rollout: the error vs a fine
        # reference should shrink linearly with dt
        s = np.ones(4, dtype=bool)
        x0 = standing_state(a1)
        u = np.zeros(24)
        for leg in LEGS:
            u[grf_slice(leg)] = (3.0, 2.0, a1.mass * 9.81 / 4.0 + 4.0)

        def rollout(dt):
            x = x0.copy()
            for _ in range(int(round(0.5 / dt))):
                x = integrate_step(x, u, s, dt, a1)
            return x

        ref = rollout(0.000125)
        errs = [np.linalg.norm(rollout(dt)[:12] - ref[:12]) for dt in (0.01, 0.005, 0.0025)]
        assert errs[0] / errs[1] == pytest.approx(2.0, rel=0.15)
        assert errs[1] / errs[2] == pytest.approx(2.0, rel=0.15)

    def test_ballistic_apex(self, a1):
        # flight-phase rollout reaches the analytic apex within the
        # first-order-integrator tolerance, and the error is O(dt)
        def apex_rise(vz0, dt):
            x = standing_state(a1)
            x[VEL] = (0.0, 0.0, vz0)
            s = np.zeros(4, dtype=bool)
            apex = z0 = x[POS][2]
            while x[VEL][2] > 0:
                x = integrate_step(x, np.zeros(24), s, dt, a1)
                apex = max(apex, x[POS][2])
            return apex - z0

        vz0 = 6.0
        analytic = vz0**2 / (2 * 9.81)
        err = abs(apex_rise(vz0, 0.01) - analytic) / analytic
        assert err < 0.02
        err_half = abs(apex_rise(vz0, 0.005) - analytic) / analytic
        assert err_half == pytest.approx(err / 2, rel=0.25)


class TestResets:
    def test_touchdown_is_forward_kinematics(self, a1):
        x = standing_state(a1)
        leg = LegIndex.FRONT_LEFT
        s = np.ones(4, dtype=bool)
        s[leg.idx] = False
        x[y_slice(leg)] = a1.default_angles(leg)
        x_plus = reset_touchdown(x, leg, a1, s)
        expected = robot.forward_kinematics(
            a1, leg, a1.default_angles(leg), x[POS], euler_to_rotation(x[THETA])
        )
        np.testing.assert_allclose(x_plus[y_slice(leg)], expected, atol=1e-14)

    def test_touchdown_touches_only_target_leg(self, a1):
        rng = np.random.default_rng(25)
        s = np.array([False, True, True, True])
        x, _ = random_state_control(rng, a1, s)
        x_plus = reset_touchdown(x, LegIndex.FRONT_RIGHT, a1, s)
        np.testing.assert_array_equal(x_plus[:12], x[:12])
        for leg in LEGS[1:]:
            np.testing.assert_array_equal(x_plus[y_slice(leg)], x[y_slice(leg)])

    def test_double_touchdown_guarded(self, a1):
        x = standing_state(a1)
        with pytest.raises(ModeError):
            reset_touchdown(x, LegIndex.FRONT_RIGHT, a1, np.ones(4, dtype=bool))

    def test_takeoff_resets_to_default(self, a1):
        rng = np.random.default_rng(26)
        s = np.ones(4, dtype=bool)
        x, _ = random_state_control(rng, a1, s)
        leg = LegIndex.HIND_LEFT
        x_plus = reset_takeoff(x, leg, a1, s)
        np.testing.assert_array_equal(x_plus[y_slice(leg)], a1.default_angles(leg))
        np.testing.assert_array_equal(x_plus[:12], x[:12])

    def test_takeoff_requires_stance(self, a1):
        x = standing_state(a1)
        with pytest.raises(ModeError):
            reset_takeoff(x, LegIndex.FRONT_RIGHT, a1, np.zeros(4, dtype=bool))

    def test_takeoff_then_touchdown_is_default_fk(self, a1):
        x = standing_state(a1)
        leg = LegIndex.FRONT_RIGHT
        x2 = reset_takeoff(x, leg, a1, np.ones(4, dtype=bool))
        x3 = reset_touchdown(x2, leg, a1, np.zeros(4, dtype=bool))
        expected = robot.forward_kinematics(
            a1, leg, a1.default_angles(leg), x[POS], euler_to_rotation(x[THETA])
        )
        np.testing.assert_allclose(x3[y_slice(leg)], expected, atol=1e-14)


class TestLinearization:
    @pytest.mark.parametrize("pattern", [
        np.array([True, True, True, True]),
        np.array([False, False, False, False]),
        np.array([True, False, False, True]),
        np.array([False, True, True, False]),
    ])
    def test_matches_finite_difference(self, a1, pattern):
        rng = np.random.default_rng(int(np.sum(pattern) + 31))
        dt = 0.01
        for _ in range(50):
            x, u = random_state_control(rng, a1, pattern)
            A, B = linearize_step(x, u, pattern, dt, a1)
            A_fd = central_difference(lambda xx: integrate_step(xx, u, pattern, dt, a1), x)
            B_fd = central_difference(lambda uu: integrate_step(x, uu, pattern, dt, a1), u)
            assert rel_error(A, A_fd) < 1e-5
            assert rel_error(B, B_fd) < 1e-5

    def test_flight_grf_columns_zero(self, a1):
        rng = np.random.default_rng(33)
        s = np.zeros(4, dtype=bool)
        x, u = random_state_control(rng, a1, s)
        _, B = linearize_step(x, u, s, 0.01, a1)
        np.testing.assert_array_equal(B[VEL, :12], 0.0)

    def test_stance_y_block_identity(self, a1):
        rng = np.random.default_rng(34)
        s = np.ones(4, dtype=bool)
        x, u = random_state_control(rng, a1, s)
        A, _ = linearize_step(x, u, s, 0.01, a1)
        for leg in LEGS:
            ys = y_slice(leg)
            np.testing.assert_array_equal(A[ys, ys], np.eye(3))
            block = A[ys, :].copy()
            block[:, ys] -= np.eye(3)
            np.testing.assert_array_equal(block, 0.0)

    def test_batch_equals_single(self, a1):
        rng = np.random.default_rng(35)
        s = np.array([True, False, True, False])
        xs, us = [], []
        for _ in range(7):
            x, u = random_state_control(rng, a1, s)
            xs.append(x)
            us.append(u)
        xs, us = np.array(xs), np.array(us)
        A_batch, B_batch = linearize_rollout(xs, us, s, 0.01, a1)
        for i in range(7):
            A_i, B_i = linearize_step(xs[i], us[i], s, 0.01, a1)
            np.testing.assert_allclose(A_batch[i], A_i, atol=1e-14)
            np.testing.assert_allclose(B_batch[i], B_i, atol=1e-14)


class TestResetJacobian:
    def test_takeoff_structure(self, a1):
        x = standing_state(a1)
        leg = LegIndex.FRONT_LEFT
        P = reset_jacobian(x, leg, "takeoff", a1)
        ys = y_slice(leg)
        np.testing.assert_array_equal(P[ys, :], 0.0)
        np.testing.assert_array_equal(P[:12, :12], np.eye(12))
        others = np.ones(24, dtype=bool)
        others[ys] = False
        np.testing.assert_array_equal(P[others][:, others], np.eye(21))

    def test_touchdown_matches_finite_difference(self, a1):
        rng = np.random.default_rng(36)
        leg = LegIndex.HIND_RIGHT
        s = np.zeros(4, dtype=bool)
        for _ in range(20):
            x, _ = random_state_control(rng, a1, s)
            P = reset_jacobian(x, leg, "touchdown", a1)
            P_fd = central_difference(lambda xx: reset_touchdown(xx, leg, a1, s), x)
            assert rel_error(P, P_fd) < 1e-6

    def test_unknown_kind_rejected(self, a1):
        with pytest.raises(ValueError, match="kind"):
            reset_jacobian(standing_state(a1), LegIndex.FRONT_LEFT, "landing", a1)
