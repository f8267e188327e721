import numpy as np
import pytest

from hkdmpc.dynamics import POS, THETA, VEL, standing_state, y_slice
from hkdmpc.gait import compose, preset, window
from hkdmpc.reference import (
    CommandScript,
    MotionCommand,
    ReferenceTrajectory,
    generate_reference,
    grf_reference,
    neutral_foothold,
    raibert_target,
)
from hkdmpc.robot import LEGS, LegIndex

DT = 0.01


def stand_script(height=0.26, vx=0.0, vy=0.0):
    return CommandScript(entries=[(0.0, 1e9, MotionCommand(height=height, vx=vx, vy=vy))])


class TestGrfReference:
    def test_four_legs_even_split(self, a1):
        lam = grf_reference(np.ones(4, dtype=bool), a1)
        np.testing.assert_allclose(lam[:, 2], 12.0 * 9.81 / 4.0)
        assert lam[0, 2] == pytest.approx(29.43)
        np.testing.assert_array_equal(lam[:, :2], 0.0)

    def test_two_legs_half_weight(self, a1):
        s = np.array([True, False, False, True])
        lam = grf_reference(s, a1)
        assert lam[0, 2] == pytest.approx(a1.mass * 9.81 / 2.0)
        assert lam[3, 2] == pytest.approx(a1.mass * 9.81 / 2.0)
        np.testing.assert_array_equal(lam[1], 0.0)
        np.testing.assert_array_equal(lam[2], 0.0)

    def test_flight_guard(self, a1):
        np.testing.assert_array_equal(grf_reference(np.zeros(4, dtype=bool), a1), 0.0)

    def test_total_weight_invariant(self, a1):
        rng = np.random.default_rng(41)
        for _ in range(20):
            s = rng.integers(0, 2, 4).astype(bool)
            if not np.any(s):
                continue
            lam = grf_reference(s, a1)
            assert np.sum(lam[:, 2]) == pytest.approx(a1.mass * 9.81)


class TestRaibertTarget:
    def test_zero_velocity_at_hip_projection(self, a1):
        for leg in LEGS:
            r = raibert_target(np.zeros(3), np.zeros(3), 0.18, leg, a1)
            np.testing.assert_allclose(r, neutral_foothold(a1, leg))

    def test_forward_shift_formula(self, a1):
        v = np.array([0.5, 0.0, 0.0])
        r = raibert_target(v, v, 0.18, LegIndex.FRONT_LEFT, a1)
        base = neutral_foothold(a1, LegIndex.FRONT_LEFT)
        assert r[0] - base[0] == pytest.approx(0.045)
        assert r[1] == pytest.approx(base[1])

    def test_zero_z_component(self, a1):
        rng = np.random.default_rng(42)
        for _ in range(10):
            r = raibert_target(rng.normal(size=3), rng.normal(size=3), 0.2,
                               LegIndex.HIND_RIGHT, a1)
            assert r[2] == 0.0

    def test_velocity_error_term(self, a1):
        gain = 0.3
        v_now = np.array([0.8, 0.0, 0.0])
        v_cmd = np.array([0.5, 0.0, 0.0])
        r = raibert_target(v_now, v_cmd, 0.2, LegIndex.FRONT_LEFT, a1, gain=gain)
        base = neutral_foothold(a1, LegIndex.FRONT_LEFT)
        assert r[0] - base[0] == pytest.approx(0.5 * 0.2 * 0.8 + gain * 0.3)

    def test_requires_positive_duration(self, a1):
        with pytest.raises(ValueError):
            raibert_target(np.zeros(3), np.zeros(3), 0.0, LegIndex.FRONT_LEFT, a1)


class TestGenerateReference:
    def test_standing_reference(self, a1):
        sched = compose([preset("stand", 1.0)], DT)
        win = window(sched, 0.0, 0.5)
        x_now = standing_state(a1)
        ref = generate_reference(stand_script(), win, x_now, a1)
        assert ref.x_ref.shape == (51, 24)
        np.testing.assert_allclose(ref.x_ref[:, 5], 0.26)
        np.testing.assert_allclose(ref.x_ref[:, THETA], 0.0)
        np.testing.assert_allclose(ref.x_ref[:, 3], x_now[3])
        # planted feet keep their current footholds
        for leg in LEGS:
            np.testing.assert_allclose(ref.x_ref[0, y_slice(leg)], x_now[y_slice(leg)])

    def test_velocity_integration(self, a1):
        sched = compose([preset("stand", 1.0)], DT)
        win = window(sched, 0.0, 0.5)
        x_now = standing_state(a1)
        ref = generate_reference(stand_script(vx=0.5), win, x_now, a1)
        assert ref.x_ref[50, 3] - ref.x_ref[0, 3] == pytest.approx(0.25)
        diffs = np.diff(ref.x_ref[:, 3])
        np.testing.assert_allclose(diffs, 0.005, atol=1e-12)

    def test_flight_bump_profile(self, a1):
        script = CommandScript(
            entries=[(0.0, 1e9, MotionCommand(height=0.26))],
            bumps=[(0.2, 0.5, 0.11)],
        )
        sched = compose([preset("stand", 0.2), preset("flight", 0.3), preset("stand", 0.3)], DT)
        win = window(sched, 0.0, 0.5)
        ref = generate_reference(script, win, standing_state(a1), a1)
        z = ref.x_ref[:, 5]
        assert z[0] == pytest.approx(0.26)
        k_apex = 20 + 15  # mid-flight
        assert z[k_apex] == pytest.approx(0.26 + 0.11, abs=1e-6)
        assert np.max(z) == pytest.approx(0.37, abs=1e-3)
        # vertical velocity reference is the bump derivative
        assert ref.x_ref[25, 11] > 0 > ref.x_ref[45, 11]

    def test_swing_legs_get_default_angles(self, a1):
        sched = compose([preset("flight", 0.6)], DT)
        win = window(sched, 0.0, 0.5)
        ref = generate_reference(stand_script(), win, standing_state(a1), a1)
        for leg in LEGS:
            np.testing.assert_allclose(
                ref.x_ref[:, y_slice(leg)], np.tile(a1.default_angles(leg), (51, 1))
            )

    def test_upcoming_touchdown_uses_raibert_anchor(self, a1):
        sched = compose([preset("flight", 0.1), preset("stand", 1.0)], DT)
        win = window(sched, 0.0, 0.5)
        x_now = standing_state(a1)
        x_now[VEL] = (0.4, 0.0, 0.0)
        ref = generate_reference(stand_script(vx=0.4), win, x_now, a1)
        leg = LegIndex.FRONT_LEFT
        target = ref.x_ref[10, y_slice(leg)]
        assert target[2] == 0.0
        # anchored at the touchdown-time body reference plus the Raibert offset
        anchor_x = ref.x_ref[10, 3]
        stance_time = 0.4  # indefinite stand stance, capped by the generator
        expected_rel = raibert_target(x_now[VEL], np.array([0.4, 0, 0]), stance_time, leg, a1)
        assert target[0] == pytest.approx(anchor_x + expected_rel[0], abs=1e-6)

    def test_lambda_ref_gated_by_contact(self, a1):
        sched = compose([preset("jump", 0.6, crouch=0.3, flight=0.3)], DT)
        win = window(sched, 0.0, 0.5)
        ref = generate_reference(stand_script(), win, standing_state(a1), a1)
        np.testing.assert_allclose(ref.lambda_ref[:30, :, 2], 12.0 * 9.81 / 4)
        np.testing.assert_array_equal(ref.lambda_ref[30:], 0.0)

    def test_replay_equality(self, a1):
        sched = compose([preset("trot", 1.44)], DT)
        win = window(sched, 0.13, 0.5)
        x_now = standing_state(a1)
        x_now[VEL] = (0.3, 0.1, 0.0)
        r1 = generate_reference(stand_script(vx=0.3, vy=0.1), win, x_now, a1)
        r2 = generate_reference(stand_script(vx=0.3, vy=0.1), win, x_now, a1)
        np.testing.assert_array_equal(r1.x_ref, r2.x_ref)
        np.testing.assert_array_equal(r1.lambda_ref, r2.lambda_ref)
        np.testing.assert_array_equal(r1.r_ref, r2.r_ref)

    def test_window_continuity(self, a1):
        # consecutive windows with unchanged commands produce piecewise-linear
        # x references that agree on the overlap when re-anchored consistently
        sched = compose([preset("stand", 2.0)], DT)
        x_now = standing_state(a1)
        x_now[VEL] = (0.2, 0.0, 0.0)
        w1 = window(sched, 0.0, 0.5)
        r1 = generate_reference(stand_script(vx=0.2), w1, x_now, a1)
        x_next = x_now.copy()
        x_next[3] += 0.2 * DT
        w2 = window(sched, DT, 0.5)
        r2 = generate_reference(stand_script(vx=0.2), w2, x_next, a1)
        np.testing.assert_allclose(r2.x_ref[:-1, 3], r1.x_ref[1:, 3], atol=1e-12)
