"""Heuristic reference trajectories for the tracking cost.

Per gait segment the commanded height and planar velocities are constant;
x, y references integrate the commanded velocities from the measured
position at the window start, so references re-anchor at every replan.
Attitude and angular-velocity references are zero (plus an optional yaw
rate). Swing-leg joint references are the static standing pose. Stance-leg
ground-reaction references split the robot's weight evenly over the legs
in contact. Foot-placement references follow a Raibert-style rule.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import dynamics, robot
from .dynamics import OMEGA, POS, THETA, VEL, grf_slice, y_slice
from .gait import ContactSchedule
from .robot import LEGS, LegIndex, RobotParams
from .rotations import rot_z

_MAX_RAIBERT_STANCE = 0.4  # cap on the half-stance shift horizon (s)


@dataclass(frozen=True)
class MotionCommand:
    """Per-segment body command: height plus planar velocities."""

    height: float
    vx: float = 0.0
    vy: float = 0.0
    yaw_rate: float = 0.0

    def __post_init__(self):
        if self.height <= 0:
            raise ValueError("commanded height must be positive")


@dataclass
class CommandScript:
    """Absolute-time command timeline with parabolic height bumps over flights."""

    entries: list  # (t_start, t_end, MotionCommand); last entry extends past its end
    bumps: list = field(default_factory=list)  # (t_start, t_end, apex_rise)

    def command_at(self, t: float) -> MotionCommand:
        for t0, t1, cmd in self.entries:
            if t0 - 1e-9 <= t < t1 - 1e-9:
                return cmd
        return self.entries[-1][2]

    def height_profile(self, t: float) -> tuple[float, float]:
        """Reference (z, vz) at time t, including the flight bump."""
        base = self.command_at(t).height
        for t0, t1, apex in self.bumps:
            if t0 - 1e-9 <= t < t1 - 1e-9:
                duration = t1 - t0
                tau = (t - t0) / duration
                z = base + 4.0 * apex * tau * (1.0 - tau)
                vz = 4.0 * apex * (1.0 - 2.0 * tau) / duration
                return z, vz
        return base, 0.0


@dataclass
class ReferenceTrajectory:
    """Per-step references over one planning window.

    x_ref (N+1, 24): body reference plus per-leg joint (swing) or world
    foothold (stance) references; lambda_ref (N, 4, 3); r_ref (N, 4, 3)
    relative foot targets in the yaw-aligned hip-projected frame.
    """

    x_ref: np.ndarray
    lambda_ref: np.ndarray
    r_ref: np.ndarray
    start: float
    dt: float


def grf_reference(s: np.ndarray, params: RobotParams) -> np.ndarray:
    """Even weight split over the stance legs, vertical only: (4, 3)."""
    out = np.zeros((4, 3))
    n_stance = int(np.sum(s))
    if n_stance == 0:
        return out
    fz = params.mass * abs(params.gravity[2]) / n_stance
    for leg in LEGS:
        if s[leg.idx]:
            out[leg.idx, 2] = fz
    return out


def neutral_foothold(params: RobotParams, leg: LegIndex) -> np.ndarray:
    """Hip projection on the ground plane: hip offset plus abduction link."""
    hip = params.hip_offset(leg)
    return np.array([hip[0], hip[1] + leg.side * params.abduction_length, 0.0])


def raibert_target(
    v_now: np.ndarray,
    v_cmd: np.ndarray,
    stance_duration: float,
    leg: LegIndex,
    params: RobotParams,
    gain: float | None = None,
) -> np.ndarray:
    """Relative foot target: hip projection plus velocity-based offsets (z = 0)."""
    if stance_duration <= 0:
        raise ValueError("stance duration must be positive")
    if gain is None:
        gain = np.sqrt(params.standing_height / abs(params.gravity[2]))
    r = neutral_foothold(params, leg).copy()
    r[0] += 0.5 * stance_duration * v_now[0] + gain * (v_now[0] - v_cmd[0])
    r[1] += 0.5 * stance_duration * v_now[1] + gain * (v_now[1] - v_cmd[1])
    return r


def _stance_runs(win: ContactSchedule, leg: LegIndex, lookahead: int = 400):
    """Maximal stance runs [b, e) of the leg over the window, with the run end
    resolved past the window via the tail pattern (capped)."""
    n = win.n_steps
    runs = []
    k = 0
    while k < n:
        if win.contact[leg.idx, k]:
            b = k
            e = k
            while e < n + lookahead and win.flags_at_step(e)[leg.idx]:
                e += 1
            runs.append((b, e))
            k = min(e, n)
        else:
            k += 1
    return runs


def generate_reference(
    script: CommandScript,
    win: ContactSchedule,
    x_now: np.ndarray,
    params: RobotParams,
    raibert_gain: float | None = None,
) -> ReferenceTrajectory:
    """Build the reference trajectory for one planning window."""
    n = win.n_steps
    dt = win.dt
    times = win.start + dt * np.arange(n + 1)

    x_ref = np.zeros((n + 1, dynamics.N_STATE))
    lam_ref = np.zeros((n, 4, 3))
    r_ref = np.zeros((n, 4, 3))

    # body block: integrate commanded planar velocities from the measured pose
    px, py = x_now[POS][0], x_now[POS][1]
    yaw_cmds = [script.command_at(t).yaw_rate for t in times[:-1]]
    track_yaw = any(abs(w) > 1e-12 for w in yaw_cmds)
    yaw = x_now[THETA][2] if track_yaw else 0.0
    for k in range(n + 1):
        t = times[k]
        cmd = script.command_at(t)
        z, vz = script.height_profile(t)
        v_world = rot_z(yaw) @ np.array([cmd.vx, cmd.vy, 0.0])
        x_ref[k, THETA] = (0.0, 0.0, yaw)
        x_ref[k, POS] = (px, py, z)
        x_ref[k, OMEGA] = (0.0, 0.0, cmd.yaw_rate)
        x_ref[k, VEL] = (v_world[0], v_world[1], vz)
        if k < n:
            px += v_world[0] * dt
            py += v_world[1] * dt
            yaw += cmd.yaw_rate * dt

    # per-leg references
    v_now = x_now[VEL]
    for leg in LEGS:
        ys = y_slice(leg)
        x_ref[:, ys] = params.default_angles(leg)  # swing default, overwritten in stance
        runs = _stance_runs(win, leg, lookahead=int(round(2.0 / dt)))
        for b, e in runs:
            if b == 0:
                target = x_now[ys].copy()  # leg already planted: keep its foothold
                rel = target - np.array([x_ref[0, 3], x_ref[0, 4], 0.0])
            else:
                t_td = times[b]
                cmd = script.command_at(t_td)
                v_cmd = rot_z(x_ref[b, 2]) @ np.array([cmd.vx, cmd.vy, 0.0])
                # long stance runs (stand segments) would push the half-stance
                # term far outside the leg workspace; cap the duration
                t_stance = min((e - b) * dt, _MAX_RAIBERT_STANCE)
                rel = raibert_target(v_now, v_cmd, t_stance, leg, params, raibert_gain)
                anchor = np.array([x_ref[b, 3], x_ref[b, 4], 0.0])
                target = anchor + rot_z(x_ref[b, 2]) @ rel
                target[2] = 0.0
            # rows b..e-1 take the stance interpretation; the terminal row
            # is pre-reset, so a run reaching the horizon end also owns it
            for k in range(b, min(e, n)):
                x_ref[k, ys] = target
                r_ref[k, leg.idx] = rel
            if e >= n:
                x_ref[n, ys] = target
        # swing steps carry the upcoming stance target in r_ref
        next_rel = None
        for k in range(n - 1, -1, -1):
            if win.contact[leg.idx, k]:
                next_rel = r_ref[k, leg.idx]
            elif next_rel is not None:
                r_ref[k, leg.idx] = next_rel

    for k in range(n):
        lam_ref[k] = grf_reference(win.contact[:, k], params)

    return ReferenceTrajectory(x_ref=x_ref, lambda_ref=lam_ref, r_ref=r_ref, start=win.start, dt=dt)
