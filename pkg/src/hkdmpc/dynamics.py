"""Contact-dependent body dynamics with per-leg flexible kinematic variables.

State layout (24 entries):
  [0:3]   theta   Euler angles (roll, pitch, yaw)
  [3:6]   p       CoM position, world frame
  [6:9]   omega   angular velocity, body frame
  [9:12]  v       linear velocity, world frame
  [12:24] y_j     per-leg 3-vector: foothold position (world) while the leg
                  is in contact, joint angles while it swings

Control layout (24 entries):
  [0:12]  lambda_j  per-leg ground reaction force, world frame
  [12:24] uJ_j      per-leg commanded joint velocity

The interpretation of y_j / the relevance of lambda_j vs uJ_j is decided
solely by the contemporaneous contact flag s_j. Mode switches are handled
by the reset maps, not by the continuous dynamics.
"""

from __future__ import annotations

import numpy as np

from . import robot
from .robot import LEGS, LegIndex, RobotParams
from .rotations import (
    euler_to_rotation,
    euler_to_rotation_batch,
    rotation_derivatives,
    rotation_derivatives_batch,
    skew,
    skew_batch,
)

N_STATE = 24
N_CONTROL = 24

THETA = slice(0, 3)
POS = slice(3, 6)
OMEGA = slice(6, 9)
VEL = slice(9, 12)
BODY = slice(0, 12)

_GIMBAL_MARGIN = 1e-3


class GimbalLock(ValueError):
    """Pitch too close to +-pi/2 for the Euler-rate map."""


class ModeError(ValueError):
    """Reset map applied to a leg in the wrong contact mode."""


def y_slice(leg: LegIndex) -> slice:
    return slice(12 + 3 * leg.idx, 15 + 3 * leg.idx)


def grf_slice(leg: LegIndex) -> slice:
    return slice(3 * leg.idx, 3 + 3 * leg.idx)


def joint_vel_slice(leg: LegIndex) -> slice:
    return slice(12 + 3 * leg.idx, 15 + 3 * leg.idx)


def pack_state(theta, p, omega, v, ys) -> np.ndarray:
    x = np.empty(N_STATE)
    x[THETA], x[POS], x[OMEGA], x[VEL] = theta, p, omega, v
    for leg in LEGS:
        x[y_slice(leg)] = ys[leg.idx]
    return x


def standing_state(params: RobotParams, height: float | None = None) -> np.ndarray:
    """Nominal all-stance state: level body at standing height, feet under hips."""
    h = params.standing_height if height is None else height
    p = np.array([0.0, 0.0, h])
    ys = [
        robot.forward_kinematics(params, leg, params.default_angles(leg), body_position=p)
        for leg in LEGS
    ]
    return pack_state(np.zeros(3), p, np.zeros(3), np.zeros(3), ys)


def _check_pitch(pitch: float) -> None:
    if abs(np.cos(pitch)) < _GIMBAL_MARGIN:
        raise GimbalLock(f"pitch {pitch:.4f} rad is within {_GIMBAL_MARGIN} of +-pi/2")


def euler_rate_matrix(theta: np.ndarray) -> np.ndarray:
    """Matrix T with theta_dot = T(theta) @ omega_body for ZYX Euler angles."""
    _check_pitch(theta[1])
    sr, cr = np.sin(theta[0]), np.cos(theta[0])
    cp = np.cos(theta[1])
    tp = np.tan(theta[1])
    return np.array(
        [
            [1.0, sr * tp, cr * tp],
            [0.0, cr, -sr],
            [0.0, sr / cp, cr / cp],
        ]
    )


def _cross3(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # np.cross has large per-call overhead for single 3-vectors
    return np.array(
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    )


_LEG_SLICES = [slice(12 + 3 * j, 15 + 3 * j) for j in range(4)]
_GRF_SLICES = [slice(3 * j, 3 + 3 * j) for j in range(4)]


def continuous_dynamics(
    x: np.ndarray, u: np.ndarray, s: np.ndarray, params: RobotParams
) -> np.ndarray:
    """Time derivative of the hybrid state under contact flags s."""
    theta = x[THETA]
    omega = x[OMEGA]
    T = euler_rate_matrix(theta)
    R = euler_to_rotation(theta)

    xdot = np.zeros(N_STATE)
    xdot[THETA] = T @ omega
    xdot[POS] = x[VEL]

    force = np.zeros(3)
    moment_w = np.zeros(3)
    p = x[POS]
    for j in range(4):
        if s[j]:
            lam = u[_GRF_SLICES[j]]
            force += lam
            moment_w += _cross3(x[_LEG_SLICES[j]] - p, lam)
        else:
            xdot[_LEG_SLICES[j]] = u[_LEG_SLICES[j]]

    inertia = params.inertia
    xdot[OMEGA] = params.inertia_inv @ (R.T @ moment_w - _cross3(omega, inertia @ omega))
    xdot[VEL] = params.gravity + force / params.mass
    return xdot


def integrate_step(
    x: np.ndarray, u: np.ndarray, s: np.ndarray, dt: float, params: RobotParams
) -> np.ndarray:
    """Explicit forward-Euler step. Stance-leg y entries are bit-identical."""
    xdot = continuous_dynamics(x, u, s, params)
    out = x + dt * xdot
    for j in range(4):
        if s[j]:
            out[_LEG_SLICES[j]] = x[_LEG_SLICES[j]]
    return out


def reset_touchdown(
    x: np.ndarray, leg: LegIndex, params: RobotParams, contact_before: np.ndarray
) -> np.ndarray:
    """Swing -> stance: the leg's joint angles become its world foothold."""
    if contact_before[leg.idx]:
        raise ModeError(f"touchdown reset on leg {leg.name} that is already in contact")
    out = x.copy()
    R = euler_to_rotation(x[THETA])
    out[y_slice(leg)] = robot.forward_kinematics(params, leg, x[y_slice(leg)], x[POS], R)
    return out


def reset_takeoff(
    x: np.ndarray, leg: LegIndex, params: RobotParams, contact_before: np.ndarray
) -> np.ndarray:
    """Stance -> swing: the leg's variable becomes the default joint angles."""
    if not contact_before[leg.idx]:
        raise ModeError(f"takeoff reset on leg {leg.name} that is not in contact")
    out = x.copy()
    out[y_slice(leg)] = params.default_angles(leg)
    return out


def linearize_rollout(
    xs: np.ndarray, us: np.ndarray, s: np.ndarray, dt: float, params: RobotParams
) -> tuple[np.ndarray, np.ndarray]:
    """Exact Jacobians of integrate_step for a batch of states sharing flags s.

    xs (m, 24), us (m, 24) -> A (m, 24, 24), B (m, 24, 24).
    """
    xs = np.atleast_2d(xs)
    us = np.atleast_2d(us)
    m = xs.shape[0]
    thetas = xs[:, THETA]
    if np.any(np.abs(np.cos(thetas[:, 1])) < _GIMBAL_MARGIN):
        raise GimbalLock("pitch within gimbal-lock margin in linearization batch")

    omegas = xs[:, OMEGA]
    R = euler_to_rotation_batch(thetas)
    Rt = R.transpose(0, 2, 1)
    dRs = rotation_derivatives_batch(thetas)
    inertia = params.inertia
    iinv = params.inertia_inv

    jx = np.zeros((m, N_STATE, N_STATE))
    ju = np.zeros((m, N_STATE, N_CONTROL))

    # Euler-rate block
    sr, cr = np.sin(thetas[:, 0]), np.cos(thetas[:, 0])
    sp, cp = np.sin(thetas[:, 1]), np.cos(thetas[:, 1])
    tp = sp / cp
    T = np.zeros((m, 3, 3))
    T[:, 0, 0] = 1.0
    T[:, 0, 1] = sr * tp
    T[:, 0, 2] = cr * tp
    T[:, 1, 1] = cr
    T[:, 1, 2] = -sr
    T[:, 2, 1] = sr / cp
    T[:, 2, 2] = cr / cp
    dT_roll = np.zeros((m, 3, 3))
    dT_roll[:, 0, 1] = cr * tp
    dT_roll[:, 0, 2] = -sr * tp
    dT_roll[:, 1, 1] = -sr
    dT_roll[:, 1, 2] = -cr
    dT_roll[:, 2, 1] = cr / cp
    dT_roll[:, 2, 2] = -sr / cp
    dT_pitch = np.zeros((m, 3, 3))
    cp2 = cp * cp
    dT_pitch[:, 0, 1] = sr / cp2
    dT_pitch[:, 0, 2] = cr / cp2
    dT_pitch[:, 2, 1] = sr * sp / cp2
    dT_pitch[:, 2, 2] = cr * sp / cp2
    jx[:, THETA, 0] = np.einsum("mij,mj->mi", dT_roll, omegas)
    jx[:, THETA, 1] = np.einsum("mij,mj->mi", dT_pitch, omegas)
    jx[:, THETA, OMEGA] = T

    jx[:, POS, VEL] = np.eye(3)

    # angular acceleration block
    iw = omegas @ inertia.T
    jx[:, OMEGA, OMEGA] = iinv @ (skew_batch(iw) - np.einsum("mij,jk->mik", skew_batch(omegas), inertia))

    moment_w = np.zeros((m, 3))
    total_force = np.zeros((m, 3))
    ps = xs[:, POS]
    iinv_rt = np.einsum("ij,mjk->mik", iinv, Rt)
    for leg in LEGS:
        if s[leg.idx]:
            lam = us[:, grf_slice(leg)]
            feet = xs[:, y_slice(leg)]
            moment_w += np.cross(feet - ps, lam)
            total_force += lam
            jx[:, OMEGA, y_slice(leg)] = -iinv_rt @ skew_batch(lam)
            ju[:, OMEGA, grf_slice(leg)] = iinv_rt @ skew_batch(feet - ps)
            ju[:, VEL, grf_slice(leg)] = np.eye(3) / params.mass
        else:
            ju[:, y_slice(leg), joint_vel_slice(leg)] = np.eye(3)

    jx[:, OMEGA, POS] = iinv_rt @ skew_batch(total_force)
    # d(R^T m)/dtheta_i = (dR_i)^T m
    drt_m = np.einsum("majk,mj->mka", dRs, moment_w)
    jx[:, OMEGA, THETA] = np.einsum("ij,mja->mia", iinv, drt_m)

    A = dt * jx
    A[:, np.arange(N_STATE), np.arange(N_STATE)] += 1.0
    B = dt * ju
    return A, B


def linearize_step(
    x: np.ndarray, u: np.ndarray, s: np.ndarray, dt: float, params: RobotParams
) -> tuple[np.ndarray, np.ndarray]:
    """Exact Jacobians (A, B) of integrate_step w.r.t. state and control."""
    A, B = linearize_rollout(x[None, :], u[None, :], s, dt, params)
    return A[0], B[0]


def reset_jacobian(
    x: np.ndarray, leg: LegIndex, kind: str, params: RobotParams
) -> np.ndarray:
    """Jacobian of the reset map at a contact-mode switch, d x+ / d x-."""
    P = np.eye(N_STATE)
    ys = y_slice(leg)
    if kind == "takeoff":
        P[ys, :] = 0.0
        return P
    if kind != "touchdown":
        raise ValueError(f"unknown reset kind '{kind}'")
    q = x[ys]
    theta = x[THETA]
    R = euler_to_rotation(theta)
    dRs = rotation_derivatives(theta)
    c = robot.foot_position_body(params, leg, q)
    P[ys, :] = 0.0
    for i in range(3):
        P[ys, i] = dRs[i] @ c
    P[ys, POS] = np.eye(3)
    P[ys, ys] = R @ robot.leg_jacobian(params, leg, q)
    return P
