"""Quadratic tracking cost with contact gating, touchdown and friction-cone
constraint residuals, and a relaxed logarithmic barrier for inequalities.

The running cost penalizes body-state deviation always, swing-leg joint
deviation and stance-leg foothold deviation complementarily (gated by the
contact flags), and stance-leg GRF deviation. The terminal cost drops the
GRF term and applies a terminal scaling factor. All derivatives are exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import robot
from .dynamics import BODY, N_CONTROL, N_STATE, POS, THETA, grf_slice, y_slice
from .robot import LEGS, LegIndex, RobotParams
from .rotations import euler_to_rotation, rotation_derivatives


def _check_weight(mat: np.ndarray, name: str, definite: bool) -> np.ndarray:
    mat = np.asarray(mat, dtype=float)
    if not np.allclose(mat, mat.T):
        raise ValueError(f"{name} weight must be symmetric")
    eigs = np.linalg.eigvalsh(mat)
    if definite and np.any(eigs <= 0):
        raise ValueError(f"{name} weight must be positive definite")
    if not definite and np.any(eigs < -1e-12):
        raise ValueError(f"{name} weight must be positive semidefinite")
    return mat


@dataclass(frozen=True)
class CostWeights:
    """Tracking weights: body (12x12), per-leg joint/foot (3x3), GRF (3x3)."""

    body: np.ndarray
    joint: np.ndarray
    foot: np.ndarray
    grf: np.ndarray
    terminal_scale: float = 10.0

    def __post_init__(self):
        object.__setattr__(self, "body", _check_weight(self.body, "body", definite=False))
        object.__setattr__(self, "joint", _check_weight(self.joint, "joint", definite=False))
        object.__setattr__(self, "foot", _check_weight(self.foot, "foot", definite=False))
        object.__setattr__(self, "grf", _check_weight(self.grf, "grf", definite=True))
        if self.terminal_scale <= 0:
            raise ValueError("terminal scale must be positive")

    @classmethod
    def from_diagonals(cls, body, joint, foot, grf, terminal_scale=10.0) -> "CostWeights":
        return cls(
            body=np.diag(np.asarray(body, dtype=float)),
            joint=np.diag(np.asarray(joint, dtype=float)),
            foot=np.diag(np.asarray(foot, dtype=float)),
            grf=np.diag(np.asarray(grf, dtype=float)),
            terminal_scale=float(terminal_scale),
        )


def running_cost(
    x: np.ndarray,
    u: np.ndarray,
    x_ref: np.ndarray,
    lambda_ref: np.ndarray,
    s: np.ndarray,
    weights: CostWeights,
    dt: float,
):
    """Stage cost and its exact derivatives.

    Returns (value, lx, lu, lxx, luu); lambda_ref is (4, 3).
    """
    lx = np.zeros(N_STATE)
    lu = np.zeros(N_CONTROL)
    lxx = np.zeros((N_STATE, N_STATE))
    luu = np.zeros((N_CONTROL, N_CONTROL))

    db = x[BODY] - x_ref[BODY]
    value = db @ weights.body @ db
    lx[BODY] = 2.0 * weights.body @ db
    lxx[BODY, BODY] = 2.0 * weights.body

    for leg in LEGS:
        ys = y_slice(leg)
        dy = x[ys] - x_ref[ys]
        w = weights.foot if s[leg.idx] else weights.joint
        value += dy @ w @ dy
        lx[ys] = 2.0 * w @ dy
        lxx[ys, ys] = 2.0 * w
        if s[leg.idx]:
            us_ = grf_slice(leg)
            dl = u[us_] - lambda_ref[leg.idx]
            value += dl @ weights.grf @ dl
            lu[us_] = 2.0 * weights.grf @ dl
            luu[us_, us_] = 2.0 * weights.grf

    return value * dt, lx * dt, lu * dt, lxx * dt, luu * dt


def terminal_cost(
    x: np.ndarray,
    x_ref: np.ndarray,
    s: np.ndarray,
    weights: CostWeights,
):
    """Terminal cost (no GRF term), scaled by the terminal factor.

    Returns (value, gradient, Hessian).
    """
    gx = np.zeros(N_STATE)
    gxx = np.zeros((N_STATE, N_STATE))
    db = x[BODY] - x_ref[BODY]
    value = db @ weights.body @ db
    gx[BODY] = 2.0 * weights.body @ db
    gxx[BODY, BODY] = 2.0 * weights.body
    for leg in LEGS:
        ys = y_slice(leg)
        dy = x[ys] - x_ref[ys]
        w = weights.foot if s[leg.idx] else weights.joint
        value += dy @ w @ dy
        gx[ys] = 2.0 * w @ dy
        gxx[ys, ys] = 2.0 * w
    c = weights.terminal_scale
    return value * c, gx * c, gxx * c


def touchdown_residual(x: np.ndarray, leg: LegIndex, params: RobotParams) -> float:
    """World-frame foot height of a swing leg (zero when on the ground)."""
    q = x[y_slice(leg)]
    R = euler_to_rotation(x[THETA])
    return float(robot.forward_kinematics(params, leg, q, x[POS], R)[2])


def touchdown_residual_grad(
    x: np.ndarray, leg: LegIndex, params: RobotParams
) -> tuple[float, np.ndarray]:
    """Touchdown residual and its gradient w.r.t. the full state."""
    ys = y_slice(leg)
    q = x[ys]
    theta = x[THETA]
    R = euler_to_rotation(theta)
    dRs = rotation_derivatives(theta)
    c = robot.foot_position_body(params, leg, q)
    h = float(x[POS][2] + (R @ c)[2])
    grad = np.zeros(N_STATE)
    for i in range(3):
        grad[i] = (dRs[i] @ c)[2]
    grad[5] = 1.0
    grad[ys] = (R @ robot.leg_jacobian(params, leg, q))[2]
    return h, grad


def cone_rows(mu: float) -> np.ndarray:
    """Rows of the linearized friction cone: feasible iff C @ lambda >= 0."""
    return np.array(
        [
            [0.0, 0.0, 1.0],
            [-1.0, 0.0, mu],
            [1.0, 0.0, mu],
            [0.0, -1.0, mu],
            [0.0, 1.0, mu],
        ]
    )


def grf_residuals(u: np.ndarray, s: np.ndarray, mu: float) -> np.ndarray:
    """Friction-cone inequality residuals for all stance legs (feasible >= 0)."""
    C = cone_rows(mu)
    parts = [C @ u[grf_slice(leg)] for leg in LEGS if s[leg.idx]]
    if not parts:
        return np.zeros(0)
    return np.concatenate(parts)


def relaxed_log_barrier(z: np.ndarray, delta: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """C2 relaxed -log barrier: exact -log(z) for z > delta, quadratic below.

    Returns (value, first, second derivative), elementwise.
    """
    z = np.asarray(z, dtype=float)
    above = z > delta
    val = np.empty_like(z)
    d1 = np.empty_like(z)
    d2 = np.empty_like(z)
    za = np.where(above, z, 1.0)
    val[above] = -np.log(za[above])
    d1[above] = -1.0 / za[above]
    d2[above] = 1.0 / (za[above] * za[above])
    w = (z - 2.0 * delta) / delta
    val[~above] = 0.5 * (w[~above] ** 2 - 1.0) - np.log(delta)
    d1[~above] = w[~above] / delta
    d2[~above] = 1.0 / (delta * delta)
    return val, d1, d2


def grf_barrier_terms(
    u: np.ndarray,
    s: np.ndarray,
    mu: float,
    weight: float,
    delta: float,
):
    """Relaxed-barrier penalty on the friction cone: (value, lu, luu)."""
    lu = np.zeros(N_CONTROL)
    luu = np.zeros((N_CONTROL, N_CONTROL))
    value = 0.0
    C = cone_rows(mu)
    for leg in LEGS:
        if not s[leg.idx]:
            continue
        us_ = grf_slice(leg)
        r = C @ u[us_]
        b, db, d2b = relaxed_log_barrier(r, delta)
        value += weight * float(np.sum(b))
        lu[us_] += weight * (C.T @ db)
        luu[us_, us_] += weight * (C.T @ (d2b[:, None] * C))
    return value, lu, luu
