"""Independent numerical oracles shared by the test suite.

These stay deliberately separate from the package implementations: finite
differences, homogeneous-transform chains, Riccati recursions, and direct
KKT solves are used to cross-check the analytic code paths.
"""

import numpy as np


def central_difference(f, x, eps=1e-6):
    """Central-difference Jacobian of f: R^n -> R^m, columns d f / d x_i."""
    f0 = np.atleast_1d(np.asarray(f(x), dtype=float))
    jac = np.zeros((f0.size, x.size))
    for i in range(x.size):
        dx = np.zeros_like(x)
        dx[i] = eps
        fp = np.atleast_1d(np.asarray(f(x + dx), dtype=float))
        fm = np.atleast_1d(np.asarray(f(x - dx), dtype=float))
        jac[:, i] = (fp - fm) / (2.0 * eps)
    return jac


def rel_error(analytic, numeric):
    analytic = np.asarray(analytic, dtype=float)
    numeric = np.asarray(numeric, dtype=float)
    scale = max(1.0, float(np.max(np.abs(numeric))))
    return float(np.max(np.abs(analytic - numeric))) / scale


def transform_chain_fk(params, leg, q, body_position=None, body_rotation=None):
    """Foot position via explicit 4x4 homogeneous transforms (independent of
    the package's closed-form kinematics)."""

    def translate(v):
        T = np.eye(4)
        T[:3, 3] = v
        return T

    def rot(axis, a):
        c, s = np.cos(a), np.sin(a)
        R = np.eye(3)
        if axis == "x":
            R = np.array([[1, 0, 0], [0, c, -s], [0, s, c]])
        elif axis == "y":
            R = np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])
        else:
            R = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])
        T = np.eye(4)
        T[:3, :3] = R
        return T

    side = 1.0 if leg.value in (2, 4) else -1.0
    T = np.eye(4)
    if body_position is not None or body_rotation is not None:
        T[:3, :3] = np.eye(3) if body_rotation is None else body_rotation
        T[:3, 3] = 0.0 if body_position is None else body_position
    T = T @ translate(params.hip_offsets[leg.value - 1])
    T = T @ rot("x", q[0])
    T = T @ translate([0.0, side * params.abduction_length, 0.0])
    T = T @ rot("y", q[1])
    T = T @ translate([0.0, 0.0, -params.thigh_length])
    T = T @ rot("y", q[2])
    T = T @ translate([0.0, 0.0, -params.shank_length])
    return T[:3, 3]


def riccati_recursion(A, B, Q, R, Qf, N):
    """Finite-horizon discrete LQR: cost sum x'Qx + u'Ru plus terminal x'Qf x.

    Returns gains K[k] (u = K x) and value matrices P[k].
    """
    P = Qf.copy()
    Ks = []
    Ps = [P]
    for _ in range(N):
        H = R + B.T @ P @ B
        K = -np.linalg.solve(H, B.T @ P @ A)
        P = Q + A.T @ P @ (A + B @ K)
        P = 0.5 * (P + P.T)
        Ks.append(K)
        Ps.append(P)
    Ks.reverse()
    Ps.reverse()
    return Ks, Ps


def lqr_optimal_cost(A, B, Q, R, Qf, N, x0):
    Ks, Ps = riccati_recursion(A, B, Q, R, Qf, N)
    return float(x0 @ Ps[0] @ x0)


def double_integrator_kkt(dt, N, r_weight, x0, x_target):
    """Direct KKT solution of: min sum_k r*u_k^2*dt subject to double-integrator
    dynamics and x_N = x_target. Returns (us, xs)."""
    A = np.array([[1.0, dt], [0.0, 1.0]])
    B = np.array([[0.0], [dt]])
    # x_N = A^N x0 + sum_k A^(N-1-k) B u_k
    G = np.zeros((2, N))
    ApowB = B.copy()
    for k in range(N - 1, -1, -1):
        G[:, k] = ApowB[:, 0]
        ApowB = A @ ApowB
    b = x_target - np.linalg.matrix_power(A, N) @ x0
    # min u' H u s.t. G u = b, H = r*dt*I  =>  u = H^-1 G' (G H^-1 G')^-1 b
    Hinv = 1.0 / (r_weight * dt)
    S = G @ (Hinv * G.T)
    nu = np.linalg.solve(S, b)
    us = Hinv * (G.T @ nu)
    xs = [np.asarray(x0, dtype=float)]
    for k in range(N):
        xs.append(A @ xs[-1] + B[:, 0] * us[k])
    return us, np.array(xs)
