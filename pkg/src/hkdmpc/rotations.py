"""ZYX Euler-angle rotation utilities shared by kinematics and dynamics.

Convention: theta = (roll, pitch, yaw), R = Rz(yaw) @ Ry(pitch) @ Rx(roll).
R maps body-frame vectors to world-frame vectors (world-from-body).
"""

import numpy as np

# Generators of the rotation group, [e_x]x etc.
EX = np.array([[0.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]])
EY = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 0.0], [-1.0, 0.0, 0.0]])
EZ = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])


def rot_x(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def skew(v: np.ndarray) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def euler_to_rotation(theta: np.ndarray) -> np.ndarray:
    """World-from-body rotation matrix for (roll, pitch, yaw)."""
    sr, cr = np.sin(theta[0]), np.cos(theta[0])
    sp, cp = np.sin(theta[1]), np.cos(theta[1])
    sy, cy = np.sin(theta[2]), np.cos(theta[2])
    return np.array(
        [
            [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
            [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
            [-sp, cp * sr, cp * cr],
        ]
    )


def rotation_derivatives(theta: np.ndarray) -> np.ndarray:
    """Partials of euler_to_rotation: array (3, 3, 3), [i] = dR/dtheta_i."""
    R = euler_to_rotation(theta)
    rx = rot_x(theta[0])
    rzy = R @ rx.T
    out = np.empty((3, 3, 3))
    out[0] = R @ EX
    out[1] = rzy @ EY @ rx
    out[2] = EZ @ R
    return out


def euler_to_rotation_batch(thetas: np.ndarray) -> np.ndarray:
    """Vectorized euler_to_rotation over rows of thetas (m, 3) -> (m, 3, 3)."""
    sr, cr = np.sin(thetas[:, 0]), np.cos(thetas[:, 0])
    sp, cp = np.sin(thetas[:, 1]), np.cos(thetas[:, 1])
    sy, cy = np.sin(thetas[:, 2]), np.cos(thetas[:, 2])
    R = np.empty((thetas.shape[0], 3, 3))
    R[:, 0, 0] = cy * cp
    R[:, 0, 1] = cy * sp * sr - sy * cr
    R[:, 0, 2] = cy * sp * cr + sy * sr
    R[:, 1, 0] = sy * cp
    R[:, 1, 1] = sy * sp * sr + cy * cr
    R[:, 1, 2] = sy * sp * cr - cy * sr
    R[:, 2, 0] = -sp
    R[:, 2, 1] = cp * sr
    R[:, 2, 2] = cp * cr
    return R


def rotation_derivatives_batch(thetas: np.ndarray) -> np.ndarray:
    """Vectorized rotation_derivatives: (m, 3) -> (m, 3, 3, 3)."""
    m = thetas.shape[0]
    R = euler_to_rotation_batch(thetas)
    sr, cr = np.sin(thetas[:, 0]), np.cos(thetas[:, 0])
    rx = np.zeros((m, 3, 3))
    rx[:, 0, 0] = 1.0
    rx[:, 1, 1] = cr
    rx[:, 1, 2] = -sr
    rx[:, 2, 1] = sr
    rx[:, 2, 2] = cr
    rzy = R @ rx.transpose(0, 2, 1)
    out = np.empty((m, 3, 3, 3))
    out[:, 0] = R @ EX
    out[:, 1] = rzy @ EY @ rx
    out[:, 2] = np.einsum("ij,mjk->mik", EZ, R)
    return out


def skew_batch(vs: np.ndarray) -> np.ndarray:
    """Cross-product matrices for rows of vs (m, 3) -> (m, 3, 3)."""
    m = vs.shape[0]
    out = np.zeros((m, 3, 3))
    out[:, 0, 1] = -vs[:, 2]
    out[:, 0, 2] = vs[:, 1]
    out[:, 1, 0] = vs[:, 2]
    out[:, 1, 2] = -vs[:, 0]
    out[:, 2, 0] = -vs[:, 1]
    out[:, 2, 1] = vs[:, 0]
    return out
