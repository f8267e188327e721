"""Robot parameters and 3-DoF point-foot leg kinematics.

Legs are serial abduction / hip-pitch / knee-pitch chains with a point foot.
All four legs share the same topology; geometry (link lengths, hip offsets)
comes from a per-platform YAML file. The same code covers Unitree A1 and
MIT Mini Cheetah style quadrupeds.

Leg frame conventions (hip frame, attached to the body at the hip offset,
axes parallel to the body frame: x forward, y left, z up):
  q[0]  abduction angle about +x,
  q[1]  hip pitch about +y,
  q[2]  knee pitch about +y (knee-backward branch has q[2] < 0).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .rotations import euler_to_rotation

GRAVITY = np.array([0.0, 0.0, -9.81])

_CONFIG_DIR = Path(__file__).parent / "config"


class LegIndex(enum.IntEnum):
    """Leg numbering: 1..4 = front-right, front-left, hind-right, hind-left."""

    FRONT_RIGHT = 1
    FRONT_LEFT = 2
    HIND_RIGHT = 3
    HIND_LEFT = 4

    @property
    def idx(self) -> int:
        """Zero-based array index."""
        return self.value - 1

    @property
    def side(self) -> float:
        """+1 for left legs, -1 for right legs (abduction offset sign)."""
        return 1.0 if self.value in (2, 4) else -1.0


LEGS = tuple(LegIndex)


class OutOfWorkspace(ValueError):
    """Foot target lies outside the leg's reachable annulus."""


@dataclass(frozen=True)
class RobotParams:
    """Physical parameters of one quadruped platform (SI units)."""

    name: str
    mass: float
    inertia: np.ndarray          # (3, 3) body-frame rotational inertia
    hip_offsets: np.ndarray      # (4, 3) hip positions relative to CoM, body frame
    abduction_length: float
    thigh_length: float
    shank_length: float
    q_default: np.ndarray        # (4, 3) default joint angles per leg
    standing_height: float
    friction: float
    joint_limits: np.ndarray     # (3, 2) lower/upper per joint
    torque_limit: np.ndarray     # (3,)
    gravity: np.ndarray = field(default_factory=lambda: GRAVITY.copy())

    def __post_init__(self):
        if self.mass <= 0:
            raise ValueError("mass must be positive")
        if not np.allclose(self.inertia, self.inertia.T):
            raise ValueError("inertia must be symmetric")
        if np.any(np.linalg.eigvalsh(self.inertia) <= 0):
            raise ValueError("inertia must be positive definite")
        for length in (self.abduction_length, self.thigh_length, self.shank_length):
            if length <= 0:
                raise ValueError("link lengths must be positive")
        if self.friction <= 0:
            raise ValueError("friction coefficient must be positive")
        # left/right mirror symmetry of the hip layout
        for right, left in ((0, 1), (2, 3)):
            mirrored = self.hip_offsets[left] * np.array([1.0, -1.0, 1.0])
            if not np.allclose(self.hip_offsets[right], mirrored, atol=1e-9):
                raise ValueError("hip offsets must mirror across the sagittal plane")
        object.__setattr__(self, "_inertia_inv", np.linalg.inv(self.inertia))

    @property
    def inertia_inv(self) -> np.ndarray:
        return self._inertia_inv

    @property
    def max_reach(self) -> float:
        return np.hypot(self.abduction_length, self.thigh_length + self.shank_length)

    @property
    def min_reach(self) -> float:
        return np.hypot(self.abduction_length, self.thigh_length - self.shank_length)

    def hip_offset(self, leg: LegIndex) -> np.ndarray:
        return self.hip_offsets[leg.idx]

    def default_angles(self, leg: LegIndex) -> np.ndarray:
        return self.q_default[leg.idx]


def _as_matrix(rows, shape) -> np.ndarray:
    arr = np.asarray(rows, dtype=float)
    if arr.shape != shape:
        raise ValueError(f"expected shape {shape}, got {arr.shape}")
    return arr


def load_robot_params(source: str | Path) -> RobotParams:
    """Load platform parameters from a YAML file or a bundled platform name."""
    path = Path(source)
    if not path.exists():
        bundled = _CONFIG_DIR / f"{source}.yaml"
        if bundled.exists():
            path = bundled
        else:
            raise FileNotFoundError(f"no robot config at '{source}' and no bundled platform of that name")
    with open(path) as f:
        raw = yaml.safe_load(f)

    q_def = np.asarray(raw["q_default"], dtype=float)
    if q_def.shape == (3,):
        q_def = np.tile(q_def, (4, 1))
    return RobotParams(
        name=raw.get("name", path.stem),
        mass=float(raw["mass"]),
        inertia=_as_matrix(raw["inertia"], (3, 3)),
        hip_offsets=_as_matrix(raw["hip_offsets"], (4, 3)),
        abduction_length=float(raw["abduction_length"]),
        thigh_length=float(raw["thigh_length"]),
        shank_length=float(raw["shank_length"]),
        q_default=_as_matrix(q_def, (4, 3)),
        standing_height=float(raw["standing_height"]),
        friction=float(raw["friction"]),
        joint_limits=_as_matrix(raw["joint_limits"], (3, 2)),
        torque_limit=np.asarray(raw["torque_limit"], dtype=float),
    )


def foot_position_hip(params: RobotParams, leg: LegIndex, q: np.ndarray) -> np.ndarray:
    """Point-foot position in the hip frame."""
    d = leg.side * params.abduction_length
    l2, l3 = params.thigh_length, params.shank_length
    s1, c1 = np.sin(q[0]), np.cos(q[0])
    s2, c2 = np.sin(q[1]), np.cos(q[1])
    s23, c23 = np.sin(q[1] + q[2]), np.cos(q[1] + q[2])
    w = l2 * c2 + l3 * c23
    return np.array(
        [
            -l2 * s2 - l3 * s23,
            d * c1 + s1 * w,
            d * s1 - c1 * w,
        ]
    )


def foot_position_body(params: RobotParams, leg: LegIndex, q: np.ndarray) -> np.ndarray:
    """Point-foot position in the body frame (CoM origin)."""
    return params.hip_offset(leg) + foot_position_hip(params, leg, q)


def forward_kinematics(
    params: RobotParams,
    leg: LegIndex,
    q: np.ndarray,
    body_position: np.ndarray | None = None,
    body_rotation: np.ndarray | None = None,
) -> np.ndarray:
    """World-frame foot position given joint angles and the body pose.

    body_rotation is the world-from-body matrix (see rotations.euler_to_rotation);
    identity pose by default.
    """
    p_body = foot_position_body(params, leg, q)
    if body_rotation is not None:
        p_body = body_rotation @ p_body
    if body_position is not None:
        p_body = body_position + p_body
    return p_body


def forward_kinematics_euler(
    params: RobotParams,
    leg: LegIndex,
    q: np.ndarray,
    body_position: np.ndarray,
    theta: np.ndarray,
) -> np.ndarray:
    return forward_kinematics(params, leg, q, body_position, euler_to_rotation(theta))


def leg_jacobian(params: RobotParams, leg: LegIndex, q: np.ndarray) -> np.ndarray:
    """Jacobian of the hip-frame foot position w.r.t. the joint angles (3x3).

    Singular configurations (straight knee) return a singular matrix.
    """
    d = leg.side * params.abduction_length
    l2, l3 = params.thigh_length, params.shank_length
    s1, c1 = np.sin(q[0]), np.cos(q[0])
    s2, c2 = np.sin(q[1]), np.cos(q[1])
    s23, c23 = np.sin(q[1] + q[2]), np.cos(q[1] + q[2])
    w = l2 * c2 + l3 * c23
    px = -l2 * s2 - l3 * s23
    return np.array(
        [
            [0.0, -w, -l3 * c23],
            [-d * s1 + c1 * w, s1 * px, -s1 * l3 * s23],
            [d * c1 + s1 * w, -c1 * px, c1 * l3 * s23],
        ]
    )


def inverse_kinematics(params: RobotParams, leg: LegIndex, p_hip: np.ndarray) -> np.ndarray:
    """Closed-form IK for a hip-frame foot target, knee-backward branch.

    Raises OutOfWorkspace when the target is beyond reach or inside the
    minimum-reach annulus.
    """
    d = leg.side * params.abduction_length
    l2, l3 = params.thigh_length, params.shank_length
    px, py, pz = p_hip

    r_yz_sq = py * py + pz * pz
    if r_yz_sq < d * d - 1e-12:
        raise OutOfWorkspace(f"target {p_hip} inside the abduction cylinder")
    r_yz = np.sqrt(r_yz_sq)
    q1 = np.arctan2(pz, py) + np.arccos(np.clip(d / max(r_yz, 1e-12), -1.0, 1.0))
    # wrap to (-pi, pi]
    q1 = np.arctan2(np.sin(q1), np.cos(q1))

    # planar 2R subproblem in the leg's sagittal plane after undoing abduction
    z_plane = -np.sqrt(max(r_yz_sq - d * d, 0.0))
    dist_sq = px * px + z_plane * z_plane
    dist = np.sqrt(dist_sq)
    if dist > l2 + l3 + 1e-12:
        raise OutOfWorkspace(f"target {p_hip} beyond maximum reach {l2 + l3:.3f}")
    if dist < abs(l2 - l3) - 1e-12:
        raise OutOfWorkspace(f"target {p_hip} below minimum reach {abs(l2 - l3):.3f}")

    c3 = np.clip((dist_sq - l2 * l2 - l3 * l3) / (2.0 * l2 * l3), -1.0, 1.0)
    q3 = -np.arccos(c3)
    k1 = l2 + l3 * np.cos(q3)
    k2 = l3 * np.sin(q3)
    q2 = np.arctan2(-px, -z_plane) - np.arctan2(k2, k1)
    q2 = np.arctan2(np.sin(q2), np.cos(q2))
    return np.array([q1, q2, q3])


def inverse_kinematics_world(
    params: RobotParams,
    leg: LegIndex,
    p_world: np.ndarray,
    body_position: np.ndarray,
    body_rotation: np.ndarray,
) -> np.ndarray:
    """IK for a world-frame foot target given the body pose."""
    p_hip = body_rotation.T @ (p_world - body_position) - params.hip_offset(leg)
    return inverse_kinematics(params, leg, p_hip)


def clamp_joint_angles(params: RobotParams, q: np.ndarray) -> tuple[np.ndarray, bool]:
    """Clamp joint angles to the configured limits; returns (clamped, was_clamped)."""
    clamped = np.clip(q, params.joint_limits[:, 0], params.joint_limits[:, 1])
    return clamped, bool(np.any(clamped != q))
