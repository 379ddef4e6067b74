"""Rigid transforms and small rotation helpers.

Everything downstream (kinematics, retargeting, action encoding) passes poses
around as a rotation matrix plus translation.  Euler angles only appear at the
file-format boundary: hand description files and calibration profiles store
(xyz, rpy) tuples, which we convert once on load.

Conventions: right-handed frames, extrinsic XYZ euler (roll about x, then
pitch about y, then yaw about z -> R = Rz @ Ry @ Rx), angles in radians,
translations in meters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidRotation, ValidationError

_ORTHO_TOL = 1e-9


def wrap_angle(a: float) -> float:
    """Wrap an angle to the half-open interval (-pi, pi]."""
    w = math.fmod(a + math.pi, 2.0 * math.pi)
    if w <= 0.0:
        w += 2.0 * math.pi
    return w - math.pi


def rotation_about_axis(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation about a unit axis."""
    x, y, z = axis
    c = math.cos(angle)
    s = math.sin(angle)
    t = 1.0 - c
    return np.array(
        [
            [c + x * x * t, x * y * t - z * s, x * z * t + y * s],
            [x * y * t + z * s, c + y * y * t, y * z * t - x * s],
            [x * z * t - y * s, y * z * t + x * s, c + z * z * t],
        ]
    )


def rpy_to_matrix(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """Extrinsic XYZ euler angles to rotation matrix (R = Rz @ Ry @ Rx)."""
    cr, sr = math.cos(roll), math.sin(roll)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cy, sy = math.cos(yaw), math.sin(yaw)
    return np.array(
        [
            [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
            [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
            [-sp, cp * sr, cp * cr],
        ]
    )


def matrix_to_rpy(rot: np.ndarray) -> tuple[float, float, float]:
    """Inverse of rpy_to_matrix.  Gimbal-locked inputs resolve with roll=0."""
    sp = -rot[2, 0]
    sp = min(1.0, max(-1.0, sp))
    pitch = math.asin(sp)
    if abs(sp) > 1.0 - 1e-12:
        # pitch = +-pi/2: only roll +- yaw is observable; put it all in yaw.
        roll = 0.0
        yaw = math.atan2(-rot[0, 1], rot[1, 1])
    else:
        roll = math.atan2(rot[2, 1], rot[2, 2])
        yaw = math.atan2(rot[1, 0], rot[0, 0])
    return roll, pitch, yaw


def _check_rotation(rot: np.ndarray) -> None:
    if rot.shape != (3, 3):
        raise InvalidRotation(f"rotation must be 3x3, got {rot.shape}")
    if not np.isfinite(rot).all():
        raise InvalidRotation("rotation has non-finite entries")
    err = np.abs(rot.T @ rot - np.eye(3)).max()
    if err > 1e-6 or abs(np.linalg.det(rot) - 1.0) > 1e-6:
        raise InvalidRotation(f"matrix is not a rotation (orthonormality error {err:.2e})")


@dataclass(frozen=True)
class Pose:
    """Rigid transform: world point = rot @ local point + trans."""

    rot: np.ndarray = field(default_factory=lambda: np.eye(3))
    trans: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self) -> None:
        rot = np.asarray(self.rot, dtype=float)
        trans = np.asarray(self.trans, dtype=float).reshape(3)
        _check_rotation(rot)
        if not np.isfinite(trans).all():
            raise ValidationError(f"pose translation must be finite, got {trans.tolist()}")
        rot = rot.copy()
        rot.flags.writeable = False
        trans = trans.copy()
        trans.flags.writeable = False
        object.__setattr__(self, "rot", rot)
        object.__setattr__(self, "trans", trans)

    @staticmethod
    def identity() -> "Pose":
        return Pose()

    @staticmethod
    def from_xyz_rpy(xyz, rpy) -> "Pose":
        return Pose(rpy_to_matrix(*rpy), np.asarray(xyz, dtype=float))

    def to_xyz_rpy(self) -> tuple[tuple[float, float, float], tuple[float, float, float]]:
        return tuple(self.trans.tolist()), matrix_to_rpy(self.rot)

    def compose(self, other: "Pose") -> "Pose":
        """self after other: (self * other).apply(p) == self.apply(other.apply(p))."""
        return Pose(self.rot @ other.rot, self.rot @ other.trans + self.trans)

    def inverse(self) -> "Pose":
        rt = self.rot.T
        return Pose(rt, -(rt @ self.trans))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform one point (3,) or a batch (N, 3)."""
        pts = np.asarray(points, dtype=float)
        return pts @ self.rot.T + self.trans

    def almost_equal(self, other: "Pose", tol: float = 1e-9) -> bool:
        return (
            np.abs(self.rot - other.rot).max() <= tol
            and np.abs(self.trans - other.trans).max() <= tol
        )
