"""Poses with rotation-vector orientation and the group operations on them."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation


def canonical_rotvec(rotvec: np.ndarray) -> np.ndarray:
    """Return the equivalent rotation vector with magnitude at most pi."""
    return Rotation.from_rotvec(np.asarray(rotvec, dtype=float)).as_rotvec()


def rotation_log(matrix: np.ndarray) -> np.ndarray:
    return Rotation.from_matrix(matrix).as_rotvec()


def rotation_exp(rotvec: np.ndarray) -> np.ndarray:
    return Rotation.from_rotvec(np.asarray(rotvec, dtype=float)).as_matrix()


def quat_to_matrix(quat) -> np.ndarray:
    """Scalar-last quaternion to rotation matrix."""
    return Rotation.from_quat(np.asarray(quat, dtype=float)).as_matrix()


def axis_rotations(axes: np.ndarray, angles: np.ndarray) -> np.ndarray:
    """Stack of rotation matrices about unit ``axes`` by ``angles``."""
    return Rotation.from_rotvec(axes * angles[:, None]).as_matrix()


@dataclass(frozen=True, eq=False)
class Pose:
    position: np.ndarray
    orientation: np.ndarray

    @classmethod
    def from_matrix(cls, position: np.ndarray, rotation: np.ndarray) -> "Pose":
        return cls(np.array(position, dtype=float), rotation_log(rotation))

    @classmethod
    def from_vector(cls, vector) -> "Pose":
        vector = np.asarray(vector, dtype=float)
        return cls(vector[:3].copy(), canonical_rotvec(vector[3:6]))

    @property
    def rotation(self) -> np.ndarray:
        return rotation_exp(self.orientation)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.position, self.orientation])

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.position)) and np.all(np.isfinite(self.orientation)))


def pose_error(target: Pose, current: Pose) -> np.ndarray:
    """6-vector ``target - current``: position difference and the world-frame
    rotation vector of ``R_target R_current^T``."""
    relative = Rotation.from_rotvec(target.orientation) * Rotation.from_rotvec(current.orientation).inv()
    return np.concatenate([target.position - current.position, relative.as_rotvec()])


def pose_retract(pose: Pose, delta: np.ndarray) -> Pose:
    """Advance ``pose`` by a 6-vector step; rotation composed on the left in the world frame."""
    rotation = Rotation.from_rotvec(delta[3:6]) * Rotation.from_rotvec(pose.orientation)
    return Pose(pose.position + delta[:3], rotation.as_rotvec())
