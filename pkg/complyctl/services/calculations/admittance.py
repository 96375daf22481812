"""Spring-mass-damper reference generator.

m * xddot = Kp (x_des - x) + Kd (xdot_des - xdot) + f_cmd + f_ext, with the pose
difference taken on the rotation group, integrated by semi-implicit Euler.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as la

from ...errors import NonUnitAxisError, NotPositiveDefiniteError, StabilityError
from ...schemas import UNIT_TOLERANCE
from ..spatial import Pose, pose_error, pose_retract
from .wrench import Wrench

SYMMETRY_TOLERANCE = 1e-9


def _check_psd(matrix: np.ndarray, label: str) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise NotPositiveDefiniteError(f"{label} must be square, got shape {matrix.shape}")
    if not np.allclose(matrix, matrix.T, rtol=0.0, atol=SYMMETRY_TOLERANCE):
        raise NotPositiveDefiniteError(f"{label} is not symmetric")
    eigenvalues = la.eigvalsh(matrix)
    scale = max(1.0, float(np.max(np.abs(eigenvalues))))
    if eigenvalues[0] < -SYMMETRY_TOLERANCE * scale:
        raise NotPositiveDefiniteError(f"{label} has negative eigenvalue {eigenvalues[0]:.6g}")
    return matrix


@dataclass(frozen=True, eq=False)
class ComplianceCommand:
    x_des: Pose
    xdot_des: np.ndarray
    kp: np.ndarray
    kd: np.ndarray
    f_cmd: Wrench = field(default_factory=Wrench.zero)
    mass: float = 1.0

    def __post_init__(self) -> None:
        _check_psd(self.kp, "Kp")
        _check_psd(self.kd, "Kd")
        if self.kp.shape != (6, 6) or self.kd.shape != (6, 6):
            raise NotPositiveDefiniteError("Kp and Kd must be 6 x 6")
        if not self.mass > 0:
            raise ValueError("effective mass must be positive")

    @classmethod
    def critically_damped(
        cls,
        x_des: Pose,
        kp: np.ndarray,
        *,
        xdot_des: Optional[np.ndarray] = None,
        f_cmd: Optional[Wrench] = None,
        mass: float = 1.0,
    ) -> "ComplianceCommand":
        return cls(
            x_des=x_des,
            xdot_des=np.zeros(6) if xdot_des is None else np.asarray(xdot_des, dtype=float),
            kp=np.asarray(kp, dtype=float),
            kd=critical_damping(kp) * np.sqrt(mass),
            f_cmd=Wrench.zero() if f_cmd is None else f_cmd,
            mass=mass,
        )


@dataclass(frozen=True, eq=False)
class TaskState:
    x_ref: Pose
    xdot_ref: np.ndarray

    @classmethod
    def at_rest(cls, pose: Pose) -> "TaskState":
        return cls(pose, np.zeros(6))


def critical_damping(kp) -> np.ndarray:
    """Kd = 2 * Kp^(1/2) via the symmetric eigendecomposition."""
    kp = _check_psd(kp, "Kp")
    eigenvalues, vectors = la.eigh(kp)
    roots = np.sqrt(np.clip(eigenvalues, 0.0, None))
    kd = 2.0 * (vectors * roots) @ vectors.T
    return 0.5 * (kd + kd.T)


def smd_accel(state: TaskState, cmd: ComplianceCommand, f_ext: Wrench) -> np.ndarray:
    spring = cmd.kp @ pose_error(cmd.x_des, state.x_ref)
    damper = cmd.kd @ (cmd.xdot_des - state.xdot_ref)
    return (spring + damper + cmd.f_cmd.as_vector() + f_ext.as_vector()) / cmd.mass


def check_stability(cmd: ComplianceCommand, dt: float, limit: float = 1.0) -> float:
    """Return dt * sqrt(lambda_max(Kp) / m), raising when it exceeds ``limit``."""
    if not dt > 0:
        raise StabilityError(f"dt must be positive, got {dt}")
    stiffest = float(la.eigvalsh(cmd.kp)[-1])
    ratio = dt * np.sqrt(max(stiffest, 0.0) / cmd.mass)
    if ratio > limit:
        raise StabilityError(f"dt*sqrt(lambda_max(Kp)/m) = {ratio:.3g} exceeds {limit:g}")
    return ratio


def _cap(vector: np.ndarray, limit: Optional[float]) -> np.ndarray:
    if limit is None:
        return vector
    norm = float(np.linalg.norm(vector))
    if norm <= limit:
        return vector
    return vector * (limit / norm)


def step(
    state: TaskState,
    cmd: ComplianceCommand,
    f_ext: Wrench,
    dt: float,
    *,
    speed_limit: Optional[float] = None,
    angular_limit: Optional[float] = None,
    stability_limit: float = 1.0,
) -> TaskState:
    """Velocity first, then pose with the new velocity."""
    check_stability(cmd, dt, stability_limit)
    xdot = state.xdot_ref + dt * smd_accel(state, cmd, f_ext)
    if speed_limit is not None or angular_limit is not None:
        xdot = np.concatenate([_cap(xdot[:3], speed_limit), _cap(xdot[3:], angular_limit)])
    return TaskState(pose_retract(state.x_ref, dt * xdot), xdot)


def stiffness_from_normal(normal, k_normal: float, k_tangential: float) -> np.ndarray:
    """k_t * I + (k_n - k_t) * n n^T."""
    n = np.asarray(normal, dtype=float)
    norm = float(np.linalg.norm(n))
    if abs(norm - 1.0) > UNIT_TOLERANCE:
        raise NonUnitAxisError(f"surface normal must have unit norm (got {norm:.12g})")
    if k_normal < 0 or k_tangential < 0:
        raise NotPositiveDefiniteError("stiffness gains must be non-negative")
    return k_tangential * np.eye(3) + (k_normal - k_tangential) * np.outer(n, n)


def block_stiffness(translational: np.ndarray, rotational) -> np.ndarray:
    """6 x 6 block-diagonal stiffness from a 3 x 3 block and a scalar/diagonal/3 x 3 rotational part."""
    rot = np.asarray(rotational, dtype=float)
    if rot.ndim == 0:
        rot = float(rot) * np.eye(3)
    elif rot.ndim == 1:
        rot = np.diag(rot)
    return la.block_diag(translational, rot)
