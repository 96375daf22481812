"""External wrench recovery from joint torques and site Jacobians."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import scipy.linalg as la

from ...errors import DimensionMismatchError, NonUnitAxisError, SingularSystemError
from ...schemas import UNIT_TOLERANCE, EstimatorConfig


@dataclass(frozen=True, eq=False)
class Wrench:
    """Force (N) and torque (N*m) at a site, world frame."""

    force: np.ndarray
    torque: np.ndarray

    @classmethod
    def zero(cls) -> "Wrench":
        return cls(np.zeros(3), np.zeros(3))

    @classmethod
    def from_vector(cls, vector) -> "Wrench":
        vector = np.asarray(vector, dtype=float)
        return cls(vector[:3].copy(), vector[3:6].copy())

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.force, self.torque])

    def __add__(self, other: "Wrench") -> "Wrench":
        return Wrench(self.force + other.force, self.torque + other.torque)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.force)) and np.all(np.isfinite(self.torque)))


@dataclass(frozen=True, eq=False)
class WrenchEstimate:
    wrench: Wrench
    residual: float
    gram_condition: float


def gram_condition(rows: np.ndarray) -> float:
    """Condition number of ``rows @ rows.T``; inf when rank deficient."""
    if rows.shape[0] == 0:
        return 1.0
    eigenvalues = la.eigvalsh(rows @ rows.T)
    smallest, largest = float(eigenvalues[0]), float(eigenvalues[-1])
    if largest <= 0.0 or smallest <= largest * np.finfo(float).eps:
        return float("inf")
    return largest / smallest


def _check_columns(matrix: np.ndarray, tau: np.ndarray, label: str) -> None:
    if matrix.ndim != 2 or matrix.shape[0] != 3 or matrix.shape[1] != tau.shape[0]:
        raise DimensionMismatchError(
            f"{label} has shape {matrix.shape}; expected (3, {tau.shape[0]}) to match tau_ext"
        )


def _regularized_solve(jac: np.ndarray, tau: np.ndarray, lam: float) -> np.ndarray:
    """Solve (J J^T + lam I) f = J tau by Cholesky."""
    gram = jac @ jac.T
    if lam == 0.0 and not np.isfinite(gram_condition(jac)):
        raise SingularSystemError("Gram matrix is rank deficient and lambda is zero")
    system = gram + lam * np.eye(gram.shape[0])
    try:
        factor = la.cho_factor(system, lower=True, check_finite=False)
    except la.LinAlgError as exc:
        raise SingularSystemError(f"Gram matrix is not positive definite: {exc}") from exc
    return la.cho_solve(factor, jac @ tau, check_finite=False)


def estimate_full(
    jp: np.ndarray,
    jr: Optional[np.ndarray],
    tau_ext: np.ndarray,
    lam: float = 1e-3,
    *,
    stacked: bool = True,
) -> WrenchEstimate:
    """Regularised least-squares force (and torque when ``jr`` is given)."""
    tau = np.asarray(tau_ext, dtype=float)
    _check_columns(jp, tau, "Jp")
    if jr is None:
        force = _regularized_solve(jp, tau, lam)
        wrench = Wrench(force, np.zeros(3))
        jac = jp
    else:
        _check_columns(jr, tau, "Jr")
        jac = np.vstack([jp, jr])
        if stacked:
            wrench = Wrench.from_vector(_regularized_solve(jac, tau, lam))
        else:
            wrench = Wrench(_regularized_solve(jp, tau, lam), _regularized_solve(jr, tau, lam))
    applied = jp.T @ wrench.force + (0.0 if jr is None else jr.T @ wrench.torque)
    return WrenchEstimate(wrench, float(np.linalg.norm(applied - tau)), gram_condition(jac))


def estimate_axis(
    jac: np.ndarray,
    tau_ext: np.ndarray,
    u_hat,
    lam: float = 1e-3,
) -> Tuple[float, np.ndarray]:
    """1D regularised estimate along ``u_hat``: magnitude and magnitude * u_hat."""
    u = np.asarray(u_hat, dtype=float)
    norm = float(np.linalg.norm(u))
    if abs(norm - 1.0) > UNIT_TOLERANCE:
        raise NonUnitAxisError(f"axis must have unit norm (got {norm:.12g})")
    tau = np.asarray(tau_ext, dtype=float)
    _check_columns(jac, tau, "J")
    row = u @ jac
    denominator = float(row @ row) + lam
    if denominator == 0.0:
        # the axis is unobservable through this chain
        return 0.0, np.zeros(3)
    magnitude = float(row @ tau) / denominator
    return magnitude, magnitude * u


def estimate(
    config: EstimatorConfig,
    jp: np.ndarray,
    jr: Optional[np.ndarray],
    tau_ext: np.ndarray,
) -> WrenchEstimate:
    if config.mode == "full-force":
        return estimate_full(jp, None, tau_ext, config.lam)
    if config.mode == "full-wrench":
        if jr is None:
            raise DimensionMismatchError("full-wrench mode needs the rotational Jacobian")
        return estimate_full(jp, jr, tau_ext, config.lam, stacked=config.stacked)

    tau = np.asarray(tau_ext, dtype=float)
    force = np.zeros(3)
    torque = np.zeros(3)
    rows = []
    for axis in config.axes:
        if axis.kind == "torque":
            if jr is None:
                raise DimensionMismatchError("torque axes need the rotational Jacobian")
            _, contribution = estimate_axis(jr, tau, axis.direction, config.lam)
            torque += contribution
            rows.append(np.asarray(axis.direction) @ jr)
        else:
            _, contribution = estimate_axis(jp, tau, axis.direction, config.lam)
            force += contribution
            rows.append(np.asarray(axis.direction) @ jp)
    applied = jp.T @ force + (jr.T @ torque if jr is not None else 0.0)
    condition = gram_condition(np.array(rows)) if rows else 1.0
    return WrenchEstimate(Wrench(force, torque), float(np.linalg.norm(applied - tau)), condition)
