"""Damped least-squares differential inverse kinematics with joint-limit clamping."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Mapping, Tuple

import numpy as np
import scipy.linalg as la

from ..errors import DimensionMismatchError, NonFiniteInputError
from ..schemas import IkConfig
from .chain_model import ChainModel
from .spatial import Pose, pose_error

logger = logging.getLogger(__name__)

MAX_HALVINGS = 8


@dataclass(frozen=True)
class IkReport:
    iterations: int
    residual: float
    converged: bool


class _Problem:
    """Weighted stacked task error and Jacobian for a set of site targets."""

    def __init__(self, chain: ChainModel, targets: Mapping[int, Pose], config: IkConfig, q_seed: np.ndarray):
        self.chain = chain
        self.sites = sorted(targets)
        self.targets = [targets[site] for site in self.sites]
        self.weights = np.tile(
            np.repeat([np.sqrt(config.position_weight), np.sqrt(config.orientation_weight)], 3),
            len(self.sites),
        )
        self.posture = np.sqrt(config.posture_weight)
        self.q_seed = q_seed

    def error(self, q: np.ndarray):
        kin = self.chain.kinematics(q)
        task = np.concatenate([
            pose_error(target, Pose.from_matrix(kin.site_positions[site], kin.site_rotations[site]))
            for site, target in zip(self.sites, self.targets)
        ])
        weighted = self.weights * task
        if self.posture > 0:
            weighted = np.concatenate([weighted, self.posture * (self.q_seed - q)])
        return kin, weighted

    def jacobian(self, kin) -> np.ndarray:
        rows = []
        for site in self.sites:
            jp, jr = self.chain.site_jacobian(kin, site)
            rows.extend([jp, jr])
        jac = self.weights[:, None] * np.vstack(rows)
        if self.posture > 0:
            jac = np.vstack([jac, self.posture * np.eye(self.chain.n_joints)])
        return jac


def _dls_step(jac: np.ndarray, error: np.ndarray, damping: float) -> np.ndarray:
    """dq = J^T (J J^T + mu I)^-1 e."""
    gram = jac @ jac.T + damping * np.eye(jac.shape[0])
    try:
        return jac.T @ la.solve(gram, error, assume_a="pos", check_finite=False)
    except la.LinAlgError:
        return la.lstsq(jac, error, check_finite=False)[0]


def _check_targets(chain: ChainModel, targets: Mapping[int, Pose]) -> None:
    for site, pose in targets.items():
        if not 0 <= site < chain.n_sites:
            raise DimensionMismatchError(f"site index {site} out of range for {chain.n_sites} sites")
        if not pose.is_finite():
            raise NonFiniteInputError(f"target for site {chain.site_names[site]!r} is not finite")


def solve(
    chain: ChainModel,
    q,
    targets: Mapping[int, Pose],
    config: IkConfig,
) -> Tuple[np.ndarray, IkReport]:
    """Joint targets that bring each site in ``targets`` to its pose.

    The result stays inside the joint limits and within ``max_joint_step`` of
    the (clamped) seed. Unreachable targets return the best configuration found.
    """
    q_seed = chain.clamp(chain.check_q(q))
    _check_targets(chain, targets)
    if not targets:
        return q_seed.copy(), IkReport(0, 0.0, True)

    lower = np.maximum(chain.lower, q_seed - config.max_joint_step)
    upper = np.minimum(chain.upper, q_seed + config.max_joint_step)
    problem = _Problem(chain, targets, config, q_seed)

    q_current = q_seed.copy()
    kin, error = problem.error(q_current)
    residual = float(np.linalg.norm(error))
    iterations = 0
    while residual > config.tolerance and iterations < config.max_iterations:
        iterations += 1
        delta = _dls_step(problem.jacobian(kin), error, config.damping)
        largest = float(np.max(np.abs(delta)))
        if largest > config.max_joint_step:
            delta *= config.max_joint_step / largest

        accepted = False
        for _ in range(MAX_HALVINGS + 1):
            candidate = np.clip(q_current + delta, lower, upper)
            cand_kin, cand_error = problem.error(candidate)
            cand_residual = float(np.linalg.norm(cand_error))
            if cand_residual <= residual:
                accepted = True
                break
            delta *= 0.5
        if not accepted:
            break
        progress = residual - cand_residual
        q_current, kin, error, residual = candidate, cand_kin, cand_error, cand_residual
        if progress <= config.tolerance * 1e-3:
            break

    converged = residual <= config.tolerance
    if not converged:
        logger.debug("IK stopped after %d iterations with residual %.3g", iterations, residual)
    return q_current, IkReport(iterations, residual, converged)
