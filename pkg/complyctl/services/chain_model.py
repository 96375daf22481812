from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Tuple

import numpy as np

from ..errors import ChainParseError, ChainValidationError, DimensionMismatchError
from ..schemas import ChainDescription, MotorParams
from .documents import load_document
from .spatial import Pose, axis_rotations, quat_to_matrix

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Kinematics:
    """Joint frames and site poses of one configuration."""

    joint_positions: np.ndarray
    joint_rotations: np.ndarray
    joint_axes: np.ndarray
    site_positions: np.ndarray
    site_rotations: np.ndarray


@dataclass(frozen=True, eq=False)
class ChainModel:
    description: ChainDescription
    joint_names: Tuple[str, ...]
    parents: np.ndarray
    origin_translations: np.ndarray
    origin_rotations: np.ndarray
    axes: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    gear_ratios: np.ndarray
    motors: Tuple[MotorParams, ...]
    masses: np.ndarray
    coms: np.ndarray
    site_names: Tuple[str, ...]
    site_parents: np.ndarray
    site_translations: np.ndarray
    site_rotations: np.ndarray
    gravity: np.ndarray
    ancestors: np.ndarray

    @classmethod
    def from_description(cls, description: ChainDescription) -> "ChainModel":
        joints = description.joints
        n = len(joints)
        parents = np.array([-1 if joint.parent is None else joint.parent for joint in joints], dtype=int)
        ancestors = np.zeros((n, n), dtype=bool)
        for index in range(n):
            ancestors[index, index] = True
            if parents[index] >= 0:
                ancestors[index] |= ancestors[parents[index]]
        chain = cls(
            description=description,
            joint_names=tuple(joint.name for joint in joints),
            parents=parents,
            origin_translations=np.array([joint.origin_translation for joint in joints], dtype=float),
            origin_rotations=np.stack([quat_to_matrix(joint.origin_rotation) for joint in joints]),
            axes=np.array([joint.axis for joint in joints], dtype=float),
            lower=np.array([joint.limits[0] for joint in joints], dtype=float),
            upper=np.array([joint.limits[1] for joint in joints], dtype=float),
            gear_ratios=np.array([joint.gear_ratio for joint in joints], dtype=float),
            motors=tuple(description.motors[joint.motor] for joint in joints),
            masses=np.array([link.mass for link in description.links], dtype=float),
            coms=np.array([link.com for link in description.links], dtype=float),
            site_names=tuple(site.name for site in description.sites),
            site_parents=np.array([site.parent for site in description.sites], dtype=int),
            site_translations=np.array([site.translation for site in description.sites], dtype=float),
            site_rotations=np.stack([quat_to_matrix(site.rotation) for site in description.sites]),
            gravity=np.array(description.gravity, dtype=float),
            ancestors=ancestors,
        )
        for array in (chain.parents, chain.origin_translations, chain.origin_rotations, chain.axes,
                      chain.lower, chain.upper, chain.gear_ratios, chain.masses, chain.coms,
                      chain.site_parents, chain.site_translations, chain.site_rotations,
                      chain.gravity, chain.ancestors):
            array.setflags(write=False)
        return chain

    @property
    def n_joints(self) -> int:
        return len(self.joint_names)

    @property
    def n_sites(self) -> int:
        return len(self.site_names)

    def site_index(self, name: str) -> int:
        try:
            return self.site_names.index(name)
        except ValueError as exc:
            raise ChainValidationError(f"unknown site {name!r}") from exc

    def truncated(self, count: int) -> "ChainModel":
        """Chain made of the first ``count`` joints and the sites they carry."""
        if not 1 <= count <= self.n_joints:
            raise DimensionMismatchError(f"prefix length must be in [1, {self.n_joints}]")
        desc = self.description
        sites = [site for site in desc.sites if site.parent < count]
        if not sites:
            raise ChainValidationError("prefix chain carries no site")
        trimmed = desc.model_copy(
            update={"joints": desc.joints[:count], "links": desc.links[:count], "sites": sites}
        )
        return ChainModel.from_description(ChainDescription.model_validate(trimmed.model_dump()))

    def clamp(self, q: np.ndarray) -> np.ndarray:
        return np.clip(q, self.lower, self.upper)

    def check_q(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if q.shape != (self.n_joints,):
            raise DimensionMismatchError(f"expected {self.n_joints} joint values, got shape {q.shape}")
        return q

    def kinematics(self, q: np.ndarray) -> Kinematics:
        q = self.check_q(q)
        n = self.n_joints
        local = np.einsum("nij,njk->nik", self.origin_rotations, axis_rotations(self.axes, q))
        positions = np.empty((n, 3))
        rotations = np.empty((n, 3, 3))
        for index in range(n):
            parent = self.parents[index]
            if parent < 0:
                positions[index] = self.origin_translations[index]
                rotations[index] = local[index]
            else:
                parent_rotation = rotations[parent]
                positions[index] = positions[parent] + parent_rotation @ self.origin_translations[index]
                rotations[index] = parent_rotation @ local[index]
        axes = np.einsum("nij,nj->ni", rotations, self.axes)
        parent_rotations = rotations[self.site_parents]
        site_positions = positions[self.site_parents] + np.einsum(
            "nij,nj->ni", parent_rotations, self.site_translations
        )
        site_rotations = np.einsum("nij,njk->nik", parent_rotations, self.site_rotations)
        return Kinematics(positions, rotations, axes, site_positions, site_rotations)

    def site_jacobian(self, kin: Kinematics, site: int) -> Tuple[np.ndarray, np.ndarray]:
        mask = self.ancestors[self.site_parents[site]]
        return self._point_jacobian(kin, kin.site_positions[site], mask)

    def _point_jacobian(self, kin: Kinematics, point: np.ndarray, mask: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        jr = np.where(mask[:, None], kin.joint_axes, 0.0)
        jp = np.cross(jr, point - kin.joint_positions)
        return jp.T, jr.T

    def holding_torques(self, kin: Kinematics) -> np.ndarray:
        """Joint torques the motors must exert to hold the chain against gravity."""
        com_world = kin.joint_positions + np.einsum("nij,nj->ni", kin.joint_rotations, self.coms)
        weights = self.masses[:, None] * self.gravity[None, :]
        # subtree sums: row j of `ancestors` marks the joints that carry link j
        moment_sum = self.ancestors.T.astype(float) @ np.cross(com_world, weights)
        weight_sum = self.ancestors.T.astype(float) @ weights
        generalized = np.einsum(
            "ni,ni->n", kin.joint_axes, moment_sum - np.cross(kin.joint_positions, weight_sum)
        )
        return -generalized

    def potential_energy(self, kin: Kinematics) -> float:
        """Gravitational potential energy, zero at the world origin."""
        com_world = kin.joint_positions + np.einsum("nij,nj->ni", kin.joint_rotations, self.coms)
        return float(-np.sum(self.masses * (com_world @ self.gravity)))

    def site_poses(self, kin: Kinematics) -> List[Pose]:
        return [
            Pose.from_matrix(kin.site_positions[index], kin.site_rotations[index])
            for index in range(self.n_sites)
        ]


def load_chain(description_file: str | Path) -> ChainModel:
    """Parse and validate a chain description file."""
    path = Path(description_file)
    description = load_document(path, ChainDescription, ChainParseError, ChainValidationError)
    chain = ChainModel.from_description(description)
    logger.debug("Loaded chain %s with %d joints and %d sites", path, chain.n_joints, chain.n_sites)
    return chain


def forward_kinematics(chain: ChainModel, q, *, clamp: bool = False) -> List[Pose]:
    q = chain.check_q(q)
    if clamp:
        q = chain.clamp(q)
    return chain.site_poses(chain.kinematics(q))


def jacobian(chain: ChainModel, q, site: int) -> Tuple[np.ndarray, np.ndarray]:
    """Translational and rotational site Jacobians (3 x n each, world frame)."""
    if not 0 <= site < chain.n_sites:
        raise DimensionMismatchError(f"site index {site} out of range for {chain.n_sites} sites")
    return chain.site_jacobian(chain.kinematics(q), site)


def gravity_torques(chain: ChainModel, q) -> np.ndarray:
    """Holding torque +dU/dq at ``q``: the torque the motors must exert to keep the
    chain still, not the gravity load acting on the joints (which is its negative).
    """
    return chain.holding_torques(chain.kinematics(q))
