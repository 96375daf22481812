"""Shared helpers for complyctl tests."""
from __future__ import annotations

from typing import List, Optional, Sequence

import numpy as np
from scipy.spatial.transform import Rotation

from complyctl.schemas import ChainDescription
from complyctl.services.chain_model import ChainModel

SERVO = {"kv": 100.0, "rw": 2.0, "kt": 0.007, "eta": 0.8, "vbus": 12.0, "eps_vel": 0.05}


def chain_payload(
    n_joints: int,
    rng: np.random.Generator,
    *,
    branch_at: Optional[int] = None,
    motor: Optional[dict] = None,
    gear_ratio: float = 200.0,
) -> dict:
    """Random tree-shaped chain description; joints after ``branch_at`` hang off it."""
    joints, links = [], []
    for index in range(n_joints):
        if index == 0:
            parent = None
        elif branch_at is not None and index == branch_at + 2:
            parent = branch_at
        else:
            parent = index - 1
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        joints.append({
            "name": f"j{index}",
            "parent": parent,
            "origin_translation": list(rng.uniform(-0.15, 0.15, size=3)),
            "origin_rotation": list(Rotation.random(random_state=rng).as_quat()),
            "axis": list(axis),
            "limits": [-3.0, 3.0],
            "gear_ratio": gear_ratio,
            "motor": "servo",
        })
        links.append({"mass": float(rng.uniform(0.05, 0.5)), "com": list(rng.uniform(-0.05, 0.05, size=3))})
    sites = [{"name": "tip", "parent": n_joints - 1, "translation": [0.05, 0.0, 0.0]}]
    if branch_at is not None:
        sites.append({"name": "branch", "parent": branch_at + 1, "translation": [0.0, 0.03, 0.0]})
    return {
        "schema_version": 1,
        "gravity": [0.0, 0.0, -9.81],
        "motors": {"servo": dict(motor or SERVO)},
        "joints": joints,
        "links": links,
        "sites": sites,
    }


def random_chain(n_joints: int, seed: int = 0, **kwargs) -> ChainModel:
    rng = np.random.default_rng(seed)
    payload = chain_payload(n_joints, rng, **kwargs)
    return ChainModel.from_description(ChainDescription.model_validate(payload))


def planar_chain(lengths: Sequence[float] = (0.3, 0.25, 0.1), masses: Optional[Sequence[float]] = None) -> ChainModel:
    """Pitch-only arm in the x-z plane; joints about y, links along x, masses at link midpoints."""
    masses = [0.0] * len(lengths) if masses is None else list(masses)
    joints = []
    for index, _ in enumerate(lengths):
        joints.append({
            "name": f"pitch{index}",
            "parent": None if index == 0 else index - 1,
            "origin_translation": [0.0, 0.0, 0.0] if index == 0 else [lengths[index - 1], 0.0, 0.0],
            "axis": [0.0, 1.0, 0.0],
            "limits": [-2.5, 2.5],
            "gear_ratio": 1.0,
            "motor": "servo",
        })
    payload = {
        "schema_version": 1,
        "motors": {"servo": SERVO},
        "joints": joints,
        "links": [{"mass": mass, "com": [length / 2, 0.0, 0.0]} for mass, length in zip(masses, lengths)],
        "sites": [{"name": "tip", "parent": len(lengths) - 1, "translation": [lengths[-1], 0.0, 0.0]}],
    }
    return ChainModel.from_description(ChainDescription.model_validate(payload))


def finite_difference_jacobian(chain: ChainModel, q: np.ndarray, site: int, h: float = 1e-6):
    """Central-difference translational and rotational Jacobians of a site."""
    n = chain.n_joints
    jp = np.zeros((3, n))
    jr = np.zeros((3, n))
    for j in range(n):
        dq = np.zeros(n)
        dq[j] = h
        plus = chain.kinematics(q + dq)
        minus = chain.kinematics(q - dq)
        jp[:, j] = (plus.site_positions[site] - minus.site_positions[site]) / (2 * h)
        relative = Rotation.from_matrix(plus.site_rotations[site] @ minus.site_rotations[site].T)
        jr[:, j] = relative.as_rotvec() / (2 * h)
    return jp, jr


def finite_difference_gravity(chain: ChainModel, q: np.ndarray, h: float = 1e-6) -> np.ndarray:
    grad = np.zeros(chain.n_joints)
    for j in range(chain.n_joints):
        dq = np.zeros(chain.n_joints)
        dq[j] = h
        grad[j] = (chain.potential_energy(chain.kinematics(q + dq))
                   - chain.potential_energy(chain.kinematics(q - dq))) / (2 * h)
    return grad


def kv_sweep(kv: float, vbus: float, rng: Optional[np.random.Generator] = None, noise: float = 0.0):
    pwm = np.linspace(0.1, 0.9, 17)
    qdot = kv * pwm * vbus
    if rng is not None:
        qdot = qdot * (1.0 + noise * rng.standard_normal(pwm.size))
    return list(zip(pwm, qdot))


def rw_sweep(rw: float, kv: float, vbus: float, rng: Optional[np.random.Generator] = None, noise: float = 0.0):
    current = np.linspace(0.2, 2.0, 19)
    qdot = np.linspace(0.0, 3.0, 19)
    voltage = rw * current
    if rng is not None:
        voltage = voltage * (1.0 + noise * rng.standard_normal(current.size))
    pwm = (voltage + qdot / kv) / vbus
    return list(zip(pwm, qdot, current))


def kt_branches(kt: float, eta: float, rng: Optional[np.random.Generator] = None, noise: float = 0.0):
    current = np.linspace(0.2, 2.0, 19)

    def branch(slope: float) -> List[tuple]:
        torque = slope * current
        if rng is not None:
            torque = torque * (1.0 + noise * rng.standard_normal(current.size))
        return list(zip(current, torque))

    return branch(eta * kt), branch(kt / eta)
