"""Keyframe densification for surface-contact paths."""
from __future__ import annotations

from typing import List, Sequence

import numpy as np
import pandas as pd

from ..errors import NonUnitAxisError
from ..schemas import UNIT_TOLERANCE
from .calculations.admittance import ComplianceCommand, block_stiffness, stiffness_from_normal
from .calculations.wrench import Wrench
from .spatial import Pose

PATH_COLUMNS = ["t", "x", "y", "z", "vx", "vy", "vz", "contact"]


def _unit(vector) -> np.ndarray:
    vector = np.asarray(vector, dtype=float)
    norm = float(np.linalg.norm(vector))
    if abs(norm - 1.0) > UNIT_TOLERANCE:
        raise NonUnitAxisError(f"normal must have unit norm (got {norm:.12g})")
    return vector


def plane_basis(normal) -> np.ndarray:
    """Two orthonormal tangents (rows) spanning the plane with the given normal."""
    n = _unit(normal)
    helper = np.eye(3)[int(np.argmin(np.abs(n)))]
    u = np.cross(n, helper)
    u /= np.linalg.norm(u)
    return np.stack([u, np.cross(n, u)])


def heart_keyframes(center, size: float, count: int, normal=(0.0, 0.0, 1.0)) -> np.ndarray:
    """``count`` points on a heart of width ``size`` centred on ``center`` in the plane."""
    basis = plane_basis(normal)
    s = np.linspace(0.0, 2.0 * np.pi, count)
    x = 16.0 * np.sin(s) ** 3
    y = 13.0 * np.cos(s) - 5.0 * np.cos(2 * s) - 2.0 * np.cos(3 * s) - np.cos(4 * s)
    scale = size / 32.0
    planar = np.stack([x, y - 2.5], axis=1) * scale
    return np.asarray(center, dtype=float) + planar @ basis


def line_keyframes(start, end, count: int) -> np.ndarray:
    return np.linspace(np.asarray(start, dtype=float), np.asarray(end, dtype=float), count)


def wipe_keyframes(center, size: float, passes: int, points: int, normal=(0.0, 0.0, 1.0)) -> np.ndarray:
    """Serpentine raster over a ``size`` square: ``passes`` strokes of ``points`` grid samples."""
    basis = plane_basis(normal)
    along = np.linspace(-0.5 * size, 0.5 * size, points)
    across = np.linspace(-0.5 * size, 0.5 * size, passes)
    strokes = [
        np.outer(along if index % 2 == 0 else along[::-1], basis[0]) + offset * basis[1]
        for index, offset in enumerate(across)
    ]
    return np.asarray(center, dtype=float) + np.concatenate(strokes)


def _segment(p0: np.ndarray, p1: np.ndarray, duration: float, contact: bool, rate_hz: float, t0: float):
    steps = max(int(np.ceil(duration * rate_hz - 1e-9)), 1)
    velocity = (p1 - p0) / duration if duration > 0 else np.zeros(3)
    fractions = np.arange(1, steps + 1) / steps
    rows = []
    for fraction in fractions:
        point = p0 + fraction * (p1 - p0)
        rows.append([t0 + fraction * duration, *point, *velocity, contact])
    return rows, t0 + duration


def densify(
    keyframes: Sequence[Sequence[float]],
    normal,
    *,
    start=None,
    rate_hz: float = 50.0,
    free_speed: float = 0.2,
    contact_speed: float = 0.05,
    approach_height: float = 0.02,
    pause: float = 0.5,
) -> pd.DataFrame:
    """Dense ``t, x, y, z, vx, vy, vz, contact`` path over surface keyframes.

    Approach from above the first keyframe, pause after touching down, trace
    the keyframes at contact speed, pause again and retreat along the normal.
    """
    n = _unit(normal)
    points = np.asarray(keyframes, dtype=float)
    hover_in = points[0] + approach_height * n
    hover_out = points[-1] + approach_height * n
    origin = hover_in if start is None else np.asarray(start, dtype=float)

    # (from, to, speed or fixed duration, in contact)
    plan: List[tuple] = [(origin, hover_in, free_speed, None, False),
                         (hover_in, points[0], contact_speed, None, False),
                         (points[0], points[0], None, pause, True)]
    for p0, p1 in zip(points[:-1], points[1:]):
        plan.append((p0, p1, contact_speed, None, True))
    plan.append((points[-1], points[-1], None, pause, True))
    plan.append((points[-1], hover_out, contact_speed, None, False))

    rows = [[0.0, *origin, 0.0, 0.0, 0.0, False]]
    t = 0.0
    for p0, p1, speed, fixed, contact in plan:
        duration = fixed if fixed is not None else float(np.linalg.norm(p1 - p0)) / speed
        if duration <= 0:
            continue
        segment, t = _segment(p0, p1, duration, contact, rate_hz, t)
        rows.extend(segment)
    frame = pd.DataFrame(rows, columns=PATH_COLUMNS)
    frame["contact"] = frame["contact"].astype(bool)
    return frame


def surface_command(
    position,
    orientation,
    normal,
    *,
    k_normal: float,
    k_tangential: float,
    k_rot: float,
    force: float,
    mass: float = 1.0,
    velocity=None,
    in_contact: bool = True,
) -> ComplianceCommand:
    """Soft along the normal and pressing into the surface; stiff tangentially.

    Off the surface the command is isotropic at ``k_tangential`` with no force.
    """
    n = _unit(normal)
    if in_contact:
        translational = stiffness_from_normal(n, k_normal, k_tangential)
        f_cmd = Wrench(-force * n, np.zeros(3))
    else:
        translational = k_tangential * np.eye(3)
        f_cmd = Wrench.zero()
    xdot_des = np.zeros(6)
    if velocity is not None:
        xdot_des[:3] = velocity
    return ComplianceCommand.critically_damped(
        Pose(np.asarray(position, dtype=float), np.asarray(orientation, dtype=float)),
        block_stiffness(translational, k_rot),
        xdot_des=xdot_des,
        f_cmd=f_cmd,
        mass=mass,
    )
