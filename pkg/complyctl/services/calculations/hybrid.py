"""Direction-dependent stiffness for hybrid force/velocity commands."""
from __future__ import annotations

import logging
from pathlib import Path
from typing import List, Tuple

import numpy as np
import pandas as pd
from pydantic import ValidationError

from ...errors import SchemaError
from ...schemas import HybridCommand
from ..spatial import Pose
from .admittance import ComplianceCommand, block_stiffness
from .wrench import Wrench

logger = logging.getLogger(__name__)

HYBRID_COLUMNS = ["t", "vx", "vy", "vz", "k_low", "k_high", "fx", "fy", "fz"]
DEFAULT_ROTATIONAL_STIFFNESS = 20.0


def stiffness_from_velocity(cmd: HybridCommand) -> np.ndarray:
    """K = k_low I + (k_high - k_low) v v^T / |v|^2; k_low I when v is zero."""
    v = np.asarray(cmd.v, dtype=float)
    norm_sq = float(v @ v)
    stiffness = cmd.k_low * np.eye(3)
    if norm_sq == 0.0:
        return stiffness
    return stiffness + (cmd.k_high - cmd.k_low) * np.outer(v, v) / norm_sq


def integrate_velocity(x_des: Pose, v, dt: float) -> Pose:
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    return Pose(x_des.position + dt * np.asarray(v, dtype=float), x_des.orientation.copy())


def make_compliance_command(
    cmd: HybridCommand,
    x_des: Pose,
    *,
    rotational_stiffness=DEFAULT_ROTATIONAL_STIFFNESS,
    mass: float = 1.0,
) -> ComplianceCommand:
    kp = block_stiffness(stiffness_from_velocity(cmd), rotational_stiffness)
    xdot_des = np.concatenate([np.asarray(cmd.v, dtype=float), np.zeros(3)])
    return ComplianceCommand.critically_damped(
        x_des, kp, xdot_des=xdot_des, f_cmd=Wrench.from_vector(cmd.f_offset), mass=mass
    )


def read_hybrid_commands(path: str | Path) -> List[Tuple[float, HybridCommand]]:
    """Load a scripted ``t,vx,vy,vz,k_low,k_high,fx,fy,fz`` sequence."""
    path = Path(path)
    try:
        df = pd.read_csv(path)
    except pd.errors.EmptyDataError as exc:
        raise SchemaError(f"{path}:1: empty command file") from exc
    except (OSError, pd.errors.ParserError) as exc:
        raise SchemaError(f"{path}: cannot parse commands: {exc}") from exc
    if list(df.columns) != HYBRID_COLUMNS:
        raise SchemaError(f"{path}:1: header must be {','.join(HYBRID_COLUMNS)}")
    numeric = df.apply(pd.to_numeric, errors="coerce").astype(float)
    bad_rows = numeric.isna().any(axis=1)
    if bad_rows.any():
        raise SchemaError(f"{path}:{int(bad_rows.to_numpy().argmax()) + 2}: non-numeric command value")
    if not numeric["t"].is_monotonic_increasing:
        raise SchemaError(f"{path}: command times must be non-decreasing")

    commands = []
    for offset, row in enumerate(numeric.itertuples(index=False)):
        try:
            cmd = HybridCommand(
                v=(row.vx, row.vy, row.vz),
                k_low=row.k_low,
                k_high=row.k_high,
                f_offset=(row.fx, row.fy, row.fz, 0.0, 0.0, 0.0),
            )
        except ValidationError as exc:
            raise SchemaError(f"{path}:{offset + 2}: {exc.errors()[0]['msg']}") from exc
        commands.append((float(row.t), cmd))
    logger.debug("Loaded %d hybrid commands from %s", len(commands), path)
    return commands
