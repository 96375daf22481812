from __future__ import annotations

from typing import Iterable, Optional

import numpy as np
import pandas as pd
from scipy.spatial.transform import Rotation

CONTACT_LOSS_FRACTION = 0.5
AXES = ("x", "y", "z")


def _round(value: Optional[float], ndigits: int = 6) -> Optional[float]:
    if value is None:
        return None
    return float(round(float(value), ndigits))


def _mean_std(values: pd.Series) -> dict:
    if values.empty:
        return {"mean": None, "std": None}
    return {"mean": _round(values.mean()), "std": _round(values.std(ddof=0))}


def force_errors(estimated: pd.DataFrame, true: pd.DataFrame) -> dict:
    """Per-axis and overall absolute force error between two ``fx, fy, fz`` frames."""
    columns = [f"f{axis}" for axis in AXES]
    diff = (estimated[columns].reset_index(drop=True) - true[columns].reset_index(drop=True)).abs()
    per_axis = {axis: _mean_std(diff[f"f{axis}"]) for axis in AXES}
    overall = diff.stack()
    return {"n": int(len(diff)), "mae": _mean_std(overall), "axes": per_axis}


def mean_absolute_error(estimated: pd.DataFrame, true: pd.DataFrame) -> float:
    return float(force_errors(estimated, true)["mae"]["mean"] or 0.0)


def tracking_errors(trace: pd.DataFrame, site: str) -> dict:
    """Position error (mm) and orientation error (rad) of the actual site pose against x_des."""
    actual = trace[[f"{site}_x_{axis}" for axis in AXES]].to_numpy()
    desired = trace[[f"{site}_xdes_{axis}" for axis in AXES]].to_numpy()
    position = pd.Series(np.linalg.norm(actual - desired, axis=1) * 1e3)

    actual_rot = Rotation.from_rotvec(trace[[f"{site}_x_r{axis}" for axis in AXES]].to_numpy())
    desired_rot = Rotation.from_rotvec(trace[[f"{site}_xdes_r{axis}" for axis in AXES]].to_numpy())
    orientation = pd.Series((desired_rot * actual_rot.inv()).magnitude())
    return {
        "site": site,
        "position_mm": _mean_std(position),
        "orientation_rad": _mean_std(orientation),
    }


def timing_percentiles(durations: Iterable[float]) -> dict:
    """p50/p90/p99 of per-tick durations given in seconds, reported in milliseconds."""
    values = pd.Series(list(durations), dtype=float) * 1e3
    if values.empty:
        return {"p50_ms": None, "p90_ms": None, "p99_ms": None}
    quantiles = values.quantile([0.5, 0.9, 0.99])
    return {
        "p50_ms": _round(quantiles.loc[0.5], 4),
        "p90_ms": _round(quantiles.loc[0.9], 4),
        "p99_ms": _round(quantiles.loc[0.99], 4),
    }


def contact_stats(
    normal_force: pd.Series,
    in_contact: pd.Series,
    commanded: float,
    threshold: float,
) -> dict:
    """Normal-force statistics over the contact phase of a draw.

    ``contact_loss`` is set when more than half of the contact-phase samples
    carry less than ``threshold`` newtons.
    """
    phase = normal_force[in_contact.astype(bool)].reset_index(drop=True)
    if phase.empty:
        return {
            "samples": 0,
            "peak_n": _round(normal_force.max()) if not normal_force.empty else None,
            "mean_n": None,
            "force_error_n": None,
            "below_threshold": None,
            "contact_loss": False,
        }
    below = float((phase < threshold).mean())
    return {
        "samples": int(len(phase)),
        "peak_n": _round(normal_force.max()),
        "mean_n": _round(phase.mean()),
        "force_error_n": _round((phase - commanded).abs().mean()),
        "below_threshold": _round(below),
        "contact_loss": below > CONTACT_LOSS_FRACTION,
    }
