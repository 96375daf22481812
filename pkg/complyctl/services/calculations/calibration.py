from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ...errors import CalibrationWarning, DegenerateSweepError, SchemaError
from ...schemas import MotorFragment, MotorParams

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = ["t", "pwm", "qdot", "current", "torque"]
MIN_CURRENT = 1e-6


@dataclass(frozen=True)
class FitReport:
    values: Dict[str, float]
    rms_residual: float
    samples: int
    notes: Tuple[str, ...] = field(default_factory=tuple)

    def as_dict(self) -> Dict[str, float]:
        return {**self.values, "rms_residual": self.rms_residual, "samples": float(self.samples)}


def _slope_through_origin(x: np.ndarray, y: np.ndarray) -> Tuple[float, float]:
    """Least-squares slope of y = s*x and the RMS residual."""
    solution, *_ = np.linalg.lstsq(x[:, None], y, rcond=None)
    slope = float(solution[0])
    residual = y - slope * x
    return slope, float(np.sqrt(np.mean(residual**2)))


def _as_array(samples: Iterable[Sequence[float]], width: int) -> np.ndarray:
    array = np.asarray(list(samples), dtype=float)
    if array.size == 0:
        return np.empty((0, width))
    if array.ndim != 2 or array.shape[1] != width:
        raise DegenerateSweepError(f"samples must be {width}-tuples")
    return array


def calibrate_kv(sweep: Iterable[Tuple[float, float]], vbus: float) -> FitReport:
    """Fit qdot = kv * pwm * vbus on no-load samples."""
    data = _as_array(sweep, 2)
    pwm, qdot = data[:, 0], data[:, 1]
    distinct = np.unique(pwm[pwm != 0.0])
    if distinct.size < 2:
        raise DegenerateSweepError("degenerate sweep: need at least two distinct nonzero pwm values")
    kv, rms = _slope_through_origin(pwm * vbus, qdot)
    if kv <= 0:
        raise DegenerateSweepError(f"degenerate sweep: fitted kv {kv:.6g} is not positive")
    return FitReport({"kv": kv}, rms, int(pwm.size))


def calibrate_rw(samples: Iterable[Tuple[float, float, float]], kv: float, vbus: float) -> FitReport:
    """Fit winding resistance as the slope of (pwm*vbus - qdot/kv) against current."""
    data = _as_array(samples, 3)
    pwm, qdot, current = data[:, 0], data[:, 1], data[:, 2]
    if current.size == 0 or np.all(np.abs(current) < MIN_CURRENT):
        raise DegenerateSweepError("degenerate sweep: all currents below 1e-6 A")
    voltage = pwm * vbus - qdot / kv
    rw, rms = _slope_through_origin(current, voltage)
    if rw <= 0:
        raise DegenerateSweepError(f"degenerate sweep: fitted rw {rw:.6g} is not positive")
    return FitReport({"rw": rw}, rms, int(current.size))


def _branch_slope(samples: np.ndarray, label: str) -> Tuple[float, float]:
    if samples.shape[0] < 2 or np.unique(samples[:, 0]).size < 2:
        raise DegenerateSweepError(f"degenerate sweep: {label} branch needs two distinct currents")
    slope, rms = _slope_through_origin(samples[:, 0], samples[:, 1])
    if slope <= 0:
        raise DegenerateSweepError(f"degenerate sweep: {label} slope {slope:.6g} is not positive")
    return slope, rms


def _pooled_rms(*branches: Tuple[float, int]) -> float:
    total = sum(count for _, count in branches)
    return float(np.sqrt(sum(rms**2 * count for rms, count in branches) / total))


def calibrate_kt_eta(
    forward: Iterable[Tuple[float, float]],
    backward: Iterable[Tuple[float, float]] = (),
    *,
    eta: Optional[float] = None,
    kt: Optional[float] = None,
) -> FitReport:
    """Factor forward (eta*kt) and backward (kt/eta) slopes into kt and eta.

    With one branch only, the manufacturer ``eta`` (or ``kt``) supplies the
    missing factor. A supplied ``kt`` with both branches keeps ``kt`` and fits
    ``eta`` from both slopes.
    """
    forward_data = _as_array(forward, 2)
    backward_data = _as_array(backward, 2)
    has_forward = forward_data.shape[0] > 0
    has_backward = backward_data.shape[0] > 0
    notes = []

    if has_forward and has_backward and kt is None:
        slope_f, rms_f = _branch_slope(forward_data, "forward")
        slope_b, rms_b = _branch_slope(backward_data, "backward")
        kt_fit = float(np.sqrt(slope_f * slope_b))
        eta_fit = float(np.sqrt(slope_f / slope_b))
        rms = _pooled_rms((rms_f, forward_data.shape[0]), (rms_b, backward_data.shape[0]))
    elif kt is not None and has_forward and has_backward:
        kt_fit = float(kt)
        slope_f, rms_f = _branch_slope(forward_data, "forward")
        slope_b, rms_b = _branch_slope(backward_data, "backward")
        # geometric mean of slope_f / kt and kt / slope_b; kt cancels
        eta_fit = float(np.sqrt(slope_f / slope_b))
        rms = _pooled_rms((rms_f, forward_data.shape[0]), (rms_b, backward_data.shape[0]))
        notes.append("manufacturer kt, eta from both branches")
    elif kt is not None and (has_forward or has_backward):
        kt_fit = float(kt)
        if has_forward:
            slope_f, rms = _branch_slope(forward_data, "forward")
            eta_fit = slope_f / kt_fit
        else:
            slope_b, rms = _branch_slope(backward_data, "backward")
            eta_fit = kt_fit / slope_b
        notes.append("manufacturer kt")
    elif eta is not None and (has_forward or has_backward):
        eta_fit = float(eta)
        if has_forward:
            slope_f, rms = _branch_slope(forward_data, "forward")
            kt_fit = slope_f / eta_fit
        else:
            slope_b, rms = _branch_slope(backward_data, "backward")
            kt_fit = slope_b * eta_fit
        notes.append("single-branch fit with supplied eta")
    else:
        raise DegenerateSweepError("degenerate sweep: need both drive branches, or one branch plus eta or kt")

    if eta_fit > 1.0:
        message = f"fitted eta {eta_fit:.6g} exceeds 1 (forward slope above backward); clamped to 1"
        logger.warning(message)
        warnings.warn(message, CalibrationWarning, stacklevel=2)
        notes.append("eta clamped")
        eta_fit = 1.0
    if eta_fit <= 0:
        raise DegenerateSweepError(f"degenerate sweep: fitted eta {eta_fit:.6g} is not positive")
    samples = forward_data.shape[0] + backward_data.shape[0]
    return FitReport({"kt": kt_fit, "eta": eta_fit}, rms, int(samples), tuple(notes))


def read_sweep(path: str | Path) -> pd.DataFrame:
    """Load a calibration sweep CSV (``t,pwm,qdot,current,torque``; unused cells empty)."""
    path = Path(path)
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError as exc:
        raise SchemaError(f"{path}:1: empty sweep file") from exc
    except (OSError, pd.errors.ParserError) as exc:
        raise SchemaError(f"{path}: cannot parse sweep: {exc}") from exc
    if list(df.columns) != SWEEP_COLUMNS:
        raise SchemaError(f"{path}:1: header must be {','.join(SWEEP_COLUMNS)}, got {','.join(df.columns)}")
    if df.empty:
        raise SchemaError(f"{path}:2: sweep has no samples")
    numeric = df.replace("", np.nan).apply(pd.to_numeric, errors="coerce")
    bad = numeric.isna() & (df != "")
    if bad.to_numpy().any():
        row, col = np.argwhere(bad.to_numpy())[0]
        # line 1 is the header
        raise SchemaError(f"{path}:{row + 2}: column {SWEEP_COLUMNS[col]!r} is not a number")
    return numeric.astype(float)


def _columns(df: pd.DataFrame, names: Sequence[str], path_hint: str) -> np.ndarray:
    subset = df[list(names)].dropna()
    if subset.empty:
        raise DegenerateSweepError(f"degenerate sweep: no rows with {', '.join(names)} ({path_hint})")
    return subset.to_numpy()


def split_drive_direction(df: pd.DataFrame, eps_vel: float = 0.0) -> Tuple[np.ndarray, np.ndarray]:
    """(current, torque) pairs split by the sign of current * qdot."""
    rows = df[["current", "torque", "qdot"]].dropna()
    moving = rows[rows["qdot"].abs() > eps_vel]
    dropped = len(rows) - len(moving)
    if dropped:
        logger.info("Dropped %d sweep samples at or below eps_vel=%g", dropped, eps_vel)
    power = moving["current"] * moving["qdot"]
    forward = moving.loc[power > 0, ["current", "torque"]].to_numpy()
    backward = moving.loc[power < 0, ["current", "torque"]].to_numpy()
    return forward, backward


def calibrate_from_frame(
    kind: str,
    df: pd.DataFrame,
    *,
    vbus: float,
    kv: Optional[float] = None,
    eta: Optional[float] = None,
    kt: Optional[float] = None,
    eps_vel: float = 0.0,
) -> FitReport:
    if kind == "kv":
        return calibrate_kv(_columns(df, ["pwm", "qdot"], "kv sweep"), vbus)
    if kind == "rw":
        if kv is None:
            raise DegenerateSweepError("rw calibration needs a known kv")
        return calibrate_rw(_columns(df, ["pwm", "qdot", "current"], "rw sweep"), kv, vbus)
    if kind == "kt":
        forward, backward = split_drive_direction(df, eps_vel)
        return calibrate_kt_eta(forward, backward, eta=eta, kt=kt)
    raise ValueError(f"unknown calibration kind {kind!r}")


def write_motor_fragment(
    path: str | Path,
    name: str,
    report: FitReport,
    base: Optional[MotorParams] = None,
) -> Dict[str, float]:
    """Write the fitted values as a ``motors{}`` entry, merged over ``base`` when given."""
    if base is not None:
        merged = MotorParams.model_validate({**base.model_dump(), **report.values})
        entry: Dict[str, float] = merged.model_dump()
    else:
        entry = dict(report.values)
    fragment = MotorFragment(motors={name: entry}, fit=report.as_dict())
    Path(path).write_text(fragment.model_dump_json(indent=2), encoding="utf-8")
    return entry
