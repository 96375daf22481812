"""Actuator telemetry to external joint torque.

PWM is turned into winding current with the back-EMF model, current into load
torque with direction-dependent transmission efficiency, and gravity is removed
using the chain's holding torques.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from ...errors import DimensionMismatchError, PwmRangeError
from ...schemas import MotorParams

FORWARD = 1
BACKWARD = -1


@dataclass(frozen=True)
class DriveState:
    d: int = FORWARD

    def __post_init__(self) -> None:
        if self.d not in (FORWARD, BACKWARD):
            raise ValueError("drive state must be +1 or -1")


@dataclass
class TorqueEstimatorState:
    """Mutable per-loop estimator state; owned by a single control loop."""

    drive: list[DriveState]
    ema: np.ndarray
    alpha: float = 0.9

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")

    @classmethod
    def initial(cls, n_joints: int, alpha: float = 0.9) -> "TorqueEstimatorState":
        return cls(drive=[DriveState() for _ in range(n_joints)], ema=np.zeros(n_joints), alpha=alpha)

    def copy(self) -> "TorqueEstimatorState":
        return TorqueEstimatorState(list(self.drive), self.ema.copy(), self.alpha)


def pwm_to_current(pwm: float, qdot: float, params: MotorParams) -> float:
    """Winding current from duty cycle and motor velocity: (pwm*Vbus - qdot/Kv) / Rw."""
    if not -1.0 <= pwm <= 1.0:
        raise PwmRangeError(f"pwm {pwm} outside [-1, 1]")
    return (pwm * params.vbus - qdot / params.kv) / params.rw


def load_torque(current: float, qdot: float, params: MotorParams, state: DriveState) -> Tuple[float, DriveState]:
    winding_torque = params.kt * current
    d = state.d
    if abs(qdot) > params.eps_vel:
        power = winding_torque * qdot
        # zero power flow keeps the previous state
        if power > 0:
            d = FORWARD
        elif power < 0:
            d = BACKWARD
    if d > 0:
        return params.eta * winding_torque, DriveState(d)
    return winding_torque / params.eta, DriveState(d)


def external_joint_torque(tau_load, tau_grav, gear_ratio):
    """-(r * tau_load - tau_grav), scalar or per joint."""
    return -(np.multiply(gear_ratio, tau_load) - tau_grav)


def ema_step(state: TorqueEstimatorState, tau_raw) -> np.ndarray:
    """y <- alpha * x + (1 - alpha) * y_prev, per joint."""
    tau_raw = np.asarray(tau_raw, dtype=float)
    if tau_raw.shape != state.ema.shape:
        raise DimensionMismatchError(f"expected {state.ema.shape[0]} torques, got shape {tau_raw.shape}")
    state.ema = state.alpha * tau_raw + (1.0 - state.alpha) * state.ema
    return state.ema.copy()


def joint_load_torques(
    motors: Sequence[MotorParams],
    gear_ratios: np.ndarray,
    qdot_joint: np.ndarray,
    state: TorqueEstimatorState,
    *,
    pwm: np.ndarray | None = None,
    current: np.ndarray | None = None,
) -> np.ndarray:
    """Per-joint tau_load from PWM or measured current; advances the drive states.

    Back-EMF and power flow use the motor-side velocity ``r * qdot``.
    """
    motor_velocity = gear_ratios * qdot_joint
    tau_load = np.empty(len(motors))
    for index, params in enumerate(motors):
        if current is not None and (params.has_current_sensor or pwm is None):
            winding_current = float(current[index])
        elif pwm is not None:
            winding_current = pwm_to_current(float(pwm[index]), float(motor_velocity[index]), params)
        else:
            raise DimensionMismatchError("telemetry carries neither pwm nor current")
        tau_load[index], state.drive[index] = load_torque(
            winding_current, float(motor_velocity[index]), params, state.drive[index]
        )
    return tau_load
