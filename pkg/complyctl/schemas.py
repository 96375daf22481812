from __future__ import annotations

import math
from typing import Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

SCHEMA_VERSION = 1
UNIT_TOLERANCE = 1e-9

Vec3 = Tuple[float, float, float]
Vec6 = Tuple[float, float, float, float, float, float]
Quat = Tuple[float, float, float, float]

IDENTITY_QUAT: Quat = (0.0, 0.0, 0.0, 1.0)


def _norm(values) -> float:
    return math.sqrt(sum(float(v) * float(v) for v in values))


def _require_unit(values, label: str):
    norm = _norm(values)
    if abs(norm - 1.0) > UNIT_TOLERANCE:
        raise ValueError(f"{label} must have unit norm (got {norm:.12g})")
    return values


class _Document(BaseModel):
    model_config = ConfigDict(extra="forbid")

    schema_version: int = Field(default=SCHEMA_VERSION)

    @field_validator("schema_version")
    @classmethod
    def known_version(cls, value: int) -> int:
        if value != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {value}; expected {SCHEMA_VERSION}")
        return value


class MotorParams(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    kv: float = Field(..., gt=0, description="Velocity constant, rad/s per V", examples=[5.0])
    rw: float = Field(..., gt=0, description="Winding resistance, ohm", examples=[3.0])
    kt: float = Field(..., gt=0, description="Torque constant, N*m/A", examples=[0.01])
    eta: float = Field(..., gt=0, le=1, description="Transmission efficiency", examples=[0.8])
    vbus: float = Field(..., gt=0, description="Bus voltage, V", examples=[12.0])
    eps_vel: float = Field(0.0, ge=0, description="Drive-state debounce threshold, rad/s")
    has_current_sensor: bool = False


class JointSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    name: str = Field(..., min_length=1)
    parent: Optional[int] = Field(None, description="Index of the parent joint; null for world")
    origin_translation: Vec3 = (0.0, 0.0, 0.0)
    origin_rotation: Quat = Field(IDENTITY_QUAT, description="Unit quaternion, scalar-last [x, y, z, w]")
    axis: Vec3 = (0.0, 0.0, 1.0)
    limits: Tuple[float, float] = (-math.pi, math.pi)
    gear_ratio: float = Field(1.0, gt=0)
    motor: str = Field(..., min_length=1)

    @field_validator("axis")
    @classmethod
    def unit_axis(cls, value: Vec3) -> Vec3:
        return _require_unit(value, "axis")

    @field_validator("origin_rotation")
    @classmethod
    def unit_rotation(cls, value: Quat) -> Quat:
        return _require_unit(value, "origin_rotation")

    @field_validator("limits")
    @classmethod
    def ordered_limits(cls, value: Tuple[float, float]) -> Tuple[float, float]:
        if not value[0] < value[1]:
            raise ValueError("limits must satisfy min < max")
        return value


class LinkInertia(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    mass: float = Field(0.0, ge=0, description="Link mass, kg")
    com: Vec3 = Field((0.0, 0.0, 0.0), description="Centre of mass in the joint frame, m")


class SiteSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    name: str = Field(..., min_length=1)
    parent: int = Field(..., ge=0)
    translation: Vec3 = (0.0, 0.0, 0.0)
    rotation: Quat = IDENTITY_QUAT

    @field_validator("rotation")
    @classmethod
    def unit_rotation(cls, value: Quat) -> Quat:
        return _require_unit(value, "rotation")


class ChainDescription(_Document):
    gravity: Vec3 = (0.0, 0.0, -9.81)
    motors: Dict[str, MotorParams]
    joints: List[JointSpec] = Field(..., min_length=1)
    links: List[LinkInertia]
    sites: List[SiteSpec] = Field(..., min_length=1)

    @model_validator(mode="after")
    def check_structure(self) -> "ChainDescription":
        if len(self.links) != len(self.joints):
            raise ValueError(f"links has {len(self.links)} entries but there are {len(self.joints)} joints")
        names = [joint.name for joint in self.joints]
        if len(set(names)) != len(names):
            raise ValueError("joint names must be unique")
        for index, joint in enumerate(self.joints):
            if joint.parent is not None and not 0 <= joint.parent < index:
                raise ValueError(
                    f"joint {joint.name!r} has parent {joint.parent}; parents must precede children"
                )
            if joint.motor not in self.motors:
                raise ValueError(f"joint {joint.name!r} references unknown motor {joint.motor!r}")
        site_names = [site.name for site in self.sites]
        if len(set(site_names)) != len(site_names):
            raise ValueError("site names must be unique")
        for site in self.sites:
            if site.parent >= len(self.joints):
                raise ValueError(f"site {site.name!r} references missing joint {site.parent}")
        return self


class MotorFragment(_Document):
    """Calibration output; entries are full MotorParams when a base motor was given."""

    motors: Dict[str, Dict[str, Union[bool, float]]]
    fit: Dict[str, float] = Field(default_factory=dict)


class AxisSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    direction: Vec3
    kind: Literal["force", "torque"] = "force"


class EstimatorConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)

    lam: float = Field(1e-3, ge=0, alias="lambda")
    mode: Literal["full-force", "full-wrench", "axis-set"] = "full-force"
    axes: List[AxisSpec] = Field(default_factory=list)
    stacked: bool = True

    @model_validator(mode="after")
    def unit_axes(self) -> "EstimatorConfig":
        if self.mode == "axis-set":
            for axis in self.axes:
                _require_unit(axis.direction, "estimator axis")
        return self


class IkConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    damping: float = Field(1e-4, ge=0)
    max_joint_step: float = Field(0.2, gt=0, description="rad per solve")
    position_weight: float = Field(1.0, ge=0)
    orientation_weight: float = Field(0.5, ge=0)
    posture_weight: float = Field(0.0, ge=0)
    max_iterations: int = Field(20, ge=1)
    tolerance: float = Field(1e-5, gt=0)


class SiteCommandSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    site: str
    kp: Vec6 = (400.0, 400.0, 400.0, 20.0, 20.0, 20.0)
    kd: Optional[Vec6] = Field(None, description="Diagonal damping; critical damping when omitted")
    f_cmd: Vec6 = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    mass: float = Field(1.0, gt=0)


class ControllerConfig(_Document):
    dt: float = Field(0.012, gt=0)
    estimator: EstimatorConfig = Field(default_factory=EstimatorConfig)
    ik: IkConfig = Field(default_factory=IkConfig)
    ema_alpha: float = Field(0.9, ge=0, le=1)
    sites: List[SiteCommandSpec] = Field(default_factory=list)
    free_speed: float = Field(0.2, gt=0, description="m/s")
    contact_speed: float = Field(0.05, gt=0, description="m/s")
    angular_speed: float = Field(1.0, gt=0, description="rad/s")
    contact_force_threshold: float = Field(0.5, ge=0, description="N")
    staleness_ticks: int = Field(5, ge=1)
    stability_limit: float = Field(1.0, gt=0)
    variant: Literal["full", "no-fext", "position"] = "full"


class HybridCommand(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    v: Vec3 = (0.0, 0.0, 0.0)
    k_low: float = Field(..., ge=0)
    k_high: float = Field(..., ge=0)
    f_offset: Vec6 = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0)

    @model_validator(mode="after")
    def ordered_gains(self) -> "HybridCommand":
        if self.k_low > self.k_high:
            raise ValueError("k_low must not exceed k_high")
        return self


class SimMotorSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    noise_sigma: float = Field(0.0, ge=0, description="Multiplicative current noise, fraction of reading")
    quantization: float = Field(0.0, ge=0, description="A per LSB")
    kp_servo: float = Field(40.0, gt=0, description="N*m/rad")
    kd_servo: float = Field(1.0, ge=0, description="N*m*s/rad")
    viscous: float = Field(0.1, ge=0, description="Reflected viscous damping not seen by the current, N*m*s/rad")


class SurfaceSpec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    site: str
    normal: Vec3 = (0.0, 0.0, 1.0)
    offset: float = Field(0.0, description="Plane offset along the normal from the initial site position, m")
    stiffness: float = Field(2500.0, gt=0, description="N/m")
    friction: float = Field(0.2, ge=0)

    @field_validator("normal")
    @classmethod
    def unit_normal(cls, value: Vec3) -> Vec3:
        return _require_unit(value, "surface normal")


class PressScript(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    axis: Vec3 = (1.0, 0.0, 0.0)
    magnitude: float = Field(5.0, ge=0, description="N")
    rest: float = Field(0.5, ge=0, description="s")
    ramp: float = Field(1.0, ge=0, description="s")
    hold: float = Field(2.0, ge=0, description="s")
    release: float = Field(1.0, ge=0, description="s")
    compliant: bool = Field(False, description="Yield to the push instead of holding the initial pose")

    @field_validator("axis")
    @classmethod
    def unit_axis(cls, value: Vec3) -> Vec3:
        return _require_unit(value, "press axis")


class DrawScript(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    shape: Literal["heart", "line", "wipe"] = "heart"
    size: float = Field(0.04, gt=0, description="m")
    keyframes: int = Field(24, ge=2, description="Points on the outline, or grid samples per wipe stroke")
    passes: int = Field(4, ge=2, description="Parallel strokes of a wipe")
    lift: float = Field(0.0, description="Path height above the planned surface, m")
    force: float = Field(2.0, ge=0, description="Commanded normal force, N")
    k_normal: float = Field(50.0, ge=0)
    k_tangential: float = Field(400.0, ge=0)
    k_rot: float = Field(20.0, ge=0)
    approach_height: float = Field(0.02, ge=0)
    pause: float = Field(0.5, ge=0)
    rate_hz: float = Field(50.0, gt=0)


class ScenarioSpec(_Document):
    name: str = "scenario"
    chain: str = Field(..., description="Chain file, relative to the scenario file")
    controller: Optional[str] = Field(None, description="Controller config, relative to the scenario file")
    site: str
    sites: List[str] = Field(default_factory=list, description="Further end-effectors driven in the same loop")
    q0: List[float]
    seed: Optional[int] = Field(None, description="Falls back to COMPLYCTL_SEED")
    substeps: int = Field(4, ge=4)
    motor: SimMotorSpec = Field(default_factory=SimMotorSpec)
    surfaces: List[SurfaceSpec] = Field(default_factory=list)
    press: Optional[PressScript] = None
    draw: Optional[DrawScript] = None
    ema_alpha: Optional[float] = Field(None, ge=0, le=1)
    settle: float = Field(1.0, ge=0, description="Seconds simulated before the script starts")

    @model_validator(mode="after")
    def one_script(self) -> "ScenarioSpec":
        if (self.press is None) == (self.draw is None):
            raise ValueError("exactly one of 'press' or 'draw' must be given")
        every = [self.site, *self.sites]
        if len(set(every)) != len(every):
            raise ValueError("sites must be distinct and must not repeat 'site'")
        return self
