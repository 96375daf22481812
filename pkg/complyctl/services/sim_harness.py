"""Deterministic ground-truth world for closed-loop runs.

Position-servoed joints follow a first-order model: the servo PD effort,
gravity, contact and a viscous term the current sensor never sees balance at
every instant. Contact is a penalty spring along each surface normal with
Coulomb-capped friction. Telemetry is the servo effort pushed back through the
motor model, plus optional current noise and quantization.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import scipy.linalg as la

from ..errors import DimensionMismatchError, NonUnitAxisError, ScenarioError
from ..schemas import (
    UNIT_TOLERANCE,
    ControllerConfig,
    DrawScript,
    HybridCommand,
    MotorParams,
    PressScript,
    ScenarioSpec,
    SimMotorSpec,
)
from .calculations.admittance import ComplianceCommand
from .calculations.hybrid import integrate_velocity, make_compliance_command
from .calculations.metrics import contact_stats, force_errors, timing_percentiles, tracking_errors
from .calculations.motor_model import BACKWARD, FORWARD
from .calculations.wrench import Wrench
from .chain_model import ChainModel, Kinematics, load_chain
from .controller import (
    Controller,
    ControllerState,
    Telemetry,
    load_controller_config,
    pose_columns,
    telemetry_frame,
)
from .documents import load_document
from .spatial import Pose
from .trajectory import densify, heart_keyframes, line_keyframes, plane_basis, surface_command, wipe_keyframes

logger = logging.getLogger(__name__)

FRICTION_VELOCITY_EPS = 1e-3
HOLD_GAINS = (400.0, 400.0, 400.0, 20.0, 20.0, 20.0)
TAIL = 0.25
TRUE_FORCE = "f_true"
FORCE_FIELDS = ("fx", "fy", "fz")


@dataclass(frozen=True)
class SimMotor:
    params: MotorParams
    noise_sigma: float = 0.0
    quantization: float = 0.0
    kp_servo: float = 40.0
    kd_servo: float = 1.0
    viscous: float = 0.1

    def __post_init__(self) -> None:
        if self.noise_sigma < 0 or self.quantization < 0:
            raise ScenarioError("noise sigma and quantization must be non-negative")
        if self.kp_servo <= 0 or self.kd_servo < 0 or self.viscous < 0 or self.kd_servo + self.viscous <= 0:
            raise ScenarioError("servo gains must be positive")

    @classmethod
    def from_spec(cls, params: MotorParams, spec: SimMotorSpec) -> "SimMotor":
        return cls(params, **spec.model_dump())


@dataclass(frozen=True, eq=False)
class ContactSurface:
    """Half-space below a plane; pushes ``site`` back along ``normal``."""

    site: int
    point: np.ndarray
    normal: np.ndarray
    stiffness: float
    friction: float = 0.0

    def __post_init__(self) -> None:
        norm = float(np.linalg.norm(self.normal))
        if abs(norm - 1.0) > UNIT_TOLERANCE:
            raise NonUnitAxisError(f"surface normal must have unit norm (got {norm:.12g})")
        if not self.stiffness > 0:
            raise ScenarioError("surface stiffness must be positive")
        if self.friction < 0:
            raise ScenarioError("surface friction must be non-negative")

    def penetration(self, position: np.ndarray) -> float:
        return float((self.point - position) @ self.normal)


@dataclass(frozen=True, eq=False)
class _Evaluation:
    kin: Kinematics
    qdot: np.ndarray
    tau_motor: np.ndarray
    tau_contact: np.ndarray
    site_forces: Dict[int, np.ndarray]


@dataclass(eq=False)
class SimWorld:
    chain: ChainModel
    motors: Tuple[SimMotor, ...]
    surfaces: Tuple[ContactSurface, ...]
    seed: int
    q: np.ndarray
    substeps: int = 4
    t: float = 0.0
    applied: Dict[int, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if len(self.motors) != self.chain.n_joints:
            raise DimensionMismatchError(f"{len(self.motors)} sim motors for {self.chain.n_joints} joints")
        if self.substeps < 4:
            raise ScenarioError("sim must run at least 4 substeps per control tick")
        self.q = self.chain.check_q(self.q).copy()
        self.rng = np.random.default_rng(self.seed)
        self.kp = np.array([motor.kp_servo for motor in self.motors])
        self.kd = np.array([motor.kd_servo for motor in self.motors])
        self.damping = self.kd + np.array([motor.viscous for motor in self.motors])
        self.drive = np.full(self.chain.n_joints, FORWARD, dtype=int)
        self.q_target = self.q.copy()
        self.slip: Dict[int, float] = {}
        self.last = self._evaluate(self.q, self.q_target)

    def refresh(self) -> None:
        """Re-evaluate forces at the current state, e.g. after changing applied loads."""
        self.last = self._evaluate(self.q, self.q_target)

    @property
    def qdot(self) -> np.ndarray:
        return self.last.qdot

    def _contact(self, kin: Kinematics) -> Tuple[Dict[int, np.ndarray], Dict[int, Tuple[np.ndarray, float, float]]]:
        """Normal and applied forces per site, plus the friction set-up of touching surfaces."""
        forces: Dict[int, np.ndarray] = {site: np.array(force, dtype=float) for site, force in self.applied.items()}
        friction = {}
        for index, surface in enumerate(self.surfaces):
            depth = surface.penetration(kin.site_positions[surface.site])
            if depth <= 0.0:
                continue
            normal_force = surface.stiffness * depth
            forces[surface.site] = forces.get(surface.site, np.zeros(3)) + normal_force * surface.normal
            if surface.friction > 0:
                friction[index] = (surface.normal, surface.friction * normal_force,
                                   max(self.slip.get(index, 0.0), FRICTION_VELOCITY_EPS))
        return forces, friction

    def _evaluate(self, q: np.ndarray, q_target: np.ndarray) -> _Evaluation:
        chain = self.chain
        kin = chain.kinematics(q)
        forces, friction = self._contact(kin)
        jacobians = {site: chain.site_jacobian(kin, site)[0] for site in set(forces) | {
            self.surfaces[index].site for index in friction}}

        drive = self.kp * (q_target - q) - chain.holding_torques(kin)
        for site, force in forces.items():
            drive = drive + jacobians[site].T @ force

        qdot = drive / self.damping
        if friction:
            # viscous-regularised Coulomb friction, implicit in the new velocity
            system = np.diag(self.damping)
            for index, (normal, cap, slip) in friction.items():
                jp = jacobians[self.surfaces[index].site]
                tangent = np.eye(3) - np.outer(normal, normal)
                system = system + (cap / slip) * jp.T @ tangent @ jp
            qdot = la.solve(system, drive, assume_a="pos")
            extra = np.zeros_like(drive)
            for index, (normal, cap, slip) in friction.items():
                site = self.surfaces[index].site
                jp = jacobians[site]
                v_t = (np.eye(3) - np.outer(normal, normal)) @ (jp @ qdot)
                f_t = -(cap / slip) * v_t
                magnitude = float(np.linalg.norm(f_t))
                if magnitude > cap:
                    f_t *= cap / magnitude
                forces[site] = forces[site] + f_t
                extra += jp.T @ f_t
                self.slip[index] = float(np.linalg.norm(v_t))
            # friction enters explicitly so the reported wrench is exactly what acts
            qdot = (drive + extra) / self.damping
        else:
            self.slip.clear()

        tau_contact = np.zeros(chain.n_joints)
        for site, force in forces.items():
            tau_contact += jacobians[site].T @ force
        tau_motor = self.kp * (q_target - q) - self.kd * qdot
        return _Evaluation(kin, qdot, tau_motor, tau_contact, forces)

    def telemetry(self) -> Telemetry:
        """Telemetry of the current state; advances drive states and the noise stream."""
        chain = self.chain
        qdot = self.last.qdot
        omega = chain.gear_ratios * qdot
        tau_load = self.last.tau_motor / chain.gear_ratios
        current = np.empty(chain.n_joints)
        for index, motor in enumerate(self.motors):
            params = motor.params
            if abs(omega[index]) > params.eps_vel:
                power = tau_load[index] * omega[index]
                if power > 0:
                    self.drive[index] = FORWARD
                elif power < 0:
                    self.drive[index] = BACKWARD
            if self.drive[index] == FORWARD:
                current[index] = tau_load[index] / (params.eta * params.kt)
            else:
                current[index] = params.eta * tau_load[index] / params.kt

        sigma = np.array([motor.noise_sigma for motor in self.motors])
        current = current * (1.0 + sigma * self.rng.standard_normal(chain.n_joints))
        lsb = np.array([motor.quantization for motor in self.motors])
        quantized = lsb > 0
        current[quantized] = np.round(current[quantized] / lsb[quantized]) * lsb[quantized]

        sensed = np.array([motor.params.has_current_sensor for motor in self.motors])
        pwm = None
        if not sensed.all():
            rw = np.array([motor.params.rw for motor in self.motors])
            kv = np.array([motor.params.kv for motor in self.motors])
            vbus = np.array([motor.params.vbus for motor in self.motors])
            pwm = (current * rw + omega / kv) / vbus
            if np.any(np.abs(pwm) > 1.0):
                logger.debug("PWM saturated at t=%.4f", self.t)
                pwm = np.clip(pwm, -1.0, 1.0)
        return Telemetry(
            t=self.t,
            q=self.q.copy(),
            qdot=qdot.copy(),
            pwm=pwm,
            current=current.copy() if sensed.any() else None,
        )

    def site_pose(self, site: int) -> Pose:
        kin = self.last.kin
        return Pose.from_matrix(kin.site_positions[site], kin.site_rotations[site])


def sim_step(world: SimWorld, q_target, dt: float) -> Telemetry:
    """Advance the world by one control period toward ``q_target``."""
    q_target = world.chain.check_q(q_target)
    if not dt > 0:
        raise ScenarioError(f"dt must be positive, got {dt}")
    h = dt / world.substeps
    world.q_target = q_target.copy()
    for _ in range(world.substeps):
        world.last = world._evaluate(world.q, q_target)
        world.q = world.q + h * world.last.qdot
        world.t += h
    world.last = world._evaluate(world.q, q_target)
    return world.telemetry()


def true_wrench(world: SimWorld, site: int) -> Wrench:
    """Contact plus applied wrench acting on ``site`` at the current state."""
    force = world.last.site_forces.get(site)
    if force is None:
        return Wrench.zero()
    return Wrench(force.copy(), np.zeros(3))


def mechanical_energy(world: SimWorld, q_target=None) -> float:
    """Servo spring + gravity + contact spring energy of the current state."""
    q_target = world.q_target if q_target is None else np.asarray(q_target, dtype=float)
    kin = world.chain.kinematics(world.q)
    energy = 0.5 * float(np.sum(world.kp * (q_target - world.q) ** 2))
    energy += world.chain.potential_energy(kin)
    for surface in world.surfaces:
        depth = surface.penetration(kin.site_positions[surface.site])
        if depth > 0:
            energy += 0.5 * surface.stiffness * depth**2
    return energy


@dataclass
class ScenarioReport:
    trace: pd.DataFrame
    telemetry: pd.DataFrame
    summary: dict
    durations: List[float] = field(default_factory=list)


def _force_frame(trace: pd.DataFrame, prefix: str) -> pd.DataFrame:
    return pd.DataFrame({
        "fx": trace[f"{prefix}_fx"].to_numpy(),
        "fy": trace[f"{prefix}_fy"].to_numpy(),
        "fz": trace[f"{prefix}_fz"].to_numpy(),
    })


def _closed_loop(
    world: SimWorld,
    controller: Controller,
    state: ControllerState,
    sites: Sequence[str],
    duration: float,
    commands_at: Callable[[float], Dict[str, ComplianceCommand]],
    push_at: Callable[[float], np.ndarray],
    annotate: Callable[[float], dict],
) -> ScenarioReport:
    """Run the controller against the world; ``push_at`` loads the first site."""
    dt = controller.config.dt
    indices = [world.chain.site_index(site) for site in sites]
    primary = indices[0]
    world.applied[primary] = push_at(0.0)
    world.refresh()
    telemetry = world.telemetry()
    start = world.t
    rows, tel_rows, durations = [], [], []
    ticks = int(round(duration / dt))
    for _ in range(ticks + 1):
        t = telemetry.t
        started = time.perf_counter()
        q_target, record, state = controller.run_step(telemetry, commands_at(t - start), state)
        durations.append(time.perf_counter() - started)

        truth = true_wrench(world, primary)
        row = record.as_row()
        for site, index in zip(sites, indices):
            row.update(pose_columns(f"{site}_x", world.site_pose(index)))
        row.update(_force_columns(TRUE_FORCE, truth.force))
        for site, index in zip(sites[1:], indices[1:]):
            row.update(_force_columns(f"{site}_{TRUE_FORCE}", true_wrench(world, index).force))
        row.update(annotate(t - start))
        rows.append(row)
        tel_rows.append((telemetry, truth.force))

        world.applied[primary] = push_at(t - start + dt)
        telemetry = sim_step(world, q_target, dt)

    tel_frame = telemetry_frame([item[0] for item in tel_rows])
    truth = np.array([item[1] for item in tel_rows])
    for column, axis in enumerate(FORCE_FIELDS):
        tel_frame[f"{TRUE_FORCE}_{axis}"] = truth[:, column]
    return ScenarioReport(pd.DataFrame(rows), tel_frame, {}, durations)


def _force_columns(prefix: str, force: np.ndarray) -> Dict[str, float]:
    return {f"{prefix}_{name}": float(value) for name, value in zip(FORCE_FIELDS, force)}


def _true_prefix(site: str, sites: Sequence[str]) -> str:
    return TRUE_FORCE if site == sites[0] else f"{site}_{TRUE_FORCE}"


def _settle(world: SimWorld, controller: Controller, state: ControllerState,
            commands: Dict[str, ComplianceCommand], seconds: float) -> ControllerState:
    """Let sag and filters settle before scripted motion; nothing is recorded."""
    dt = controller.config.dt
    world.refresh()
    telemetry = world.telemetry()
    for _ in range(int(round(seconds / dt))):
        q_target, _, state = controller.run_step(telemetry, commands, state)
        telemetry = sim_step(world, q_target, dt)
    return state


def _hold_command(pose: Pose) -> ComplianceCommand:
    return ComplianceCommand.critically_damped(pose, np.diag(HOLD_GAINS))


def press_profile(script: PressScript) -> Callable[[float], float]:
    """Rest, linear ramp, hold, linear release, rest."""
    def magnitude(t: float) -> float:
        t = t - script.rest
        if t < 0:
            return 0.0
        if t < script.ramp:
            return script.magnitude * t / script.ramp
        t -= script.ramp
        if t < script.hold:
            return script.magnitude
        t -= script.hold
        if t < script.release:
            return script.magnitude * (1.0 - t / script.release)
        return 0.0
    return magnitude


def scenario_press(
    world: SimWorld,
    controller: Controller,
    script: PressScript,
    site: str,
    *,
    extra_sites: Sequence[str] = (),
    settle: float = 1.0,
    alpha: Optional[float] = None,
) -> ScenarioReport:
    """Scripted push-hold-release at ``site``; estimated against true force.

    Sites in ``extra_sites`` hold their start pose.
    """
    axis = np.asarray(script.axis, dtype=float)
    if abs(float(np.linalg.norm(axis)) - 1.0) > UNIT_TOLERANCE:
        raise NonUnitAxisError("press axis must have unit norm")
    sites = [site, *extra_sites]
    state = controller.initial_state(world.q, alpha)
    commands = {name: _hold_command(world.site_pose(world.chain.site_index(name))) for name in sites}
    state = _settle(world, controller, state, commands, settle)

    magnitude = press_profile(script)
    duration = 2 * script.rest + script.ramp + script.hold + script.release
    report = _closed_loop(
        world, controller, state, sites, duration,
        commands_at=lambda t: commands,
        push_at=lambda t: magnitude(t) * axis,
        annotate=lambda t: {"push": magnitude(t)},
    )
    trace = report.trace
    errors = force_errors(_force_frame(trace, f"{site}_f"), _force_frame(trace, TRUE_FORCE))
    report.summary = {
        "scenario": "press",
        "site": site,
        "axis": list(script.axis),
        "magnitude": script.magnitude,
        "mae_n": errors["mae"]["mean"],
        "force_errors": errors,
        "faults": int(trace["fault"].sum()),
        "ticks": int(len(trace)),
        "timing": timing_percentiles(report.durations),
    }
    return report


def _draw_keyframes(script: DrawScript, center: np.ndarray, normal: np.ndarray) -> np.ndarray:
    if script.shape == "heart":
        return heart_keyframes(center, script.size, script.keyframes, normal)
    if script.shape == "wipe":
        return wipe_keyframes(center, script.size, script.passes, script.keyframes, normal)
    tangent = plane_basis(normal)[0]
    half = 0.5 * script.size * tangent
    return line_keyframes(center - half, center + half, script.keyframes)


class _SurfacePath:
    """Densified path of one site over its surface, as latched compliance commands."""

    def __init__(self, site: str, script: DrawScript, surface: ContactSurface, start_pose: Pose,
                 config: ControllerConfig):
        self.site = site
        self.script = script
        self.normal = surface.normal
        self.orientation = start_pose.orientation
        start = start_pose.position
        planned = surface.point + script.lift * self.normal
        center = start - float((start - planned) @ self.normal) * self.normal
        path = densify(
            _draw_keyframes(script, center, self.normal), self.normal, start=start, rate_hz=script.rate_hz,
            free_speed=config.free_speed, contact_speed=config.contact_speed,
            approach_height=script.approach_height, pause=script.pause,
        )
        self.times = path["t"].to_numpy()
        self.points = path[["x", "y", "z"]].to_numpy()
        self.velocities = path[["vx", "vy", "vz"]].to_numpy()
        self.contact = path["contact"].to_numpy()
        self._row = -1
        self._command: Optional[ComplianceCommand] = None

    @property
    def end(self) -> float:
        return float(self.times[-1])

    def row_at(self, t: float) -> int:
        return max(int(np.searchsorted(self.times, t + 1e-9, side="right")) - 1, 0)

    def in_contact(self, t: float) -> int:
        return int(self.contact[self.row_at(t)])

    def command_at(self, t: float) -> ComplianceCommand:
        row = self.row_at(t)
        if row != self._row:
            script = self.script
            self._row = row
            self._command = surface_command(
                self.points[row], self.orientation, self.normal,
                k_normal=script.k_normal, k_tangential=script.k_tangential, k_rot=script.k_rot,
                force=script.force, mass=1.0, velocity=self.velocities[row], in_contact=bool(self.contact[row]),
            )
        return self._command


def _surface_of(world: SimWorld, site: str) -> Optional[ContactSurface]:
    index = world.chain.site_index(site)
    return next((surface for surface in world.surfaces if surface.site == index), None)


def _site_draw_summary(trace: pd.DataFrame, path: _SurfacePath, sites: Sequence[str], threshold: float) -> dict:
    site = path.site
    primary = site == sites[0]
    true_prefix = _true_prefix(site, sites)
    normal_column = "normal_force" if primary else f"{site}_normal_force"
    contact_column = "in_contact" if primary else f"{site}_in_contact"
    true_force = trace[[f"{true_prefix}_{axis}" for axis in FORCE_FIELDS]].to_numpy()
    trace[normal_column] = true_force @ path.normal
    stats = contact_stats(trace[normal_column], trace[contact_column], path.script.force, threshold)
    errors = force_errors(_force_frame(trace, f"{site}_f"), _force_frame(trace, true_prefix))
    if stats["contact_loss"]:
        logger.warning("Contact lost at %s on %.0f%% of the contact phase", site, 100 * stats["below_threshold"])
    return {"contact": stats, "tracking": tracking_errors(trace, site), "mae_n": errors["mae"]["mean"]}


def scenario_draw(
    world: SimWorld,
    controller: Controller,
    script: DrawScript,
    surface: ContactSurface,
    site: str,
    *,
    extra_sites: Sequence[str] = (),
    settle: float = 1.0,
    alpha: Optional[float] = None,
) -> ScenarioReport:
    """Trace a shape on ``surface`` and report tracking error and normal force.

    The path is planned ``script.lift`` above the true surface. Each of
    ``extra_sites`` traces the same shape on the world surface registered for
    it, or holds its start pose when it has none.
    """
    sites = [site, *extra_sites]
    config = controller.config
    start_poses = {name: world.site_pose(world.chain.site_index(name)) for name in sites}
    state = controller.initial_state(world.q, alpha)
    state = _settle(world, controller, state, {name: _hold_command(pose) for name, pose in start_poses.items()}, settle)

    paths = [_SurfacePath(site, script, surface, start_poses[site], config)]
    holds: Dict[str, ComplianceCommand] = {}
    for name in extra_sites:
        own = _surface_of(world, name)
        if own is None:
            holds[name] = _hold_command(start_poses[name])
        else:
            paths.append(_SurfacePath(name, script, own, start_poses[name], config))

    def commands_at(t: float) -> Dict[str, ComplianceCommand]:
        return {**holds, **{path.site: path.command_at(t) for path in paths}}

    def annotate(t: float) -> dict:
        row = {"in_contact": paths[0].in_contact(t)}
        row.update({f"{path.site}_in_contact": path.in_contact(t) for path in paths[1:]})
        return row

    report = _closed_loop(
        world, controller, state, sites, max(path.end for path in paths) + TAIL,
        commands_at=commands_at,
        push_at=lambda t: np.zeros(3),
        annotate=annotate,
    )
    trace = report.trace
    primary = _site_draw_summary(trace, paths[0], sites, config.contact_force_threshold)
    report.summary = {
        "scenario": "draw",
        "shape": script.shape,
        "site": site,
        "variant": config.variant,
        "commanded_force_n": script.force,
        **primary,
        "faults": int(trace["fault"].sum()),
        "ticks": int(len(trace)),
        "timing": timing_percentiles(report.durations),
    }
    if extra_sites:
        report.summary["sites"] = {
            path.site: _site_draw_summary(trace, path, sites, config.contact_force_threshold) for path in paths[1:]
        }
        for name in holds:
            errors = force_errors(_force_frame(trace, f"{name}_f"), _force_frame(trace, _true_prefix(name, sites)))
            report.summary["sites"][name] = {"tracking": tracking_errors(trace, name), "mae_n": errors["mae"]["mean"]}
    return report


def scenario_hybrid(
    world: SimWorld,
    controller: Controller,
    commands: Sequence[Tuple[float, HybridCommand]],
    site: str,
    *,
    extra_sites: Sequence[str] = (),
    settle: float = 1.0,
    hold: float = 1.0,
    rotational_stiffness: float = 20.0,
    alpha: Optional[float] = None,
) -> ScenarioReport:
    """Run a scripted hybrid force/velocity sequence; commands latch until replaced.

    Every site in ``extra_sites`` follows the same sequence from its own start pose.
    """
    if not commands:
        raise ScenarioError("hybrid command sequence is empty")
    sites = [site, *extra_sites]
    start_poses = {name: world.site_pose(world.chain.site_index(name)) for name in sites}
    state = controller.initial_state(world.q, alpha)
    state = _settle(world, controller, state, {name: _hold_command(pose) for name, pose in start_poses.items()}, settle)

    stamps = np.array([stamp for stamp, _ in commands])
    targets = dict(start_poses)
    clock = {"t": 0.0}

    def active(t: float) -> HybridCommand:
        row = max(int(np.searchsorted(stamps, t + 1e-9, side="right")) - 1, 0)
        return commands[row][1]

    def commands_at(t: float) -> Dict[str, ComplianceCommand]:
        cmd = active(t)
        if t > clock["t"]:
            for name in sites:
                targets[name] = integrate_velocity(targets[name], cmd.v, t - clock["t"])
            clock["t"] = t
        return {
            name: make_compliance_command(cmd, targets[name], rotational_stiffness=rotational_stiffness)
            for name in sites
        }

    report = _closed_loop(
        world, controller, state, sites, float(stamps[-1]) + hold,
        commands_at=commands_at,
        push_at=lambda t: np.zeros(3),
        annotate=lambda t: {"k_high": active(t).k_high, "k_low": active(t).k_low},
    )
    trace = report.trace

    def site_summary(name: str) -> dict:
        errors = force_errors(_force_frame(trace, f"{name}_f"), _force_frame(trace, _true_prefix(name, sites)))
        return {"tracking": tracking_errors(trace, name), "mae_n": errors["mae"]["mean"]}

    report.summary = {
        "scenario": "hybrid",
        "site": site,
        "commands": len(commands),
        **site_summary(site),
        "faults": int(trace["fault"].sum()),
        "ticks": int(len(trace)),
        "timing": timing_percentiles(report.durations),
    }
    if extra_sites:
        report.summary["sites"] = {name: site_summary(name) for name in extra_sites}
    return report


@dataclass
class Scenario:
    spec: ScenarioSpec
    chain: ChainModel
    config: ControllerConfig
    path: Path


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    spec = load_document(path, ScenarioSpec, ScenarioError)
    base = path.parent
    chain = load_chain(base / spec.chain)
    config = load_controller_config(base / spec.controller) if spec.controller else ControllerConfig()
    for site in (spec.site, *spec.sites):
        chain.site_index(site)
    for surface in spec.surfaces:
        chain.site_index(surface.site)
    if len(spec.q0) != chain.n_joints:
        raise ScenarioError(f"{path}: q0 has {len(spec.q0)} values; chain has {chain.n_joints} joints")
    if spec.draw is not None and all(surface.site != spec.site for surface in spec.surfaces):
        raise ScenarioError(f"{path}: a draw scenario needs a surface for site {spec.site!r}")
    return Scenario(spec, chain, config, path)


def build_world(scenario: Scenario, seed: int) -> SimWorld:
    spec, chain = scenario.spec, scenario.chain
    q0 = np.asarray(spec.q0, dtype=float)
    kin = chain.kinematics(q0)
    surfaces = []
    for surface in spec.surfaces:
        site = chain.site_index(surface.site)
        normal = np.asarray(surface.normal, dtype=float)
        surfaces.append(ContactSurface(
            site=site,
            point=kin.site_positions[site] + surface.offset * normal,
            normal=normal,
            stiffness=surface.stiffness,
            friction=surface.friction,
        ))
    motors = tuple(SimMotor.from_spec(params, spec.motor) for params in chain.motors)
    return SimWorld(chain, motors, tuple(surfaces), seed, q0, substeps=spec.substeps)


def run_scenario(
    scenario: Scenario,
    *,
    seed: int = 0,
    variant: Optional[str] = None,
    hybrid: Optional[Sequence[Tuple[float, HybridCommand]]] = None,
) -> ScenarioReport:
    """Build the world, pick the controller variant and run the scripted scenario."""
    spec = scenario.spec
    world = build_world(scenario, seed)
    config = scenario.config
    if variant is not None:
        config = config.model_copy(update={"variant": variant})
    elif spec.press is not None and hybrid is None and not spec.press.compliant:
        config = config.model_copy(update={"variant": "position"})
    controller = Controller(scenario.chain, config)

    if hybrid is not None:
        report = scenario_hybrid(
            world, controller, hybrid, spec.site, extra_sites=spec.sites, settle=spec.settle, alpha=spec.ema_alpha
        )
    elif spec.press is not None:
        report = scenario_press(
            world, controller, spec.press, spec.site, extra_sites=spec.sites, settle=spec.settle, alpha=spec.ema_alpha
        )
    else:
        report = scenario_draw(
            world, controller, spec.draw, _surface_of(world, spec.site), spec.site,
            extra_sites=spec.sites, settle=spec.settle, alpha=spec.ema_alpha,
        )
    report.summary = {"name": spec.name, "seed": seed, **report.summary}
    logger.info("Scenario %s finished: %d ticks, %d faults", spec.name, report.summary["ticks"], report.summary["faults"])
    return report
