"""Per-tick compliance pipeline.

telemetry -> load torque -> gravity removal -> EMA -> wrench estimate per site
-> admittance step -> IK -> joint targets.
"""
from __future__ import annotations

import logging
import queue
import threading
import time
from collections.abc import Mapping
from dataclasses import dataclass, field, replace
from functools import partial
from operator import attrgetter, itemgetter
from pathlib import Path
from typing import Callable, Dict, Iterable, Iterator, List, Literal, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import scipy.linalg as la

from ..errors import DimensionMismatchError, InputError, NonFiniteInputError, NumericalError, SchemaError
from ..schemas import ControllerConfig
from .calculations.admittance import ComplianceCommand, TaskState, critical_damping, step
from .calculations.metrics import timing_percentiles
from .calculations.motor_model import (
    TorqueEstimatorState,
    ema_step,
    external_joint_torque,
    joint_load_torques,
)
from .calculations.wrench import Wrench, estimate
from .chain_model import ChainModel, Kinematics
from .diff_ik import solve
from .documents import load_document
from .spatial import Pose

logger = logging.getLogger(__name__)

TELEMETRY_HEADER = "# complyctl telemetry v1"
TRACE_HEADER = "# complyctl trace v1"
WRENCH_TRACE_HEADER = "# complyctl wrench v1"
POSE_FIELDS = ("x", "y", "z", "rx", "ry", "rz")
WRENCH_FIELDS = ("fx", "fy", "fz", "tx", "ty", "tz")
TIME_EPS = 1e-9
# closes a queue-fed telemetry or command source
STREAM_END = None
_EMPTY = object()

Commands = Mapping[str, ComplianceCommand]
SinkOverflow = Literal["block", "drop"]


@dataclass(frozen=True, eq=False)
class Telemetry:
    t: float
    q: np.ndarray
    qdot: np.ndarray
    pwm: Optional[np.ndarray] = None
    current: Optional[np.ndarray] = None

    def check(self, n_joints: int) -> None:
        for label in ("q", "qdot", "pwm", "current"):
            values = getattr(self, label)
            if values is None:
                continue
            if values.shape != (n_joints,):
                raise DimensionMismatchError(f"telemetry {label} has shape {values.shape}; chain has {n_joints} joints")
            if not np.all(np.isfinite(values)):
                raise NonFiniteInputError(f"telemetry {label} is not finite at t={self.t}")
        if self.pwm is None and self.current is None:
            raise DimensionMismatchError("telemetry carries neither pwm nor current")
        if not np.isfinite(self.t):
            raise NonFiniteInputError("telemetry time is not finite")


@dataclass(frozen=True, eq=False)
class SiteRecord:
    site: str
    x_ref: Pose
    x_des: Pose
    f_ext: Wrench
    f_cmd: Wrench
    kp: np.ndarray
    gram_condition: float


@dataclass(frozen=True, eq=False)
class TraceRecord:
    t: float
    q: np.ndarray
    q_target: np.ndarray
    sites: Tuple[SiteRecord, ...] = ()
    fault: bool = False
    reason: str = ""
    ik_residual: float = 0.0

    @property
    def gram_condition(self) -> float:
        return max((site.gram_condition for site in self.sites), default=float("nan"))

    def as_row(self) -> Dict[str, object]:
        row: Dict[str, object] = {
            "t": self.t,
            "fault": int(self.fault),
            "reason": self.reason,
            "gram_condition": self.gram_condition,
            "ik_residual": self.ik_residual,
        }
        row.update({f"q{i}": value for i, value in enumerate(self.q)})
        row.update({f"q_target{i}": value for i, value in enumerate(self.q_target)})
        for site in self.sites:
            row.update(pose_columns(f"{site.site}_xref", site.x_ref))
            row.update(pose_columns(f"{site.site}_xdes", site.x_des))
            row.update(wrench_columns(f"{site.site}_f", site.f_ext))
            row.update(wrench_columns(f"{site.site}_fcmd", site.f_cmd))
            row.update({f"{site.site}_kp_{name}": value for name, value in zip(POSE_FIELDS, np.diag(site.kp))})
        return row


def pose_columns(prefix: str, pose: Pose) -> Dict[str, float]:
    return {f"{prefix}_{name}": float(value) for name, value in zip(POSE_FIELDS, pose.as_vector())}


def wrench_columns(prefix: str, wrench: Wrench) -> Dict[str, float]:
    return {f"{prefix}_{name}": float(value) for name, value in zip(WRENCH_FIELDS, wrench.as_vector())}


@dataclass
class ControllerState:
    """Owned by one control loop; ``run_step`` returns a new instance each tick."""

    torque: TorqueEstimatorState
    q_target: np.ndarray
    tasks: Dict[str, TaskState] = field(default_factory=dict)
    ticks: int = 0
    faults: int = 0


def load_controller_config(path: str | Path) -> ControllerConfig:
    return load_document(path, ControllerConfig, SchemaError)


class Controller:
    def __init__(self, chain: ChainModel, config: ControllerConfig):
        self.chain = chain
        self.config = config
        for spec in config.sites:
            chain.site_index(spec.site)

    def initial_state(self, q, alpha: Optional[float] = None) -> ControllerState:
        q = self.chain.check_q(q)
        if not np.all(np.isfinite(q)):
            raise NonFiniteInputError("initial joint positions are not finite")
        q = self.chain.clamp(q)
        alpha = self.config.ema_alpha if alpha is None else alpha
        return ControllerState(TorqueEstimatorState.initial(self.chain.n_joints, alpha), q.copy())

    def fallback_target(self, q) -> np.ndarray:
        """Target reported before any usable sample: finite readings clamped, the rest at clamped zero."""
        q = np.asarray(q, dtype=float)
        if q.shape != (self.chain.n_joints,):
            q = np.zeros(self.chain.n_joints)
        return self.chain.clamp(np.where(np.isfinite(q), q, 0.0))

    def default_commands(self, q) -> Dict[str, ComplianceCommand]:
        """Hold the current site poses with the per-site gains of the config."""
        kin = self.chain.kinematics(self.chain.check_q(q))
        poses = self.chain.site_poses(kin)
        commands = {}
        for spec in self.config.sites:
            kp = np.diag(spec.kp)
            kd = np.diag(spec.kd) if spec.kd is not None else critical_damping(kp) * np.sqrt(spec.mass)
            commands[spec.site] = ComplianceCommand(
                x_des=poses[self.chain.site_index(spec.site)],
                xdot_des=np.zeros(6),
                kp=kp,
                kd=kd,
                f_cmd=Wrench.from_vector(spec.f_cmd),
                mass=spec.mass,
            )
        return commands

    def external_torques(self, telemetry: Telemetry, torque: TorqueEstimatorState) -> Tuple[np.ndarray, Kinematics]:
        """Filtered external joint torque; advances ``torque`` in place."""
        chain = self.chain
        telemetry.check(chain.n_joints)
        tau_load = joint_load_torques(
            chain.motors, chain.gear_ratios, telemetry.qdot, torque,
            pwm=telemetry.pwm, current=telemetry.current,
        )
        kin = chain.kinematics(telemetry.q)
        tau_raw = external_joint_torque(tau_load, chain.holding_torques(kin), chain.gear_ratios)
        return ema_step(torque, tau_raw), kin

    def estimate_site(self, kin: Kinematics, tau_ext: np.ndarray, site: str):
        jp, jr = self.chain.site_jacobian(kin, self.chain.site_index(site))
        result = estimate(self.config.estimator, jp, jr, tau_ext)
        if not result.wrench.is_finite():
            raise NonFiniteInputError(f"wrench estimate at {site!r} is not finite")
        return result

    def run_step(
        self,
        telemetry: Telemetry,
        commands: Commands,
        state: ControllerState,
    ) -> Tuple[np.ndarray, TraceRecord, ControllerState]:
        try:
            return self._step(telemetry, commands, state)
        except (InputError, NumericalError, la.LinAlgError) as exc:
            logger.warning("Tick at t=%s faulted, holding target: %s", telemetry.t, exc)
            held = state.q_target.copy()
            record = TraceRecord(
                t=float(telemetry.t),
                q=np.asarray(telemetry.q, dtype=float).copy(),
                q_target=held,
                fault=True,
                reason=f"{type(exc).__name__}: {exc}",
            )
            return held, record, replace(state, ticks=state.ticks + 1, faults=state.faults + 1)

    def _step(self, telemetry: Telemetry, commands: Commands, state: ControllerState):
        config = self.config
        torque = state.torque.copy()
        tau_ext, kin = self.external_torques(telemetry, torque)

        tasks = dict(state.tasks)
        targets: Dict[int, Pose] = {}
        sites: List[SiteRecord] = []
        commanded_kin: Optional[Kinematics] = None
        for name in sorted(commands):
            cmd = commands[name]
            index = self.chain.site_index(name)
            result = self.estimate_site(kin, tau_ext, name)
            if name not in tasks:
                if commanded_kin is None:
                    commanded_kin = self.chain.kinematics(state.q_target)
                pose = Pose.from_matrix(commanded_kin.site_positions[index], commanded_kin.site_rotations[index])
                tasks[name] = TaskState.at_rest(pose)

            if config.variant == "position":
                task = TaskState(cmd.x_des, cmd.xdot_des.copy())
            else:
                f_ext = result.wrench if config.variant == "full" else Wrench.zero()
                in_contact = float(np.linalg.norm(result.wrench.force)) > config.contact_force_threshold
                task = step(
                    tasks[name], cmd, f_ext, config.dt,
                    speed_limit=config.contact_speed if in_contact else config.free_speed,
                    angular_limit=config.angular_speed,
                    stability_limit=config.stability_limit,
                )
            if not task.x_ref.is_finite():
                raise NonFiniteInputError(f"reference pose at {name!r} is not finite")
            tasks[name] = task
            targets[index] = task.x_ref
            sites.append(SiteRecord(name, task.x_ref, cmd.x_des, result.wrench, cmd.f_cmd, cmd.kp, result.gram_condition))

        q_target, report = solve(self.chain, state.q_target, targets, config.ik)
        record = TraceRecord(
            t=float(telemetry.t),
            q=np.asarray(telemetry.q, dtype=float).copy(),
            q_target=q_target.copy(),
            sites=tuple(sites),
            ik_residual=report.residual,
        )
        new_state = ControllerState(torque, q_target, tasks, state.ticks + 1, state.faults)
        logger.debug("t=%.4f ik_iterations=%d residual=%.3g", telemetry.t, report.iterations, report.residual)
        return q_target, record, new_state


@dataclass(frozen=True)
class StreamSummary:
    ticks: int
    faults: int
    stale: int
    timing: Dict[str, Optional[float]]
    dropped: int = 0

    def as_dict(self) -> dict:
        return {"ticks": self.ticks, "faults": self.faults, "stale": self.stale, "dropped": self.dropped, **self.timing}


def _poll(source: queue.Queue):
    try:
        return source.get_nowait()
    except queue.Empty:
        return _EMPTY


class _Latch:
    """Latest item of a time-ordered source at or before a given time.

    ``source`` is an iterable or a single-producer ``queue.Queue`` closed with
    ``STREAM_END``. A blocking queue paces the loop; a polled one never waits.
    """

    def __init__(
        self,
        source,
        label: str,
        stamp: Callable[[object], float],
        value: Callable[[object], object],
        *,
        blocking: bool = True,
    ):
        self._label = label
        self._stamp = stamp
        self._value = value
        self._closed = False
        self._pending = None
        if isinstance(source, queue.Queue):
            self._pull = source.get if blocking else partial(_poll, source)
        else:
            self._pull = partial(next, iter(source), STREAM_END)
        self.time: Optional[float] = None
        self.value = None
        self._fetch()

    def _fetch(self) -> None:
        if self._closed:
            return
        item = self._pull()
        if item is STREAM_END:
            self._closed = True
        elif item is not _EMPTY:
            self._pending = item

    @property
    def exhausted(self) -> bool:
        return self._closed and self._pending is None

    @property
    def next_time(self) -> Optional[float]:
        return None if self._pending is None else self._stamp(self._pending)

    def advance(self, t: float) -> bool:
        fresh = False
        if self._pending is None:
            self._fetch()
        while self._pending is not None and self._stamp(self._pending) <= t + TIME_EPS:
            item, self._pending = self._pending, None
            stamp = self._stamp(item)
            if self.time is not None and stamp < self.time:
                raise SchemaError(f"{self._label} time went backwards at t={stamp}")
            self.time, self.value = stamp, self._value(item)
            self._fetch()
            fresh = True
        return fresh


class _SinkWorker:
    """Hands trace records to ``sink`` on its own thread through a bounded queue."""

    def __init__(self, sink: Callable[[TraceRecord], None], maxsize: int, overflow: SinkOverflow):
        if overflow not in ("block", "drop"):
            raise ValueError(f"unknown sink overflow policy {overflow!r}")
        self._sink = sink
        self._overflow = overflow
        self._records: queue.Queue = queue.Queue(maxsize=maxsize)
        self.dropped = 0
        self.error: Optional[BaseException] = None
        self._thread = threading.Thread(target=self._drain, name="complyctl-trace-sink", daemon=True)
        self._thread.start()

    def put(self, record: TraceRecord) -> None:
        if self._overflow == "block":
            self._records.put(record)
            return
        try:
            self._records.put_nowait(record)
        except queue.Full:
            self.dropped += 1

    def close(self) -> None:
        self._records.put(STREAM_END)
        self._thread.join()
        if self.dropped:
            logger.warning("Trace sink fell behind; %d records dropped", self.dropped)
        if self.error is not None:
            raise self.error

    def _drain(self) -> None:
        # keeps consuming after a failure so a blocked producer is released
        for record in iter(self._records.get, STREAM_END):
            if self.error is not None:
                continue
            try:
                self._sink(record)
            except Exception as exc:
                logger.error("Trace sink failed: %s", exc)
                self.error = exc


def run_stream(
    controller: Controller,
    telemetry: Iterable[Telemetry] | queue.Queue,
    commands: Commands | Iterable[Tuple[float, Commands]] | queue.Queue | None,
    sink: Callable[[TraceRecord], None],
    state: Optional[ControllerState] = None,
    *,
    sink_queue: int = 256,
    overflow: SinkOverflow = "block",
) -> StreamSummary:
    """Tick at ``dt`` until the telemetry source is exhausted.

    Telemetry and commands are zero-order held; telemetry older than
    ``staleness_ticks * dt`` faults the tick and holds the target. A telemetry
    queue is read blocking and paces the loop, a command queue is polled.
    Records reach ``sink`` on a separate thread; when its bounded queue is
    full the loop either waits (``"block"``) or counts a drop (``"drop"``).
    Until a sample passes the telemetry checks the loop emits fault records
    and commands nothing beyond ``Controller.fallback_target``.
    """
    config = controller.config
    samples = _Latch(telemetry, "telemetry", attrgetter("t"), lambda record: record)
    if samples.exhausted:
        return StreamSummary(0, 0, 0, timing_percentiles([]))
    if commands is None or isinstance(commands, Mapping):
        commands = [(-np.inf, commands)] if commands is not None else []
    latched = _Latch(commands, "command", itemgetter(0), itemgetter(1), blocking=False)

    worker = _SinkWorker(sink, sink_queue, overflow)
    t0 = samples.next_time
    durations: List[float] = []
    stale = 0
    faults = 0
    tick = 0
    try:
        while True:
            t = t0 + tick * config.dt
            fresh = samples.advance(t)
            if not fresh and samples.exhausted and t - samples.time >= config.dt - TIME_EPS:
                break
            latched.advance(t)
            current: Telemetry = samples.value
            tick += 1

            if state is None:
                try:
                    current.check(controller.chain.n_joints)
                    state = controller.initial_state(current.q)
                except InputError as exc:
                    faults += 1
                    logger.warning("Cannot start from telemetry at t=%.4f: %s", t, exc)
                    worker.put(TraceRecord(
                        t, np.asarray(current.q, dtype=float).copy(), controller.fallback_target(current.q),
                        fault=True, reason=f"{type(exc).__name__}: {exc}",
                    ))
                    continue
            if latched.value is None:
                latched.value = controller.default_commands(state.q_target)

            if t - samples.time > config.staleness_ticks * config.dt + TIME_EPS:
                stale += 1
                faults += 1
                logger.warning("Telemetry stale at t=%.4f (last sample %.4f); holding target", t, samples.time)
                record = TraceRecord(t, current.q.copy(), state.q_target.copy(), fault=True, reason="stale telemetry")
                state = replace(state, ticks=state.ticks + 1, faults=state.faults + 1)
            else:
                started = time.perf_counter()
                _, record, state = controller.run_step(replace(current, t=t), latched.value, state)
                durations.append(time.perf_counter() - started)
                faults += int(record.fault)
            worker.put(record)
    finally:
        worker.close()

    summary = StreamSummary(tick, faults, stale, timing_percentiles(durations), worker.dropped)
    logger.info("Stream finished: %d ticks, %d faults, %d dropped", summary.ticks, summary.faults, summary.dropped)
    return summary


def _read_versioned_csv(path: Path, header: str) -> pd.DataFrame:
    try:
        with path.open(encoding="utf-8") as handle:
            first = handle.readline().strip()
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc}") from exc
    if not first:
        raise SchemaError(f"{path}:1: empty file")
    if first != header:
        raise SchemaError(f"{path}:1: expected version line {header!r}, got {first!r}")
    try:
        return pd.read_csv(path, skiprows=1)
    except pd.errors.EmptyDataError as exc:
        raise SchemaError(f"{path}:2: missing column header") from exc
    except pd.errors.ParserError as exc:
        raise SchemaError(f"{path}: {exc}") from exc


def _write_versioned_csv(path: str | Path, header: str, frame: pd.DataFrame) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as handle:
        handle.write(header + "\n")
        frame.to_csv(handle, index=False, float_format="%.17g")
    return path


def _indexed(columns: Sequence[str], prefix: str) -> List[str]:
    found = []
    while f"{prefix}{len(found)}" in columns:
        found.append(f"{prefix}{len(found)}")
    return found


def read_telemetry(path: str | Path) -> pd.DataFrame:
    """Load ``t,q0..,qdot0..,pwm0..`` (and/or ``cur0..``) telemetry; extra columns are kept."""
    path = Path(path)
    frame = _read_versioned_csv(path, TELEMETRY_HEADER)
    columns = list(frame.columns)
    if "t" not in columns:
        raise SchemaError(f"{path}:2: telemetry needs a 't' column")
    n = len(_indexed(columns, "q"))
    if n == 0 or len(_indexed(columns, "qdot")) != n:
        raise SchemaError(f"{path}:2: telemetry needs matching q0.. and qdot0.. columns")
    for prefix in ("pwm", "cur"):
        count = len(_indexed(columns, prefix))
        if count not in (0, n):
            raise SchemaError(f"{path}:2: expected {n} {prefix} columns, found {count}")
    if not _indexed(columns, "pwm") and not _indexed(columns, "cur"):
        raise SchemaError(f"{path}:2: telemetry needs pwm0.. or cur0.. columns")
    numeric = frame.apply(pd.to_numeric, errors="coerce")
    bad = numeric.isna() & frame.notna()
    if bad.to_numpy().any():
        row, col = np.argwhere(bad.to_numpy())[0]
        raise SchemaError(f"{path}:{row + 3}: column {columns[col]!r} is not a number")
    return numeric


def telemetry_records(frame: pd.DataFrame, n_joints: int) -> Iterator[Telemetry]:
    columns = list(frame.columns)
    n = len(_indexed(columns, "q"))
    if n != n_joints:
        raise DimensionMismatchError(f"telemetry has {n} joints; chain has {n_joints}")
    q = frame[_indexed(columns, "q")].to_numpy(dtype=float)
    qdot = frame[_indexed(columns, "qdot")].to_numpy(dtype=float)
    pwm_cols = _indexed(columns, "pwm")
    cur_cols = _indexed(columns, "cur")
    pwm = frame[pwm_cols].to_numpy(dtype=float) if pwm_cols else None
    cur = frame[cur_cols].to_numpy(dtype=float) if cur_cols else None
    for index, t in enumerate(frame["t"].to_numpy(dtype=float)):
        yield Telemetry(
            t=float(t),
            q=q[index],
            qdot=qdot[index],
            pwm=None if pwm is None else pwm[index],
            current=None if cur is None else cur[index],
        )


def telemetry_frame(records: Sequence[Telemetry]) -> pd.DataFrame:
    rows = []
    for record in records:
        row = {"t": record.t}
        row.update({f"q{i}": v for i, v in enumerate(record.q)})
        row.update({f"qdot{i}": v for i, v in enumerate(record.qdot)})
        if record.pwm is not None:
            row.update({f"pwm{i}": v for i, v in enumerate(record.pwm)})
        if record.current is not None:
            row.update({f"cur{i}": v for i, v in enumerate(record.current)})
        rows.append(row)
    return pd.DataFrame(rows)


def write_telemetry(path: str | Path, frame: pd.DataFrame) -> Path:
    return _write_versioned_csv(path, TELEMETRY_HEADER, frame)


def write_trace(path: str | Path, frame: pd.DataFrame) -> Path:
    return _write_versioned_csv(path, TRACE_HEADER, frame)


def read_trace(path: str | Path) -> pd.DataFrame:
    return _read_versioned_csv(Path(path), TRACE_HEADER)


def estimate_wrench_trace(controller: Controller, frame: pd.DataFrame, site: str) -> pd.DataFrame:
    """Offline estimation half of the pipeline: one wrench row per telemetry row."""
    chain = controller.chain
    controller.chain.site_index(site)
    torque = TorqueEstimatorState.initial(chain.n_joints, controller.config.ema_alpha)
    rows = []
    for record in telemetry_records(frame, chain.n_joints):
        tau_ext, kin = controller.external_torques(record, torque)
        result = controller.estimate_site(kin, tau_ext, site)
        row = {"t": record.t}
        row.update({name: float(v) for name, v in zip(WRENCH_FIELDS, result.wrench.as_vector())})
        row["residual"] = result.residual
        row["gram_condition"] = result.gram_condition
        rows.append(row)
    return pd.DataFrame(rows, columns=["t", *WRENCH_FIELDS, "residual", "gram_condition"])


def write_wrench_trace(path: str | Path, frame: pd.DataFrame) -> Path:
    return _write_versioned_csv(path, WRENCH_TRACE_HEADER, frame)
