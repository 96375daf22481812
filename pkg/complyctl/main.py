from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from .core.settings import LOG_FORMAT, get_settings
from .errors import InputError, NumericalError
from .schemas import ControllerConfig, MotorParams
from .services.calculations.calibration import calibrate_from_frame, read_sweep, write_motor_fragment
from .services.calculations.hybrid import read_hybrid_commands
from .services.calculations.metrics import mean_absolute_error
from .services.chain_model import load_chain
from .services.controller import (
    Controller,
    estimate_wrench_trace,
    load_controller_config,
    read_telemetry,
    write_telemetry,
    write_trace,
    write_wrench_trace,
)
from .services.plots import export_plots
from .services.sim_harness import load_scenario, run_scenario

logger = logging.getLogger(__name__)

VARIANTS = {"full": "full", "no-fext": "no-fext", "position": "position", "none": "position"}


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _emit(summary: dict) -> None:
    print(json.dumps(summary, indent=2, sort_keys=True))


def _base_motor(args: argparse.Namespace) -> Optional[MotorParams]:
    if args.chain is None:
        return None
    chain = load_chain(args.chain)
    motors = chain.description.motors
    name = args.motor or next(iter(motors))
    if name not in motors:
        raise InputError(f"motor {name!r} not found in {args.chain}")
    return motors[name]


def cmd_calibrate(args: argparse.Namespace) -> int:
    base = _base_motor(args)
    vbus = args.vbus if args.vbus is not None else (base.vbus if base else None)
    kv = args.kv if args.kv is not None else (base.kv if base else None)
    if vbus is None and args.kind in ("kv", "rw"):
        raise InputError("--vbus is required (or --chain with a motor entry)")
    eta = args.eta
    frame = read_sweep(args.sweep)
    report = calibrate_from_frame(
        args.kind, frame, vbus=vbus or 0.0, kv=kv, eta=eta, kt=args.kt, eps_vel=args.eps_vel
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    entry = write_motor_fragment(out, args.motor or "motor", report, base)
    summary = {"kind": args.kind, "out": str(out), "fit": report.as_dict(), "motor": entry, "notes": list(report.notes)}
    logger.info("Calibrated %s from %s: %s", args.kind, args.sweep, report.values)
    _emit(summary)
    return 0


def cmd_estimate(args: argparse.Namespace) -> int:
    chain = load_chain(args.chain)
    config = load_controller_config(args.config) if args.config else ControllerConfig()
    frame = read_telemetry(args.telemetry)
    site = args.site or chain.site_names[0]
    wrenches = estimate_wrench_trace(Controller(chain, config), frame, site)
    out = Path(args.out) if args.out else get_settings().output_dir / "wrench.csv"
    write_wrench_trace(out, wrenches)
    summary = {"rows": int(len(wrenches)), "site": site, "out": str(out)}
    true_columns = ["f_true_fx", "f_true_fy", "f_true_fz"]
    if all(column in frame for column in true_columns):
        truth = frame[true_columns].rename(columns=lambda name: name.removeprefix("f_true_"))
        summary["mae_n"] = round(mean_absolute_error(wrenches, truth), 6)
    logger.info("Estimated %d wrench rows for site %s", summary["rows"], site)
    _emit(summary)
    return 0


def cmd_sim(args: argparse.Namespace) -> int:
    settings = get_settings()
    scenario = load_scenario(args.scenario)
    if args.chain:
        chain = load_chain(args.chain)
        chain.site_index(scenario.spec.site)
        scenario.chain = chain
    if args.config:
        scenario.config = load_controller_config(args.config)
    seed = args.seed
    if seed is None:
        seed = scenario.spec.seed if scenario.spec.seed is not None else settings.default_seed
    hybrid = read_hybrid_commands(args.commands) if args.commands else None
    variant = VARIANTS[args.controller] if args.controller else None

    report = run_scenario(scenario, seed=seed, variant=variant, hybrid=hybrid)
    out_dir = Path(args.out) if args.out else settings.output_dir / scenario.spec.name
    write_trace(out_dir / "trace.csv", report.trace)
    write_telemetry(out_dir / "telemetry.csv", report.telemetry)
    if args.plot:
        report.summary["plots"] = [str(path) for path in export_plots(report.trace, scenario.spec.site, out_dir)]
    (out_dir / "summary.json").write_text(json.dumps(report.summary, indent=2, sort_keys=True), encoding="utf-8")
    _emit(report.summary)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="complyctl", description="Sensorless compliance control toolkit")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    calibrate = sub.add_parser("calibrate", help="fit motor constants from a sweep file")
    calibrate.add_argument("kind", choices=["kv", "rw", "kt"])
    calibrate.add_argument("sweep", help="sweep CSV: t,pwm,qdot,current,torque")
    calibrate.add_argument("--out", required=True, help="motor parameter fragment to write")
    calibrate.add_argument("--chain", help="chain file supplying the base motor entry")
    calibrate.add_argument("--motor", help="motor name in the chain file / fragment")
    calibrate.add_argument("--vbus", type=float)
    calibrate.add_argument("--kv", type=float, help="known kv for the rw fit")
    calibrate.add_argument("--eta", type=float, help="manufacturer efficiency for single-branch kt fits")
    calibrate.add_argument("--kt", type=float, help="manufacturer kt for single-branch fits")
    calibrate.add_argument("--eps-vel", type=float, default=0.0, dest="eps_vel")
    calibrate.set_defaults(func=cmd_calibrate)

    estimate = sub.add_parser("estimate", help="replay telemetry through the wrench estimator")
    estimate.add_argument("telemetry")
    estimate.add_argument("--chain", required=True)
    estimate.add_argument("--config", help="controller config (estimator and EMA settings)")
    estimate.add_argument("--site")
    estimate.add_argument("--out")
    estimate.set_defaults(func=cmd_estimate)

    sim = sub.add_parser("sim", help="run a closed-loop scenario in the simulator")
    sim.add_argument("scenario")
    sim.add_argument("--seed", type=int)
    sim.add_argument("--out")
    sim.add_argument("--plot", action="store_true", help="write SVG force and trajectory plots")
    sim.add_argument("--controller", choices=sorted(VARIANTS))
    sim.add_argument("--chain", help="override the scenario's chain file")
    sim.add_argument("--config", help="override the scenario's controller config")
    sim.add_argument("--commands", help="hybrid command CSV: t,vx,vy,vz,k_low,k_high,fx,fy,fz")
    sim.set_defaults(func=cmd_sim)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    settings = get_settings()
    logging.basicConfig(level=settings.log_level, format=LOG_FORMAT)
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        logger.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        logger.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception:
        logger.exception("Unexpected failure")
        return 1


if __name__ == "__main__":
    sys.exit(main())
