"""Command-line front end.

Subcommands: ``validate`` (parameter and structure checks), ``solve``
(offline setpoint for a given total demand), ``simulate`` (closed-loop run
with CSV/JSON outputs), ``verify`` (structural certificates), and ``trace``
(workload-trace generation). Exit codes: 0 success, 1 domain violation,
2 unreadable or malformed input, 3 runtime divergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigDocument, load_config
from .controller import ControllerGains
from .errors import (
    ActiveSetError,
    CapacityError,
    ConfigError,
    DegenerateParamsError,
    DivergenceError,
    HeterogeneousRacksError,
    NotHurwitzError,
)
from .model import validate_params
from .optimizer import check_kkt, solve_reduced
from .simulator import run as run_simulation
from .steady_state import compute_constants, verify_a_hurwitz, verify_c3_structure, verify_identities

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_INPUT = 2
EXIT_DIVERGED = 3

_LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}


@dataclass
class RunReport:
    """Outcome of one CLI invocation."""

    command: str
    exit_code: int
    violations: list[str] = field(default_factory=list)
    outputs: list[str] = field(default_factory=list)
    metrics: dict = field(default_factory=dict)


def _print_report(report: RunReport) -> None:
    for line in report.violations:
        print(f"FAIL - {line}")
    for path in report.outputs:
        print(f"wrote {path}")
    status = "ok" if report.exit_code == EXIT_OK else f"exit {report.exit_code}"
    print(f"{report.command}: {status}")


def _load(config_path, report: RunReport) -> ConfigDocument | None:
    try:
        return load_config(config_path)
    except ConfigError as exc:
        report.violations.append(str(exc))
        report.exit_code = EXIT_INPUT
        return None


def _check_params(doc: ConfigDocument, report: RunReport) -> bool:
    violations = validate_params(doc.params)
    if violations:
        report.violations.extend(violations)
        report.exit_code = EXIT_DOMAIN
        return False
    return True


def cmd_validate(config_path) -> RunReport:
    """Parameter invariants, stability structure, and constant identities."""
    report = RunReport(command="validate", exit_code=EXIT_OK)
    doc = _load(config_path, report)
    if doc is None:
        return report
    ok = _check_params(doc, report)
    print(f"parameters: {'ok' if ok else 'violations found'}")
    if not ok:
        return report
    hurwitz = verify_a_hurwitz(doc.params)
    print(
        f"thermal coupling stability: {'ok' if hurwitz.passed else 'FAIL'} "
        f"(dominance margin {hurwitz.dominance_margin:.3e}, max diag {hurwitz.max_diagonal:.3e})"
    )
    if not hurwitz.passed:
        report.violations.append("thermal coupling matrix failed the stability checks")
        report.exit_code = EXIT_DOMAIN
    try:
        identities = verify_identities(compute_constants(doc.params))
    except DegenerateParamsError as exc:
        report.violations.append(str(exc))
        report.exit_code = EXIT_DOMAIN
        return report
    print(f"steady-state identities: {'ok' if identities.passed else 'FAIL'}")
    if not identities.passed:
        report.violations.append("steady-state constant identities violated")
        report.exit_code = EXIT_DOMAIN
    report.metrics = {"hurwitz": hurwitz.to_dict(), "identities": identities.to_dict()}
    return report


def cmd_solve(config_path, dstar: float, out_path) -> RunReport:
    """Offline optimal setpoint for a given total demand, written as JSON."""
    report = RunReport(command="solve", exit_code=EXIT_OK)
    doc = _load(config_path, report)
    if doc is None or not _check_params(doc, report):
        return report
    try:
        constants = compute_constants(doc.params)
        setpoint = solve_reduced(doc.params, constants, dstar)
    except (HeterogeneousRacksError, CapacityError, DegenerateParamsError, ActiveSetError) as exc:
        report.violations.append(str(exc))
        report.exit_code = EXIT_DOMAIN
        return report
    kkt = check_kkt(setpoint, constants, doc.params, dstar)
    payload = {"dstar": dstar, **setpoint.to_dict(), "kkt": kkt.to_dict()}
    out_path = Path(out_path)
    out_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    report.outputs.append(str(out_path))
    report.metrics = payload
    print(
        f"dstar {dstar:g}: tsup_bar {setpoint.tsup_bar:.4f} degC, cost {setpoint.cost:.1f} W, "
        f"{len(setpoint.active_set)} rack(s) at capacity"
    )
    return report


def cmd_simulate(config_path, out_csv, seed: int | None = None) -> RunReport:
    """Closed-loop simulation; writes the sample CSV and a metrics sidecar."""
    report = RunReport(command="simulate", exit_code=EXIT_OK)
    doc = _load(config_path, report)
    if doc is None or not _check_params(doc, report):
        return report
    out_csv = Path(out_csv)
    try:
        trace = doc.build_trace(seed=seed)
        record = run_simulation(doc.params, trace, doc.build_sim_config())
    except (HeterogeneousRacksError, CapacityError, DegenerateParamsError, ActiveSetError) as exc:
        report.violations.append(str(exc))
        report.exit_code = EXIT_DOMAIN
        return report
    except DivergenceError as exc:
        report.violations.append(f"simulation diverged at t = {exc.time:g} s")
        if exc.last_state is not None:
            state_dump = {
                "time_s": exc.last_state.time,
                "tout": [float(x) for x in exc.last_state.tout],
                "tsup": float(exc.last_state.tsup),
                "d": [float(x) for x in exc.last_state.d],
            }
            print("last finite state:")
            print(json.dumps(state_dump, indent=2))
        report.exit_code = EXIT_DIVERGED
        return report
    record.to_csv(out_csv)
    report.outputs.append(str(out_csv))
    metrics = {"seed": trace.seed, **record.metrics_dict()}
    sidecar = out_csv.with_suffix(".metrics.json")
    sidecar.write_text(json.dumps(metrics, indent=2, sort_keys=True) + "\n")
    report.outputs.append(str(sidecar))
    report.metrics = metrics
    conv = metrics["intervals_converged"]
    total = metrics["interval_count"]
    print(
        f"simulated {record.time[-1]:g} s, {record.n_samples} samples; "
        f"{conv}/{total} intervals converged; mean cost {metrics['mean_cost_w']:.1f} W"
    )
    return report


def cmd_verify(config_path) -> RunReport:
    """Run the executable structural certificates and print a pass/fail table."""
    report = RunReport(command="verify", exit_code=EXIT_OK)
    doc = _load(config_path, report)
    if doc is None or not _check_params(doc, report):
        return report
    p = doc.params
    rows: list[tuple[str, bool, str]] = []
    hurwitz = verify_a_hurwitz(p)
    eig_txt = "n/a" if hurwitz.max_eig_real is None else f"{hurwitz.max_eig_real:.3e}"
    rows.append(
        (
            "thermal coupling Hurwitz",
            hurwitz.passed,
            f"margin {hurwitz.dominance_margin:.3e}, max Re(eig) {eig_txt}",
        )
    )
    try:
        constants = compute_constants(p)
    except DegenerateParamsError as exc:
        report.violations.append(str(exc))
        report.exit_code = EXIT_DOMAIN
        return report
    identities = verify_identities(constants)
    rows.append(
        (
            "steady-state identities",
            identities.passed,
            f"max residual {max(identities.c1_sum_residual, identities.c3_column_sum_residual, identities.c3_row_sum_residual, identities.c4_sum_residual):.3e}",
        )
    )
    c3rep = verify_c3_structure(constants)
    c3_ok = c3rep.passed or not c3rep.within_proved_regime
    rows.append(("workload sensitivity signs", c3_ok, c3rep.note))
    try:
        gains = ControllerGains.from_params(p)
        z_resid = float(np.abs(gains.a.T @ gains.z + gains.z @ gains.a + 2.0 * np.eye(p.n)).max())
        rows.append(("Lyapunov equation", z_resid < 1e-8, f"residual {z_resid:.3e}"))
    except (NotHurwitzError, ValueError) as exc:
        rows.append(("Lyapunov equation", False, str(exc)))
    width = max(len(name) for name, _, _ in rows)
    for name, ok, detail in rows:
        print(f"{name.ljust(width)}  {'pass' if ok else 'FAIL'}  {detail}")
        if not ok:
            report.violations.append(f"{name}: {detail}")
    if report.violations:
        report.exit_code = EXIT_DOMAIN
    report.metrics = {
        "hurwitz": hurwitz.to_dict(),
        "identities": identities.to_dict(),
        "c3_structure": c3rep.to_dict(),
    }
    return report


def cmd_trace(config_path, out_csv, seed: int | None = None) -> RunReport:
    """Generate the workload trace and write it as (time_s, dstar) CSV."""
    report = RunReport(command="trace", exit_code=EXIT_OK)
    doc = _load(config_path, report)
    if doc is None or not _check_params(doc, report):
        return report
    try:
        trace = doc.build_trace(seed=seed)
    except CapacityError as exc:
        report.violations.append(str(exc))
        report.exit_code = EXIT_DOMAIN
        return report
    out_csv = Path(out_csv)
    with open(out_csv, "w", newline="") as fh:
        fh.write("time_s,dstar\n")
        for start, dstar in trace.intervals:
            fh.write(f"{format(start, '.9g')},{format(dstar, '.9g')}\n")
    report.outputs.append(str(out_csv))
    report.metrics = {"intervals": len(trace.intervals), "seed": trace.seed}
    print(f"trace with {len(trace.intervals)} intervals (seed {trace.seed})")
    return report


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="thermoptic",
        description="Thermal-aware data-center energy optimization toolkit",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(sp):
        sp.add_argument("--config", required=True, help="path to a JSON configuration document")

    sp = sub.add_parser("validate", help="check parameter invariants and structure")
    add_common(sp)

    sp = sub.add_parser("solve", help="compute the optimal setpoint for a total demand")
    add_common(sp)
    sp.add_argument("--dstar", required=True, type=float, help="total demand in CPU units")
    sp.add_argument("--out", default="setpoint.json", help="output JSON path")

    sp = sub.add_parser("simulate", help="run the closed-loop simulation")
    add_common(sp)
    sp.add_argument("--out", default="simulation.csv", help="output CSV path")
    sp.add_argument("--seed", type=int, default=None, help="override the trace seed")

    sp = sub.add_parser("verify", help="run the structural certificates")
    add_common(sp)

    sp = sub.add_parser("trace", help="generate the workload trace CSV")
    add_common(sp)
    sp.add_argument("--out", default="trace.csv", help="output CSV path")
    sp.add_argument("--seed", type=int, default=None, help="override the trace seed")

    return parser


def _setup_logging() -> None:
    level = _LOG_LEVELS.get(os.environ.get("THERMOPTIC_LOG", "warn").lower(), logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    args = _build_parser().parse_args(argv)
    if args.command == "validate":
        report = cmd_validate(args.config)
    elif args.command == "solve":
        report = cmd_solve(args.config, args.dstar, args.out)
    elif args.command == "simulate":
        report = cmd_simulate(args.config, args.out, seed=args.seed)
    elif args.command == "verify":
        report = cmd_verify(args.config)
    else:
        report = cmd_trace(args.config, args.out, seed=args.seed)
    _print_report(report)
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
