"""
Command line interface for esbgk-slab.

Subcommands: solve, verify, sweep and lemma-check. Exit codes: 0 converged / all
checks pass, 1 configuration error, 2 iteration limit reached, 3 hypothesis violation
or numerical failure, 4 failed verification battery.
"""

import argparse
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from pydantic import ValidationError
from tqdm import tqdm

from .config_manager import SWEEP_AXES, ConfigManager, RunConfig, apply_sweep_value
from .error_handler import (
    ConfigurationError,
    ContractViolation,
    DegenerateDataError,
    NumericalFailureError,
    SolverError,
    get_error_handler,
    setup_global_error_handling,
)
from .file_manager import FileManager
from .solver_controller import SolverController, Termination
from .verification import format_table, kernel_probe_battery, run_batteries
from .wandb_integration import WandBIntegration

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_MAX_ITER = 2
EXIT_HYPOTHESIS = 3
EXIT_VERIFY = 4

EXIT_CODES = {
    Termination.CONVERGED: EXIT_OK,
    Termination.MAX_ITER: EXIT_MAX_ITER,
    Termination.HYPOTHESIS_VIOLATION: EXIT_HYPOTHESIS,
}

MAX_WORKERS_ENV = "ESBGK_SLAB_MAX_WORKERS"

logger = logging.getLogger(__name__)


def parse_values(text: str) -> List[float]:
    """Comma separated list of floats."""
    try:
        values = [float(item) for item in text.split(",") if item.strip()]
    except ValueError:
        raise ConfigurationError(f"Expected a comma separated list of numbers, got '{text}'")
    if not values:
        raise ConfigurationError("Value list is empty")
    return values


def max_workers(task_count: int) -> int:
    """Worker count for a sweep, capped by ESBGK_SLAB_MAX_WORKERS when set."""
    cap = os.cpu_count() or 1
    raw = os.environ.get(MAX_WORKERS_ENV)
    if raw:
        try:
            cap = int(raw)
        except ValueError:
            raise ConfigurationError(f"{MAX_WORKERS_ENV} must be an integer, got '{raw}'")
        if cap < 1:
            raise ConfigurationError(f"{MAX_WORKERS_ENV} must be at least 1, got {cap}")
    return max(1, min(cap, task_count))


def _make_tracker(run: RunConfig, config_dict: Dict[str, Any]) -> Optional[WandBIntegration]:
    if not run.tracking.wandb:
        return None
    tracker = WandBIntegration(run.tracking.project)
    if not tracker.initialize(config_dict):
        return None
    return tracker


def cmd_solve(args: argparse.Namespace) -> int:
    manager = ConfigManager()
    files = FileManager()
    config_path = Path(args.config)
    run = manager.load_config(config_path)
    config = manager.build_solver_config(run, config_path.parent)
    out_dir = files.create_output_directory(args.out_dir or run.output.directory)

    tracker = _make_tracker(run, config.to_dict())
    controller = SolverController(show_progress=args.progress, tracker=tracker)
    try:
        result = controller.solve(config)
    except NumericalFailureError as e:
        handler = get_error_handler()
        files.write_crash_report(out_dir, handler.create_crash_report(e, config.to_dict()))
        print(handler.get_user_friendly_message(e, "Solve"), file=sys.stderr)
        if tracker:
            tracker.finish(exit_code=EXIT_HYPOTHESIS)
        return EXIT_HYPOTHESIS

    report = result.report
    files.write_report(out_dir / "report.json", config, result)
    if result.profile is not None:
        table = files.profile_table(result)
        files.write_profile_csv(out_dir / "profile.csv", table)
        if args.plot or run.output.plot:
            get_error_handler().safe_execute(
                lambda: files.plot_profile(out_dir / "profile.png", table), "Profile plot",
                default_return=False,
            )
    if args.dump_field or run.output.dump_field:
        files.dump_field(out_dir / "field.npz", result)

    code = EXIT_CODES[report.termination]
    if tracker:
        tracker.finish(exit_code=code)
    print(f"{report.termination.value}: {report.detail}")
    for warning in report.warnings:
        print(f"warning: {warning}")
    return code


def cmd_verify(args: argparse.Namespace) -> int:
    manager = ConfigManager()
    config_path = Path(args.config)
    run = manager.load_config(config_path)
    config = manager.build_solver_config(run, config_path.parent)
    seed = args.seed if args.seed is not None else run.verify.seed

    section = run.verify
    results = run_batteries(
        config,
        seed,
        moment_samples=section.moment_samples,
        tensor_samples=section.tensor_samples,
        identity_fields=section.identity_fields,
        identity_directions=section.identity_directions,
        moment_counts=section.moment_counts,
        contraction_iterations=section.contraction_iterations,
    )
    print(format_table(results))
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"Failed batteries: {', '.join(failed)}", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def _solve_point(raw: Dict[str, Any], base_dir: str, axis: str, value: float):
    run = RunConfig.model_validate(raw)
    config = apply_sweep_value(ConfigManager().build_solver_config(run, base_dir), axis, value)
    return SolverController().solve(config)


def _sweep_run(task: tuple) -> Dict[str, Any]:
    """Solve one sweep point; failures become rows, never exceptions."""
    raw, base_dir, axis, value = task
    row: Dict[str, Any] = {"value": value, "converged": False}
    solve_point = get_error_handler().wrap_with_error_handling(_solve_point, f"Sweep point {axis}={value}")
    try:
        result = solve_point(raw, base_dir, axis, value)
    except (SolverError, ValidationError) as e:
        row["termination"] = f"error:{type(e).__name__}"
        return row

    report = result.report
    row["converged"] = report.termination is Termination.CONVERGED
    row["iterations"] = report.iterations
    row["termination"] = report.termination.value
    if report.contraction is not None:
        row["contraction_rate"] = report.contraction.rate
    if result.tensor is not None:
        row["min_eigenvalue"] = float(np.min(result.tensor.lambda_min))
    if report.discrepancy is not None:
        row["u1_max"] = float(report.discrepancy["u1_measured"])
    return row


def cmd_sweep(args: argparse.Namespace) -> int:
    manager = ConfigManager()
    files = FileManager()
    config_path = Path(args.config)
    values = parse_values(args.values)
    run = manager.load_config(config_path)
    base = manager.build_solver_config(run, config_path.parent)
    for value in values:
        apply_sweep_value(base, args.axis, value)
    out_dir = files.create_output_directory(args.out_dir or run.output.directory)

    raw = run.model_dump(mode="json")
    base_dir = str(config_path.parent.resolve())
    tasks = [(raw, base_dir, args.axis, value) for value in values]
    workers = max_workers(len(tasks))
    logger.info(f"Sweeping {args.axis} over {len(tasks)} values with {workers} workers")

    if workers == 1:
        rows = [_sweep_run(task) for task in tqdm(tasks, desc=f"sweep {args.axis}", unit="run")]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(tqdm(pool.map(_sweep_run, tasks), total=len(tasks),
                             desc=f"sweep {args.axis}", unit="run"))

    files.write_sweep_csv(out_dir / "sweep.csv", rows)
    converged = sum(1 for row in rows if row["converged"])
    print(f"{converged}/{len(rows)} runs converged")
    return EXIT_OK if converged else EXIT_MAX_ITER


def cmd_lemma_check(args: argparse.Namespace) -> int:
    taus = parse_values(args.tau_list)
    if min(taus) <= 1:
        raise ConfigurationError(f"tau values must exceed 1, got {taus}")
    if not args.decay > 0:
        raise ConfigurationError(f"--decay must be positive, got {args.decay}")
    result = kernel_probe_battery(taus, args.decay, args.x)
    print(f"{'tau':>12}  {'probe':>14}  {'probe*tau/(ln tau+1)':>22}")
    for tau, ratio in result.metrics["ratios"].items():
        tau = float(tau)
        probe = ratio * (math.log(tau) + 1.0) / tau
        print(f"{tau:>12g}  {probe:>14.6e}  {ratio:>22.6f}")
    print(format_table([result]))
    return EXIT_OK if result.passed else EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="esbgk-slab",
        description="Stationary ES-BGK slab solver with diagnostic ledgers",
    )
    parser.add_argument("--log-file", default=None, help="Also write DEBUG logs to this file")
    parser.add_argument("--verbose", action="store_true", help="Show DEBUG logs on the console")
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="Run the fixed-point iteration")
    solve.add_argument("--config", required=True)
    solve.add_argument("--out-dir", default=None)
    solve.add_argument("--dump-field", action="store_true")
    solve.add_argument("--plot", action="store_true")
    solve.add_argument("--progress", action="store_true", help="Show an iteration progress bar")
    solve.set_defaults(handler=cmd_solve)

    verify = sub.add_parser("verify", help="Run the property batteries")
    verify.add_argument("--config", required=True)
    verify.add_argument("--seed", type=int, default=None)
    verify.set_defaults(handler=cmd_verify)

    sweep = sub.add_parser("sweep", help="Solve over a list of parameter values")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--axis", required=True, choices=SWEEP_AXES)
    sweep.add_argument("--values", required=True)
    sweep.add_argument("--out-dir", default=None)
    sweep.set_defaults(handler=cmd_sweep)

    lemma = sub.add_parser("lemma-check", help="Probe the kernel estimate over tau")
    lemma.add_argument("--tau-list", required=True)
    lemma.add_argument("--decay", type=float, default=1.0)
    lemma.add_argument("--x", type=float, default=1.0)
    lemma.set_defaults(handler=cmd_lemma_check)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main entry point for the command line tool."""
    args = build_parser().parse_args(argv)
    handler = setup_global_error_handling(args.log_file, args.verbose)

    ready, problems = handler.validate_system_requirements()
    if not ready:
        for problem in problems:
            print(problem, file=sys.stderr)
        return EXIT_CONFIG

    try:
        return args.handler(args)
    except (ConfigurationError, ContractViolation, DegenerateDataError) as e:
        print(handler.get_user_friendly_message(e), file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as e:
        handler.log_error(e, args.command)
        print(handler.get_user_friendly_message(e, args.command), file=sys.stderr)
        return EXIT_HYPOTHESIS
    except KeyboardInterrupt:
        print("Interrupted", file=sys.stderr)
        return EXIT_HYPOTHESIS


if __name__ == "__main__":
    sys.exit(main())
