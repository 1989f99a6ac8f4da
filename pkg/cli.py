"""
Command Line Interface for vemsolver.

This module provides CLI commands to run the built-in benchmark cases,
describe them and list the registry.
"""

import argparse
import logging
import os
import sys
import time
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

# Add the repository root to the path so the package imports without installation
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from vemsolver.cases.case_runner import get_case_runner
from vemsolver.core.config import APP_DESCRIPTION, LOG_FILE, LOG_FORMAT, LOG_LEVEL, OUTPUT_DIR
from vemsolver.core.exceptions import (
    ConfigError,
    DescentViolationError,
    EvaluationError,
    IntegrationError,
    StiffnessSuspectedError,
    UnknownCaseError,
    UsageError,
    VemError,
)
from vemsolver.flows.cov_flow import CovGains
from vemsolver.models.grid import make_grid
from vemsolver.models.problem_defs import OcpProblem
from vemsolver.solver.integrator import EvolveOptions, Method, build_flow, evolve
from vemsolver.utils.helpers import filter_none_values, format_error
from vemsolver.utils.results import prepare_output_dir, write_failure, write_results

# Configure logger
logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NOT_CONVERGED = 2


class RunConfig(BaseModel):
    """Validated settings of one `run` or `describe` invocation."""

    model_config = ConfigDict(extra="forbid")

    case: str
    n_points: Optional[int] = Field(None, ge=5)
    gain_k: Optional[List[float]] = None
    gain_ktf: Optional[float] = Field(None, gt=0)
    method: Optional[Method] = None
    rel_tol: Optional[float] = Field(None, gt=0)
    abs_tol: Optional[float] = Field(None, gt=0)
    tau_max: Optional[float] = Field(None, gt=0)
    residual_tol: Optional[float] = Field(None, gt=0)
    snapshot_every: Optional[float] = Field(None, gt=0)
    out: Optional[Path] = None
    guess: Optional[str] = None
    progress: bool = False

    @field_validator("gain_k", mode="before")
    @classmethod
    def parse_gain_list(cls, value: Any) -> Any:
        if isinstance(value, str):
            try:
                return [float(item) for item in value.split(",") if item.strip()]
            except ValueError as e:
                raise ValueError(f"gains must be numbers separated by commas, got '{value}'") from e
        return value

    @field_validator("gain_k")
    @classmethod
    def check_gains(cls, value: Optional[List[float]]) -> Optional[List[float]]:
        if value is not None and (not value or any(k <= 0 for k in value)):
            raise ValueError("gains must be positive")
        return value

    @property
    def explicit_horizon(self) -> bool:
        return self.tau_max is not None

    def case_overrides(self) -> Dict[str, Any]:
        """Flags that override the case configuration."""
        overrides: Dict[str, Any] = {}
        if self.n_points is not None:
            overrides["n_points"] = self.n_points
        gains: Dict[str, Any] = {}
        if self.gain_k is not None:
            gains["K"] = self.gain_k[0] if len(self.gain_k) == 1 else self.gain_k
        if self.gain_ktf is not None:
            gains["k_tf"] = self.gain_ktf
        if gains:
            overrides["gains"] = gains
        if self.method is not None:
            overrides["method"] = self.method.value
        if self.tau_max is not None:
            overrides["tau_max"] = self.tau_max
        if self.snapshot_every is not None:
            overrides["snapshot_every"] = self.snapshot_every
        if self.guess is not None:
            overrides["guess"] = self.guess
        return overrides


def setup_logging(log_level: str = "INFO") -> None:
    """Set up logging for CLI commands."""
    handlers: List[logging.Handler] = [logging.StreamHandler()]
    if LOG_FILE:
        handlers.append(logging.FileHandler(LOG_FILE))
    logging.basicConfig(
        level=getattr(logging, log_level.upper(), logging.INFO),
        format=LOG_FORMAT,
        handlers=handlers,
        force=True,
    )


def _fail(message: str) -> int:
    logger.debug(f"failing with: {message}")
    print(f"error: {message}", file=sys.stderr)
    return EXIT_ERROR


def _initial_tf(problem) -> float:
    return problem.tf_initial if isinstance(problem, OcpProblem) else problem.tf


def run_command(config: RunConfig) -> int:
    """
    Solve one case and write its result files.

    Returns:
        int: 0 on convergence (or when an explicit horizon is reached),
        2 when the default horizon ends without convergence, 1 on error.
    """
    out_dir = config.out or Path(OUTPUT_DIR) / config.case
    try:
        bench = get_case_runner().get_case(config.case).case(config.case_overrides())
    except UnknownCaseError as e:
        return _fail(str(e))
    except ConfigError as e:
        return _fail(f"invalid configuration: {e}")

    try:
        prepare_output_dir(out_dir)
    except OSError as e:
        return _fail(f"output directory {out_dir} is not writable: {e}")

    problem = bench.problem
    method = Method(bench.default_method)
    try:
        opts = EvolveOptions.from_settings(
            method=method,
            rel_tol=config.rel_tol,
            abs_tol=config.abs_tol,
            residual_tol=config.residual_tol,
            tau_max=bench.default_tau_max,
            snapshot_every=bench.default_snapshot_every,
            progress=config.progress,
        )
        grid = make_grid(problem.t0, _initial_tf(problem), bench.default_n_points)
    except (ValidationError, VemError) as e:
        return _fail(f"invalid configuration: {e}")

    logger.info(f"Running {bench.name}: N={grid.n_points}, method={method.value}, tau_max={opts.tau_max:g}")
    started = time.perf_counter()
    try:
        result = evolve(problem, bench.default_guess(grid), grid, bench.default_gains, opts)
    except DescentViolationError as e:
        write_failure(out_dir, {**format_error(e), "case": bench.name, "diagnostics": e.dump})
        return _fail(f"solver aborted: {e}")
    except (StiffnessSuspectedError, IntegrationError) as e:
        write_failure(out_dir, {**format_error(e), "case": bench.name})
        return _fail(f"integration failed: {e}")
    except EvaluationError as e:
        write_failure(out_dir, {**format_error(e), "case": bench.name})
        return _fail(f"evaluation failed: {e}")
    wall_time = time.perf_counter() - started

    try:
        write_results(out_dir, bench, result, grid, method.value, wall_time)
    except OSError as e:
        return _fail(f"output directory {out_dir} is not writable: {e}")

    final = result.final
    line = (
        f"{bench.name}: {result.stop_reason} at tau={result.tau:g}, "
        f"residual_norm={final.residual_norm:.3e}, {('J1' if final.J1 is not None else 'J')}="
        f"{(final.J1 if final.J1 is not None else final.J):.6e}"
    )
    if isinstance(problem, OcpProblem) and problem.free_tf:
        line += f", tf={result.tf:.6f}"
    print(line)

    if result.converged or (config.explicit_horizon and result.stop_reason == "tau_max"):
        return EXIT_OK
    logger.warning(f"{bench.name} did not converge ({result.stop_reason}); stationarity "
                   f"{final.stationarity:.3e} > residual_tol {opts.residual_tol:g}")
    return EXIT_NOT_CONVERGED


def describe_case(config: RunConfig) -> str:
    """Text description of a case at its configured (or overridden) grid size."""
    base_case = get_case_runner().get_case(config.case)
    bench = base_case.case(config.case_overrides())
    problem = bench.problem
    grid = make_grid(problem.t0, _initial_tf(problem), bench.default_n_points)
    flow = build_flow(problem, grid, bench.default_gains)
    guess = bench.default_guess(grid)
    flow.prepare(guess.values, getattr(guess, "tf", None))
    layout = flow.layout

    lines = [f"case: {bench.name}", f"description: {bench.description}"]
    if isinstance(problem, OcpProblem):
        lines.append("type: optimal control")
        lines.append(f"dimensions: n={problem.n}, m={problem.m}")
        if problem.free_tf:
            lines.append(f"horizon: t0={problem.t0:g}, free tf (initial {problem.tf_initial:g})")
        else:
            lines.append(f"horizon: t0={problem.t0:g}, fixed tf={problem.tf_initial:g}")
    else:
        lines.append("type: calculus of variations")
        lines.append(f"dimensions: n={problem.n}")
        lines.append(f"horizon: t0={problem.t0:g}, fixed tf={problem.tf:g}")
    lines.append(f"boundary: {problem.boundary.describe()}")
    lines.append(f"components: {', '.join(flow.component_names)}")
    lines.append(f"grid: N={grid.n_points}")
    lines.append(f"integrated values: {layout.total_size} total, {layout.size} free")

    gains = bench.default_gains
    K = ", ".join(f"{k:g}" for k in gains.K)
    if isinstance(gains, CovGains):
        gain_text = f"K=[{K}], variant={gains.variant.value}"
    else:
        gain_text = f"K=[{K}], k_tf={gains.k_tf:g}, convective={gains.convective}"
    lines.append(
        f"defaults: method={bench.default_method}, {gain_text}, "
        f"tau_max={bench.default_tau_max:g}, snapshot_every={bench.default_snapshot_every:g}"
    )
    reference = "closed form" if bench.has_reference else "none"
    if bench.reference_tf is not None:
        reference += f", optimal tf={bench.reference_tf:g}"
    lines.append(f"reference: {reference}")
    return "\n".join(lines)


def describe_command(config: RunConfig) -> int:
    try:
        print(describe_case(config))
    except UnknownCaseError as e:
        return _fail(str(e))
    except VemError as e:
        return _fail(f"invalid configuration: {e}")
    return EXIT_OK


def list_command() -> int:
    for metadata in get_case_runner().get_cases():
        print(f"{metadata['name']:<12} {metadata['description']}")
    return EXIT_OK


class CliArgumentParser(argparse.ArgumentParser):
    """Argument parser that reports usage errors instead of exiting with status 2."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _add_case_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--n-points", type=int, help="Grid nodes N")
    parser.add_argument("--gain-k", help="Gain K: one value or a comma-separated list per component")
    parser.add_argument("--gain-ktf", type=float, help="Gain of the terminal-time rate")
    parser.add_argument("--method", choices=[m.value for m in Method], help="Integrator")
    parser.add_argument("--tau-max", type=float, help="Variation-time horizon (reaching it counts as success)")
    parser.add_argument("--snapshot-every", type=float, help="Diagnostics interval in tau")
    parser.add_argument("--guess", choices=["ramp", "consistent"], help="Initial guess (example3 only)")


def build_parser() -> argparse.ArgumentParser:
    parser = CliArgumentParser(prog="vemsolver", description=APP_DESCRIPTION)
    parser.add_argument("--log-level", default=LOG_LEVEL,
                        choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"],
                        help="Set the logging level")
    subparsers = parser.add_subparsers(dest="command", help="Command to run")

    run_parser = subparsers.add_parser("run", help="Solve a benchmark case and write result files")
    run_parser.add_argument("--case", required=True, help="Case name (see `list`)")
    _add_case_arguments(run_parser)
    run_parser.add_argument("--rel-tol", type=float, help="Relative step tolerance")
    run_parser.add_argument("--abs-tol", type=float, help="Absolute step tolerance")
    run_parser.add_argument("--residual-tol", type=float, help="Stationarity threshold for convergence")
    run_parser.add_argument("--out", type=Path, help="Output directory")
    run_parser.add_argument("--progress", action="store_true", help="Show a progress bar over tau")

    describe_parser = subparsers.add_parser("describe", help="Describe a benchmark case")
    describe_parser.add_argument("case", help="Case name")
    _add_case_arguments(describe_parser)

    subparsers.add_parser("list", help="List the registered cases")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point for CLI."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        return _fail(str(e))
    setup_logging(args.log_level)

    if args.command == "list":
        return list_command()
    if args.command not in ("run", "describe"):
        parser.print_help()
        return EXIT_ERROR

    fields = filter_none_values({key: value for key, value in vars(args).items()
                                if key not in ("command", "log_level")})
    try:
        config = RunConfig(**fields)
    except ValidationError as e:
        return _fail(f"invalid arguments: {e.errors()[0]['msg']}")

    if args.command == "run":
        return run_command(config)
    return describe_command(config)


if __name__ == "__main__":
    sys.exit(main())
