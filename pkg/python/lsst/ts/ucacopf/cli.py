# This file is part of ts_ucacopf.
#
# Developed for Vera C. Rubin Observatory Telescope and Site Systems.
# This product includes software developed by the LSST Project
# (https://www.lsst.org).
# See the COPYRIGHT file at the top-level directory of this distribution
# for details of code ownership.
#
# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU General Public License for more details.
#
# You should have received a copy of the GNU General Public License
# along with this program.  If not, see <https://www.gnu.org/licenses/>.

__all__ = [
    "WORKERS_ENV",
    "RunConfig",
    "UsageError",
    "make_parser",
    "run_config_from_args",
    "cmd_solve",
    "cmd_bench_dp",
    "cmd_check",
    "main",
    "run_ucacopf",
]

import argparse
import dataclasses
import logging
import os
import pathlib
import sys
import time

import jsonschema

from .admm_engine import Penalties, SolverError, SolverSettings, solve
from .constants import ExitCode
from .data_manager import DataManager
from .grid_model import (
    CaseParseError,
    DegenerateBranchError,
    case_summary,
    parse_matpower,
    read_case,
    validate_case,
)
from .scenario import (
    ScenarioConfig,
    ScenarioError,
    build_problem,
    load_scenario_file,
    scenario_profile,
)
from .uc_dp import DpError, bench_dp

# Environment variable holding the default number of worker processes.
WORKERS_ENV = "UCACOPF_WORKERS"

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

# Solver keys of a scenario file that map onto `RunConfig` fields.
_SOLVER_KEYS = (
    "rho_pq",
    "rho_va",
    "rho_uc",
    "beta0",
    "tau",
    "theta",
    "epsilon",
    "lambda_bound",
    "max_outer",
    "max_inner",
    "inner_primal_tol",
    "inner_dual_tol",
    "workers",
    "seed",
)


class UsageError(Exception):
    """Bad command-line arguments or configuration."""

    code = ExitCode.USAGE


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


@dataclasses.dataclass
class RunConfig:
    """Configuration of one ``solve`` run."""

    case: pathlib.Path
    scenario: pathlib.Path = None
    horizon: int = 24
    rho_pq: float = 5e3
    rho_va: float = 1e4
    rho_uc: float = 1e4
    beta0: float = None
    """Initial penalty on z; None for the largest rho."""
    tau: float = 6.0
    theta: float = 0.8
    epsilon: float = 1e-3
    lambda_bound: float = 1e12
    max_outer: int = 100
    max_inner: int = 1000
    inner_primal_tol: float = 1e-4
    inner_dual_tol: float = 1e-4
    workers: int = 1
    output_dir: pathlib.Path = pathlib.Path(".")
    seed: int = 0
    """Recorded in the report; the solve itself is deterministic."""
    kernel_dump_dir: pathlib.Path = None
    log_level: str = "INFO"

    def __post_init__(self):
        for name in ("rho_pq", "rho_va", "rho_uc", "epsilon", "lambda_bound"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name}={getattr(self, name)} must be > 0")
        if self.beta0 is not None and not self.beta0 > 0:
            raise ValueError(f"beta0={self.beta0} must be > 0")
        if self.horizon < 1:
            raise ValueError(f"horizon={self.horizon} must be >= 1")
        if not self.tau > 1:
            raise ValueError(f"tau={self.tau} must be > 1")
        if not 0 < self.theta < 1:
            raise ValueError(f"theta={self.theta} must be in (0, 1)")
        for name in ("max_outer", "max_inner", "workers"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name}={getattr(self, name)} must be >= 1")

    def penalties(self):
        return Penalties(
            rho_pq=self.rho_pq,
            rho_va=self.rho_va,
            rho_uc=self.rho_uc,
            beta=self.beta0,
            tau=self.tau,
            theta=self.theta,
            lambda_lower=-self.lambda_bound,
            lambda_upper=self.lambda_bound,
        )

    def settings(self, warm_start_threshold):
        return SolverSettings(
            epsilon=self.epsilon,
            max_outer=self.max_outer,
            max_inner=self.max_inner,
            inner_primal_tol=self.inner_primal_tol,
            inner_dual_tol=self.inner_dual_tol,
            workers=self.workers,
            warm_start_threshold=warm_start_threshold,
            kernel_dump_dir=self.kernel_dump_dir,
        )


def make_parser():
    """Make the command-line parser of ``run_ucacopf``.

    Options of ``solve`` default to None so that `run_config_from_args`
    can tell which ones were given.
    """
    parser = _ArgumentParser(
        prog="run_ucacopf",
        description="Unit commitment with AC optimal power flow by two-level ADMM.",
    )
    parser.add_argument(
        "--log-level",
        default="INFO",
        choices=("DEBUG", "INFO", "WARNING", "ERROR"),
        help="Logging level.",
    )
    subparsers = parser.add_subparsers(dest="command", parser_class=_ArgumentParser)
    subparsers.required = True

    solve_parser = subparsers.add_parser("solve", help="Solve a UC-ACOPF instance.")
    solve_parser.add_argument("--case", type=pathlib.Path, required=True)
    solve_parser.add_argument("--scenario", type=pathlib.Path)
    solve_parser.add_argument("--horizon", type=int)
    solve_parser.add_argument("--rho-pq", type=float)
    solve_parser.add_argument("--rho-va", type=float)
    solve_parser.add_argument("--rho-uc", type=float)
    solve_parser.add_argument("--tau", type=float)
    solve_parser.add_argument("--theta", type=float)
    solve_parser.add_argument("--epsilon", type=float)
    solve_parser.add_argument("--max-outer", type=int)
    solve_parser.add_argument("--max-inner", type=int)
    solve_parser.add_argument("--workers", type=int)
    solve_parser.add_argument("--output-dir", type=pathlib.Path)
    solve_parser.add_argument("--seed", type=int)
    solve_parser.add_argument(
        "--log-level",
        dest="solve_log_level",
        choices=("DEBUG", "INFO", "WARNING", "ERROR"),
    )
    solve_parser.add_argument("--kernel-dump-dir", type=pathlib.Path)

    bench_parser = subparsers.add_parser(
        "bench-dp", help="Time the batched unit commitment DP."
    )
    bench_parser.add_argument(
        "--generators",
        type=int,
        action="append",
        help="Number of generators; may be repeated. Default 1000.",
    )
    bench_parser.add_argument(
        "--horizons", type=int, nargs="+", default=[24, 48, 96, 168]
    )
    bench_parser.add_argument("--seed", type=int, default=0)
    bench_parser.add_argument("--repetitions", type=int, default=5)
    bench_parser.add_argument(
        "--output", type=pathlib.Path, help="CSV file; default stdout."
    )

    check_parser = subparsers.add_parser("check", help="Validate a case file.")
    check_parser.add_argument("case", type=pathlib.Path)
    return parser


def run_config_from_args(args, environ=None):
    """Build a `RunConfig` from parsed ``solve`` arguments.

    Values come from the command line, then the scenario file's
    ``horizon`` and ``solver`` entries, then the environment variable
    `WORKERS_ENV` (workers only), then the `RunConfig` defaults.

    Returns
    -------
    config : `RunConfig`
    scenario : `ScenarioConfig`

    Raises
    ------
    UsageError
        If a value is invalid or the scenario file is missing.
    """
    environ = os.environ if environ is None else environ
    values = {}
    workers = environ.get(WORKERS_ENV)
    if workers:
        try:
            values["workers"] = int(workers)
        except ValueError:
            raise UsageError(f"{WORKERS_ENV}={workers!r} is not an integer")

    scenario = ScenarioConfig()
    if args.scenario is not None:
        try:
            scenario = load_scenario_file(args.scenario)
        except FileNotFoundError as e:
            raise UsageError(str(e))
        except jsonschema.exceptions.ValidationError as e:
            raise UsageError(
                f"scenario file {str(args.scenario)!r} is invalid: {e.message}"
            )
        if scenario.horizon is not None:
            values["horizon"] = scenario.horizon
        values.update(
            {
                key: scenario.solver[key]
                for key in _SOLVER_KEYS
                if key in scenario.solver
            }
        )

    for name in (
        "horizon",
        "rho_pq",
        "rho_va",
        "rho_uc",
        "tau",
        "theta",
        "epsilon",
        "max_outer",
        "max_inner",
        "workers",
        "output_dir",
        "seed",
        "kernel_dump_dir",
    ):
        value = getattr(args, name)
        if value is not None:
            values[name] = value
    if args.solve_log_level is not None:
        values["log_level"] = args.solve_log_level
    else:
        values["log_level"] = args.log_level

    try:
        config = RunConfig(case=args.case, scenario=args.scenario, **values)
    except ValueError as e:
        raise UsageError(str(e))
    return config, scenario


def cmd_solve(config, scenario=None, log=None):
    """Solve a UC-ACOPF instance and write the report files.

    Parameters
    ----------
    config : `RunConfig`
    scenario : `ScenarioConfig`, optional
        Loaded scenario; None for the defaults.
    log : `logging.Logger`, optional

    Returns
    -------
    exit_code : `ExitCode`
        CONVERGED or ITERATION_CAP.

    Raises
    ------
    UsageError
        If the case or profile file is missing or the scenario is
        inconsistent with the case.
    SolverError
        If the solver fails.
    """
    log = log or logging.getLogger("UcAcopf")
    scenario = scenario or ScenarioConfig()

    start = time.monotonic()
    try:
        grid = read_case(config.case, default_rate=scenario.default_rate)
        profile = scenario_profile(scenario, config.horizon)
        problem = build_problem(
            grid,
            profile,
            scenario.uc_defaults,
            generator_overrides=scenario.generators,
            initial_dispatch=scenario.initial_dispatch,
        )
    except (FileNotFoundError, ScenarioError) as e:
        raise UsageError(str(e))
    parse_time = time.monotonic() - start
    log.info(
        "Read %s: %d buses, %d generators, %d branches; horizon %d",
        config.case,
        grid.n_buses,
        grid.n_generators,
        grid.n_branches,
        config.horizon,
    )

    report = solve(
        problem,
        penalties=config.penalties(),
        settings=config.settings(scenario.warm_start_threshold),
        log=log,
    )
    report.timing = dict(parse=parse_time, **report.timing)
    report.parameters["seed"] = config.seed
    report.parameters["case"] = str(config.case)
    DataManager(config.output_dir, log=log).write(report)
    log.info(
        "Solve %s: objective %.6g, primal infeasibility %.3g, "
        "%d outer and %d inner iterations",
        report.status,
        report.objective,
        report.primal_infeasibility,
        report.outer_iterations,
        report.inner_iterations,
    )
    return ExitCode.CONVERGED if report.converged else ExitCode.ITERATION_CAP


def cmd_bench_dp(n_generators, horizons, seed=0, repetitions=5, output=None):
    """Time the batched DP on seeded random instances.

    Parameters
    ----------
    n_generators : sequence of `int`
    horizons : sequence of `int`
    seed : `int`, optional
    repetitions : `int`, optional
    output : `pathlib.Path`, optional
        CSV file to write; None to print to stdout.

    Returns
    -------
    table : `astropy.table.Table`
    """
    table = bench_dp(n_generators, horizons, seed=seed, repetitions=repetitions)
    if output is None:
        table.write(sys.stdout, format="ascii.csv")
    else:
        table.write(output, format="ascii.csv", overwrite=True)
    return table


def _plural(count, singular, plural):
    return f"{count} {singular if count == 1 else plural}"


def cmd_check(path, out=None):
    """Parse a case file and print its summary and violations.

    Returns
    -------
    exit_code : `ExitCode`
        CONVERGED if the case is valid, else ERROR.

    Raises
    ------
    UsageError
        If the file does not exist.
    """
    out = out or sys.stdout
    path = pathlib.Path(path)
    if not path.is_file():
        raise UsageError(f"case file {str(path)!r} not found")
    try:
        case = parse_matpower(path.read_text(), validate=False)
    except CaseParseError as e:
        print(f"{path}: {e.what}", file=out)
        return ExitCode.ERROR
    except DegenerateBranchError as e:
        print(f"{path}: {e}", file=out)
        return ExitCode.ERROR
    summary = case_summary(case)
    print(
        ", ".join(
            (
                _plural(summary["n_buses"], "bus", "buses"),
                _plural(summary["n_generators"], "generator", "generators"),
                _plural(summary["n_branches"], "branch", "branches"),
                _plural(
                    summary["n_reference_buses"], "reference bus", "reference buses"
                ),
            )
        ),
        file=out,
    )
    violations = validate_case(case)
    for violation in violations:
        print(f"violation: {violation}", file=out)
    return ExitCode.ERROR if violations else ExitCode.CONVERGED


def main(argv=None):
    """Run ``run_ucacopf`` and return its exit code."""
    log = logging.getLogger("UcAcopf")
    try:
        args = make_parser().parse_args(argv)
        if args.command == "solve":
            config, scenario = run_config_from_args(args)
            logging.basicConfig(level=config.log_level, format=LOG_FORMAT)
            return int(cmd_solve(config, scenario, log=log))
        logging.basicConfig(level=args.log_level, format=LOG_FORMAT)
        if args.command == "bench-dp":
            cmd_bench_dp(
                args.generators or [1000],
                args.horizons,
                seed=args.seed,
                repetitions=args.repetitions,
                output=args.output,
            )
            return int(ExitCode.CONVERGED)
        return int(cmd_check(args.case))
    except UsageError as e:
        print(e, file=sys.stderr)
        return int(ExitCode.USAGE)
    except (SolverError, DpError, ValueError) as e:
        # Case and scenario errors derive from ValueError.
        log.exception("run_ucacopf failed: %s", e)
        return int(ExitCode.ERROR)


def run_ucacopf():
    """Console entry point."""
    sys.exit(main())
