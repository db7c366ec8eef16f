"""Command-line front end.

Subcommands:
  binary-curve  closed-form binary tradeoff curve as CSV
  sweep         optimal rate over a budget grid as CSV
  ib-sweep      Information Bottleneck baseline over a beta grid as CSV
  verify        solver against grid search and Monte Carlo, PASS/FAIL report

Exit status: 0 success, 1 validation or usage error, 2 I/O error,
3 verification failure.
"""

import argparse
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from src import binary, enumeration, ib_baseline, oracle, report
from src.instances import load_instance, parse_cost_params
from src.probability import ProblemInstance, ValidationError
from src.report import Check
from src.subproblem import (
    FEASIBILITY_TOL,
    GAP_TOL,
    NumericalFailure,
    SolverSettings,
    Status,
    SubproblemSpec,
    kkt_residual,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_VERIFY = 3

GRID_AGREEMENT = 2e-2  # solver may not exceed the grid optimum by more than this
SOLVER_SLACK = 1e-3  # nor may the grid beat the solver by more than this
MC_SIGMAS = 3.0
MC_EXACT_TOL = 1e-12
DEFAULT_SAMPLES = 200_000
DEFAULT_GRID_SIZE = 21
MAX_SEED = 2**64


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; 2 is reserved for I/O here."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass(frozen=True)
class RunConfig:
    command: str
    output_path: Path | None = None
    instance_path: Path | None = None
    p1: float | None = None
    grid_size: int = DEFAULT_GRID_SIZE
    budget_grid: tuple[float, float, int] | None = None
    beta_grid: tuple[float, float, int] | None = None
    budget: float | None = None
    gap_tol: float = GAP_TOL
    feasibility_tol: float = FEASIBILITY_TOL
    seed: int = 0
    workers: int = 1
    canonical: bool = True
    verify: bool = False
    cost_params: dict[str, float] = field(default_factory=dict)
    restarts: int = ib_baseline.RESTARTS
    samples: int = DEFAULT_SAMPLES
    step: float | None = None

    def __post_init__(self):
        if not self.gap_tol > 0 or not self.feasibility_tol > 0:
            raise ValidationError("tolerances must be positive")
        if not 0 <= self.seed < MAX_SEED:
            raise ValidationError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if self.workers < 1:
            raise ValidationError(f"workers must be at least 1, got {self.workers}")
        if self.restarts < 0:
            raise ValidationError(f"restarts must be nonnegative, got {self.restarts}")
        if self.samples < 1:
            raise ValidationError(f"samples must be at least 1, got {self.samples}")
        if self.command == "sweep" and self.budget_grid is None:
            raise ValidationError("sweep needs a non-empty --budget-grid")
        if self.command == "binary-curve" and self.grid_size < 2:
            raise ValidationError(f"grid size must be at least 2, got {self.grid_size}")

    @property
    def settings(self) -> SolverSettings:
        return SolverSettings(gap_tol=self.gap_tol, feasibility_tol=self.feasibility_tol)

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "RunConfig":
        values = {
            "command": args.command,
            "output_path": Path(args.output) if args.output else None,
            "gap_tol": args.gap_tol,
            "feasibility_tol": args.feasibility_tol,
            "seed": args.seed,
            "workers": args.workers,
        }
        if getattr(args, "instance", None):
            values["instance_path"] = Path(args.instance)
        if getattr(args, "budget_grid", None):
            values["budget_grid"] = parse_grid(args.budget_grid)
        if getattr(args, "beta_grid", None):
            values["beta_grid"] = parse_grid(args.beta_grid)
        if hasattr(args, "cost_param"):
            values["cost_params"] = parse_cost_params(args.cost_param)
        if hasattr(args, "no_canonical"):
            values["canonical"] = not args.no_canonical
        for name in ("p1", "grid_size", "budget", "verify", "restarts", "samples", "step"):
            if getattr(args, name, None) is not None:
                values[name] = getattr(args, name)
        return cls(**values)


def parse_grid(text: str) -> tuple[float, float, int]:
    """``min:max:count``."""
    parts = text.split(":")
    if len(parts) != 3:
        raise ValidationError(f"grid must look like min:max:count, got {text!r}")
    try:
        low, high, count = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise ValidationError(f"grid must look like min:max:count, got {text!r}") from None
    if count < 1:
        raise ValidationError(f"grid count must be at least 1, got {count}")
    if high < low or (count > 1 and high == low):
        raise ValidationError(f"grid needs min < max, got {text!r}")
    return low, high, count


def linear_grid(grid: tuple[float, float, int]) -> list[float]:
    low, high, count = grid
    return np.linspace(low, high, count).tolist()


def log_grid(grid: tuple[float, float, int]) -> list[float]:
    low, high, count = grid
    if low <= 0:
        raise ValidationError(f"log-spaced grid needs min > 0, got {low!r}")
    return np.geomspace(low, high, count).tolist()


def _default_step(instance: ProblemInstance) -> float:
    return 0.02 if instance.l <= 2 else 0.05


def _load(config: RunConfig) -> ProblemInstance:
    print(f"Loading {config.instance_path}...")
    instance = load_instance(config.instance_path, config.cost_params)
    print(f"Loaded instance: m={instance.m} labels, n={instance.n} data letters, l={instance.l}")
    return instance


def _write(path: Path, text: str, rows: int) -> None:
    path.write_text(text)
    print(f"Done. Wrote {rows} row(s) to {path}")


# ── Commands ──


def cmd_binary_curve(config: RunConfig) -> int:
    print(f"Computing binary curve for p1={config.p1} on {config.grid_size} points...")
    points = binary.binary_curve(config.p1, config.grid_size)
    ties = [p.p2 for p in points if p.map_tie]
    if ties:
        print(f"  Note: MAP decisions tie at p2={', '.join(f'{p:.6g}' for p in ties)}")
    _write(config.output_path, report.render_binary_curve(points), len(points))
    return EXIT_OK


def _grid_check(grid: oracle.GridSearchReport, status: Status, mi: float | None) -> Check:
    if status is not Status.OPTIMAL:
        if grid.feasible:
            return Check("grid agreement", False, f"solver infeasible but grid found mi={grid.best_mi:.6g}")
        return Check("grid agreement", True, "both infeasible")
    if not grid.feasible:
        return Check("grid agreement", True, f"no feasible grid channel at step {grid.step}")
    ok = mi <= grid.best_mi + GRID_AGREEMENT and grid.best_mi >= mi - SOLVER_SLACK
    return Check("grid agreement", ok, f"solver mi={mi:.6g}, grid mi={grid.best_mi:.6g}")


def cmd_sweep(config: RunConfig) -> int:
    instance = _load(config)
    budgets = linear_grid(config.budget_grid)
    decoders = enumeration.enumerate_decoders(instance.m, instance.l, config.canonical)
    print(f"Solving {len(budgets)} budget(s) over {len(decoders)} decoder map(s)...")
    curve = enumeration.sweep(instance, budgets, canonical=config.canonical,
                              workers=config.workers, settings=config.settings)
    for point in curve.points:
        if point.status is Status.NUMERICAL_FAILURE:
            print(f"  ERROR at budget {point.budget:.6g}: {point.message}")
    print(f"{len(curve.optimal_points())} of {len(curve.points)} point(s) optimal.")
    _write(config.output_path, report.render_sweep(curve, instance.labels), len(curve.points))

    if not config.verify:
        return EXIT_OK
    step = config.step or _default_step(instance)
    print(f"Cross-checking {len(curve.points)} point(s) against grid search (step {step})...")
    failures = 0
    for point in curve.points:
        if point.status is Status.NUMERICAL_FAILURE:
            continue
        check = _grid_check(oracle.grid_search(instance, point.budget, step), point.status, point.mi)
        if not check.passed:
            failures += 1
            print(f"  FAIL at budget {point.budget:.6g}: {check.detail}")
    if failures:
        print(f"Verification failed at {failures} point(s).")
        return EXIT_VERIFY
    print("Verification passed.")
    return EXIT_OK


def cmd_ib_sweep(config: RunConfig) -> int:
    instance = _load(config)
    betas = log_grid(config.beta_grid) if config.beta_grid else ib_baseline.default_beta_grid()
    print(f"Running IB on {len(betas)} beta value(s), {config.restarts} random restart(s) each, "
          f"seed {config.seed}; costs use min-cost decoding...")
    points = ib_baseline.ib_sweep(instance, betas, seed=config.seed, restarts=config.restarts)
    for point in points:
        if not point.converged:
            print(f"  WARNING beta={point.beta:.6g} did not converge")
    _write(config.output_path, report.render_ib_sweep(points), len(points))
    return EXIT_OK


def cmd_verify(config: RunConfig) -> int:
    if config.budget is None:
        raise ValidationError("verify needs --budget")
    instance = _load(config)
    step = config.step or _default_step(instance)
    size = oracle.grid_size(instance.n, instance.l, step)
    if instance.n * instance.l > oracle.MAX_GRID_CELLS or size > oracle.MAX_GRID_POINTS:
        raise oracle.OracleRefusal(
            f"instance too large for grid search (n*l = {instance.n * instance.l}, "
            f"{size} grid channels); verify needs n*l <= {oracle.MAX_GRID_CELLS}"
        )

    print(f"Solving at budget {config.budget}...")
    try:
        result = enumeration.global_solve(instance, config.budget, canonical=config.canonical,
                                          workers=config.workers, settings=config.settings)
    except NumericalFailure as e:
        print(f"ERROR: solver failed: {e}", file=sys.stderr)
        return EXIT_VERIFY

    print(f"Running grid search (step {step}) and Monte Carlo ({config.samples} samples)...")
    grid = oracle.grid_search(instance, config.budget, step)
    checks = [_grid_check(grid, result.status, result.mi)]
    rows = [
        ("status", result.status.value, "feasible" if grid.feasible else "infeasible"),
        ("mi (bits)", _num(result.mi), _num(grid.best_mi)),
    ]

    if result.best.is_optimal:
        channel, decoder = result.best.channel, result.decoder
        estimate, stderr = oracle.monte_carlo_error(instance, channel, decoder, config.samples,
                                                    config.seed)
        cost = result.best.achieved_budget
        if stderr > 0:
            ok = abs(estimate - cost) <= MC_SIGMAS * stderr
        else:
            ok = abs(estimate - cost) <= MC_EXACT_TOL
        checks.append(Check("monte carlo cost", ok,
                            f"estimate {estimate:.6g} +/- {stderr:.2g} vs {cost:.6g}"))
        residual = kkt_residual(SubproblemSpec(instance, decoder, config.budget), channel)
        checks.append(Check("kkt residual", residual <= config.settings.kkt_tol, f"{residual:.2g}"))
        rows.append(("cost", _num(cost), _num(estimate)))
        rows.append(("decoder", decoder.render(instance.labels), ""))

    title = f"Verification of {config.instance_path} at budget {config.budget}"
    text = report.render_verify(title, rows, checks)
    if config.output_path:
        config.output_path.write_text(text)
        print(f"Report written to {config.output_path}")
    else:
        print(text, end="")
    return EXIT_OK if all(c.passed for c in checks) else EXIT_VERIFY


def _num(value) -> str:
    return "-" if value is None else f"{value:.6g}"


COMMANDS = {
    "binary-curve": cmd_binary_curve,
    "sweep": cmd_sweep,
    "ib-sweep": cmd_ib_sweep,
    "verify": cmd_verify,
}


# ── Parser ──


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--output", "-o", default=None, help="Output file path")
    common.add_argument("--seed", type=int, default=0, help="Random seed (unsigned 64-bit)")
    common.add_argument("--workers", type=int, default=1, help="Worker processes for subproblems")
    common.add_argument("--gap-tol", type=float, default=GAP_TOL, help="Barrier duality-gap tolerance")
    common.add_argument("--feasibility-tol", type=float, default=FEASIBILITY_TOL,
                        help="Phase-1 feasibility tolerance")
    common.add_argument("--verbose", "-v", action="store_true", help="Debug logging")
    return common


def _instance_options() -> argparse.ArgumentParser:
    opts = argparse.ArgumentParser(add_help=False)
    opts.add_argument("instance", help="Instance JSON file")
    opts.add_argument("--cost-param", action="append", default=[], metavar="NAME=VALUE",
                      help="Value for a named cost entry (repeatable)")
    return opts


def build_parser() -> argparse.ArgumentParser:
    common = _common_options()
    with_instance = _instance_options()
    parser = _Parser(
        prog="main.py",
        description="Optimal compression channels for classification under a cost budget",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("binary-curve", parents=[common], help="Closed-form binary tradeoff curve")
    p.add_argument("--p1", type=float, required=True, help="Generation channel crossover in [0, 1/2)")
    p.add_argument("--grid-size", type=int, default=DEFAULT_GRID_SIZE, help="Number of p2 points")

    p = sub.add_parser("sweep", parents=[common, with_instance], help="Optimal rate over a budget grid")
    p.add_argument("--budget-grid", required=True, metavar="MIN:MAX:COUNT",
                   help="Linearly spaced budgets")
    p.add_argument("--no-canonical", action="store_true", help="Enumerate all m^l decoder maps")
    p.add_argument("--verify", action="store_true", help="Cross-check every point with grid search")
    p.add_argument("--step", type=float, default=None, help="Grid step for --verify")

    p = sub.add_parser("ib-sweep", parents=[common, with_instance], help="Information Bottleneck baseline")
    p.add_argument("--beta-grid", default=None, metavar="MIN:MAX:COUNT",
                   help="Log-spaced betas (default: 0 plus 40 values in [0.01, 1000])")
    p.add_argument("--restarts", type=int, default=ib_baseline.RESTARTS, help="Random restarts per beta")

    p = sub.add_parser("verify", parents=[common, with_instance], help="Check the solver against oracles")
    p.add_argument("--budget", type=float, required=True, help="Cost budget")
    p.add_argument("--step", type=float, default=None, help="Grid search step")
    p.add_argument("--samples", type=int, default=DEFAULT_SAMPLES, help="Monte Carlo samples")
    p.add_argument("--no-canonical", action="store_true", help="Enumerate all m^l decoder maps")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
    )
    try:
        config = RunConfig.from_args(args)
        if config.command != "verify" and config.output_path is None:
            raise ValidationError(f"{config.command} needs --output")
        return COMMANDS[config.command](config)
    except OSError as e:
        print(f"ERROR: {e}", file=sys.stderr)
        return EXIT_IO
    except ValueError as e:
        # ValidationError, BelowBayesFloorError, DecoderSpaceTooLarge, OracleRefusal
        print(f"ERROR: {e}", file=sys.stderr)
        return EXIT_USAGE
