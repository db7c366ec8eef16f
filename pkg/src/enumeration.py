"""Global solution by enumerating decoder maps, plus budget sweeps.

Fixing the decoder map makes the design problem convex; the global optimum
is the best of the per-decoder optima. Relabeling compressed letters maps
feasible channels to feasible channels with the same rate and cost, so only
non-decreasing decoder maps need to be solved (canonical enumeration).
"""

import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations_with_replacement, product
from math import comb

import numpy as np

from src.probability import (
    CompressionChannel,
    DecoderMap,
    ProblemInstance,
    ValidationError,
    bayes_floor,
    uninformative_cost,
)
from src.subproblem import (
    DEFAULT_SETTINGS,
    NumericalFailure,
    SolveResult,
    SolverSettings,
    Status,
    SubproblemSpec,
    solve_subproblem,
)

logger = logging.getLogger(__name__)

MAX_DECODERS = 10**6
TIE_TOL = 1e-9  # results this close in rate are tied; the smaller decoder wins
RATE_TOL = 1e-3
BISECTION_TOL = 1e-7
MAX_BISECTIONS = 60


class DecoderSpaceTooLarge(ValueError):
    """Raised when the number of decoder maps exceeds MAX_DECODERS."""


@dataclass(frozen=True, eq=False)
class GlobalResult:
    best: SolveResult
    decoder: DecoderMap | None
    subproblems_solved: int
    subproblems_infeasible: int

    @property
    def status(self) -> Status:
        return self.best.status

    @property
    def mi(self) -> float | None:
        return self.best.mi


@dataclass(frozen=True, eq=False)
class TradeoffPoint:
    budget: float
    status: Status
    mi: float | None = None
    achieved_budget: float | None = None
    decoder: DecoderMap | None = None
    channel: CompressionChannel | None = None
    kkt_residual: float | None = None
    message: str = ""


@dataclass(frozen=True, eq=False)
class TradeoffCurve:
    points: list[TradeoffPoint]
    metadata: dict = field(default_factory=dict)

    def optimal_points(self) -> list[TradeoffPoint]:
        return [p for p in self.points if p.status is Status.OPTIMAL]


def enumerate_decoders(m: int, l: int, canonical: bool = True) -> list[DecoderMap]:
    """All m^l decoder maps in lexicographic order, or one non-decreasing map per relabeling class."""
    if m < 1 or l < 1:
        raise ValidationError(f"need m >= 1 and l >= 1, got m={m}, l={l}")
    count = comb(m + l - 1, l) if canonical else m**l
    if count > MAX_DECODERS:
        hint = "" if canonical else "; enable canonical pruning"
        raise DecoderSpaceTooLarge(f"{count} decoder maps exceed the limit of {MAX_DECODERS}{hint}")
    if canonical:
        maps = combinations_with_replacement(range(m), l)
    else:
        maps = product(range(m), repeat=l)
    return [DecoderMap(a) for a in maps]


def instance_digest(instance: ProblemInstance) -> str:
    doc = {
        "prior": instance.prior.probs.tolist(),
        "generation": instance.generation.matrix.tolist(),
        "compressed_size": instance.compressed_size,
        "cost": instance.cost.matrix.tolist(),
    }
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]


def _solve_one(args) -> SolveResult:
    instance, decoder, budget, settings = args
    return solve_subproblem(SubproblemSpec(instance, decoder, budget), settings)


def _run_all(tasks: list, workers: int) -> list[SolveResult]:
    """Solve tasks in order; results land in the slot of their task."""
    if workers <= 1 or len(tasks) <= 1:
        return [_solve_one(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_solve_one, tasks))


def _reduce(results: list[SolveResult]) -> GlobalResult:
    failed = [r for r in results if r.status is Status.NUMERICAL_FAILURE]
    optimal = [r for r in results if r.is_optimal]
    infeasible = sum(r.status is Status.INFEASIBLE for r in results)
    if failed:
        # mi >= 0: a certified zero rate is optimal whatever the failed decoders hold
        if not optimal or min(r.mi for r in optimal) > TIE_TOL:
            r = failed[0]
            raise NumericalFailure(
                f"subproblem for decoder {r.decoder.assignment} failed: {r.message}", r.decoder
            )
        logger.warning("ignoring %d failed subproblem(s): a zero-rate decoder is certified", len(failed))
    if not optimal:
        best = SolveResult(Status.INFEASIBLE, results[0].decoder if results else DecoderMap(()),
                           message="every decoder subproblem is infeasible")
        return GlobalResult(best, None, len(results), infeasible)
    lowest = min(r.mi for r in optimal)
    tied = [r for r in optimal if r.mi <= lowest + TIE_TOL]
    best = min(tied, key=lambda r: r.decoder.assignment)
    return GlobalResult(best, best.decoder, len(results), infeasible)


def global_solve(
    instance: ProblemInstance,
    budget: float,
    canonical: bool = True,
    workers: int = 1,
    settings: SolverSettings = DEFAULT_SETTINGS,
) -> GlobalResult:
    """Minimum I(X; X~) over all channels whose optimal decoding cost is within budget."""
    if not np.isfinite(budget) or budget < 0:
        raise ValidationError(f"budget must be a nonnegative number, got {budget!r}")
    decoders = enumerate_decoders(instance.m, instance.l, canonical)
    tasks = [(instance, d, float(budget), settings) for d in decoders]
    result = _reduce(_run_all(tasks, workers))
    logger.debug("budget %.6g: status=%s mi=%s decoder=%s", budget, result.status.value,
                 result.mi, result.decoder)
    return result


def sweep(
    instance: ProblemInstance,
    budgets,
    canonical: bool = True,
    workers: int = 1,
    settings: SolverSettings = DEFAULT_SETTINGS,
) -> TradeoffCurve:
    """One global solve per budget; failures are recorded per point and the sweep continues."""
    budgets = [float(b) for b in budgets]
    if any(b < 0 or not np.isfinite(b) for b in budgets):
        raise ValidationError("budgets must be nonnegative numbers")
    if any(b2 <= b1 for b1, b2 in zip(budgets, budgets[1:])):
        raise ValidationError("budgets must be strictly increasing")

    decoders = enumerate_decoders(instance.m, instance.l, canonical)
    tasks = [(instance, d, b, settings) for b in budgets for d in decoders]
    results = _run_all(tasks, workers)

    points = []
    for i, budget in enumerate(budgets):
        chunk = results[i * len(decoders):(i + 1) * len(decoders)]
        try:
            g = _reduce(chunk)
        except NumericalFailure as e:
            logger.warning("budget %.6g: %s", budget, e)
            points.append(TradeoffPoint(budget, Status.NUMERICAL_FAILURE, message=str(e)))
            continue
        points.append(TradeoffPoint(
            budget=budget,
            status=g.status,
            mi=g.best.mi,
            achieved_budget=g.best.achieved_budget,
            decoder=g.decoder,
            channel=g.best.channel,
            kkt_residual=g.best.kkt_residual,
            message=g.best.message,
        ))

    metadata = {
        "instance_digest": instance_digest(instance),
        "canonical": canonical,
        "gap_tol": settings.gap_tol,
        "feasibility_tol": settings.feasibility_tol,
        "kkt_tol": settings.kkt_tol,
        "decoders_per_budget": len(decoders),
    }
    return TradeoffCurve(points, metadata)


def budget_range(instance: ProblemInstance) -> tuple[float, float]:
    """(Bayes floor, cost of the best constant guess): the interesting budget interval."""
    return bayes_floor(instance), uninformative_cost(instance)


def cost_at_rate(
    instance: ProblemInstance,
    rate: float,
    rate_tol: float = RATE_TOL,
    canonical: bool = True,
    settings: SolverSettings = DEFAULT_SETTINGS,
) -> tuple[float, GlobalResult]:
    """Smallest optimal cost whose rate is within rate_tol of ``rate`` (bisection on the budget)."""
    if rate < 0:
        raise ValidationError(f"rate must be nonnegative, got {rate!r}")
    low, high = budget_range(instance)

    def meets(budget):
        result = global_solve(instance, budget, canonical=canonical, settings=settings)
        return result.best.is_optimal and result.mi <= rate + rate_tol, result

    ok, best = meets(low)
    if ok:
        return best.best.achieved_budget, best
    ok, best = meets(high)
    if not ok:
        raise NumericalFailure(f"no optimal solution at the uninformative budget {high!r}")

    for _ in range(MAX_BISECTIONS):
        if high - low <= BISECTION_TOL:
            break
        mid = (low + high) / 2
        ok, result = meets(mid)
        if ok:
            high, best = mid, result
        else:
            low = mid
    return best.best.achieved_budget, best
