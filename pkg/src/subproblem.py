"""Minimize I(X; X~) over the compression channel for one fixed decoder map.

For a fixed decoder every constraint (budget, row simplex, decoder
consistency) is linear in the channel and the objective is convex, so the
program is solved by a log-barrier interior-point method with Newton
centering. Each row is parametrized by its first l-1 entries; the last
entry is one minus their sum.
"""

import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.optimize import nnls

from src.probability import (
    CompressionChannel,
    DecoderMap,
    ProblemInstance,
    ValidationError,
    compression_rate,
    data_marginal,
    decoder_violation,
    expected_cost,
)

logger = logging.getLogger(__name__)

LN2 = np.log(2.0)

GAP_TOL = 1e-9  # barrier stops once (constraint rows) / t is below this
FEASIBILITY_TOL = 1e-8
BUDGET_TOL = 1e-7
CONSISTENCY_TOL = 1e-8
KKT_TOL = 1e-6
MAX_INNER_ITERATIONS = 10_000
BARRIER_FACTOR = 10.0
RELAXATION = 2e-9
Q_FLOOR = 1e-12  # solver iterates keep every channel entry at or above this
START_SHIFT = 1e-3

# Centering works on the barrier function divided by its weight t, so values stay O(1).
CENTERING_TOL = 1e-12  # on lambda^2 / 2 of the scaled function
STALL_TOL = 1e-8  # same measure, accepted once the line search cannot make progress
PURE_NEWTON_DECREMENT = 0.04  # on the unscaled lambda^2
ARMIJO_ALPHA = 0.01
ARMIJO_BETA = 0.5
MIN_STEP = 1e-14
VALUE_NOISE = 1e-12

PHASE1_GAP_TOL = 1e-11

MAX_RETRIES = 3
RETRY_BACKOFF = 100.0  # STALL_TOL multiplied by this on each retry


class Status(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    NUMERICAL_FAILURE = "numerical-failure"


class NumericalFailure(RuntimeError):
    """Solver tolerances were not reached; never reported as an optimum."""

    def __init__(self, message: str, decoder: DecoderMap | None = None):
        super().__init__(message)
        self.decoder = decoder


@dataclass(frozen=True)
class SolverSettings:
    gap_tol: float = GAP_TOL
    feasibility_tol: float = FEASIBILITY_TOL
    kkt_tol: float = KKT_TOL
    max_inner_iterations: int = MAX_INNER_ITERATIONS

    def __post_init__(self):
        for name in ("gap_tol", "feasibility_tol", "kkt_tol"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive, got {getattr(self, name)!r}")
        if self.max_inner_iterations < 1:
            raise ValidationError("max_inner_iterations must be at least 1")


DEFAULT_SETTINGS = SolverSettings()


@dataclass(frozen=True, eq=False)
class SubproblemSpec:
    instance: ProblemInstance
    decoder: DecoderMap
    budget: float

    def __post_init__(self):
        if len(self.decoder) != self.instance.l:
            raise ValidationError(
                f"decoder has {len(self.decoder)} entries but compressed_size is {self.instance.l}"
            )
        self.decoder.check_labels(self.instance.m)
        if not np.isfinite(self.budget) or self.budget < 0:
            raise ValidationError(f"budget must be a nonnegative number, got {self.budget!r}")


@dataclass(frozen=True, eq=False)
class SolveResult:
    status: Status
    decoder: DecoderMap
    channel: CompressionChannel | None = None
    mi: float | None = None
    achieved_budget: float | None = None
    kkt_residual: float | None = None
    iterations: int = 0
    message: str = ""

    @property
    def is_optimal(self) -> bool:
        return self.status is Status.OPTIMAL


@dataclass(frozen=True, eq=False)
class FeasibilityResult:
    feasible: bool
    witness: CompressionChannel | None
    violation: float  # smallest max constraint violation found (upper bound)
    lower_bound: float  # certified lower bound on that minimum
    iterations: int = 0


# ── Objective ──


def rate_gradient(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """dI/dQ(k|j) = p_j log2(Q(k|j) / p(x~_k)), entries clamped at Q_FLOOR."""
    qc = np.maximum(q, Q_FLOOR)
    r = p @ qc
    return p[:, None] * np.log(qc / r[None, :]) / LN2


def _rate_value(p: np.ndarray, q: np.ndarray) -> float:
    qc = np.maximum(q, Q_FLOOR)
    r = p @ qc
    return float((p[:, None] * qc * np.log(qc / r[None, :])).sum() / LN2)


def _rate_hessian(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    n, l = q.shape
    qc = np.maximum(q, Q_FLOOR)
    r = p @ qc
    hess = np.zeros((n, l, n, l))
    outer = np.outer(p, p)
    for k in range(l):
        hess[:, k, :, k] = np.diag(p / qc[:, k]) - outer / r[k]
    return hess.reshape(n * l, n * l) / LN2


# ── Constraint system in the reduced coordinates ──


class _Program:
    """Rows G z <= h: Q >= Q_FLOOR first, then the budget row, then decoder-consistency rows."""

    def __init__(self, spec: SubproblemSpec):
        inst = spec.instance
        n, l, m = inst.n, inst.l, inst.m
        self.n, self.l = n, l
        self.p = data_marginal(inst)
        decoder = np.array(spec.decoder.assignment)

        # Q.ravel() = q0 + M z
        self.q0 = np.zeros((n, l))
        self.q0[:, l - 1] = 1.0
        self.M = np.zeros((n * l, n * (l - 1)))
        for j in range(n):
            for k in range(l - 1):
                col = j * (l - 1) + k
                self.M[j * l + k, col] = 1.0
                self.M[j * l + l - 1, col] = -1.0

        coefs, rhs, tols = [], [], []
        for j in range(n):
            for k in range(l):
                c = np.zeros((n, l))
                c[j, k] = -1.0
                coefs.append(c)
                rhs.append(-Q_FLOOR)
                tols.append(Q_FLOOR)
        self.n_nonneg = len(coefs)

        weights = inst.risk_weights  # n x m
        coefs.append(weights[:, decoder])
        rhs.append(float(spec.budget))
        tols.append(BUDGET_TOL)

        for k in range(l):
            for y in range(m):
                if y == decoder[k]:
                    continue
                c = np.zeros((n, l))
                c[:, k] = weights[:, decoder[k]] - weights[:, y]
                coefs.append(c)
                rhs.append(0.0)
                tols.append(CONSISTENCY_TOL)

        flat = np.array([c.ravel() for c in coefs])
        self.G = flat @ self.M
        self.h = np.array(rhs) - flat @ self.q0.ravel()
        self.tolerances = np.array(tols)
        self.rows = self.G.shape[0]
        self.soft = np.arange(self.n_nonneg, self.rows)

    def q_from_z(self, z: np.ndarray) -> np.ndarray:
        return (self.q0.ravel() + self.M @ z).reshape(self.n, self.l)

    def z_from_q(self, q: np.ndarray) -> np.ndarray:
        return q[:, : self.l - 1].ravel().copy()

    def barycenter(self) -> np.ndarray:
        return np.full(self.n * (self.l - 1), 1.0 / self.l)

    def soft_violation(self, z: np.ndarray) -> float:
        return float((self.G[self.soft] @ z - self.h[self.soft]).max())

    def rate_grad_z(self, z: np.ndarray) -> np.ndarray:
        return self.M.T @ rate_gradient(self.p, self.q_from_z(z)).ravel()


def _newton_direction(hess: np.ndarray, grad: np.ndarray) -> np.ndarray:
    diag = np.maximum(np.abs(np.diag(hess)), 1e-300)
    scale = 1.0 / np.sqrt(diag)
    scaled = hess * scale[:, None] * scale[None, :]
    try:
        y = np.linalg.solve(scaled, -grad * scale)
    except np.linalg.LinAlgError:
        y = np.linalg.lstsq(scaled, -grad * scale, rcond=None)[0]
    return y * scale


def _newton_centering(evaluate, inside, x: np.ndarray, weight: float, stall_tol: float, max_iter: int):
    """Damped Newton on evaluate(x) -> (value, grad, hess) of a barrier function divided by weight.

    Converged once lambda^2 / 2 of the scaled function is within CENTERING_TOL,
    or within stall_tol when no step decreases the value any more. Full steps
    are tried while the unscaled decrement, weight * lambda^2, is small.
    Returns (x, iterations, converged).
    """
    value, grad, hess = evaluate(x)
    for it in range(max_iter):
        direction = _newton_direction(hess, grad)
        decrement = float(-grad @ direction)
        if decrement < 0:
            # rounding broke definiteness; fall back to scaled steepest descent
            direction = -grad / np.maximum(np.abs(np.diag(hess)), 1e-300)
            decrement = float(-grad @ direction)
        if decrement / 2 <= CENTERING_TOL:
            if inside(x + direction):
                x = x + direction  # final pure Newton step
            return x, it + 1, True

        step = 1.0
        while step >= MIN_STEP and not inside(x + step * direction):
            step *= ARMIJO_BETA

        accepted = None
        if step == 1.0 and weight * decrement <= PURE_NEWTON_DECREMENT:
            candidate = evaluate(x + direction)
            if candidate[0] <= value + VALUE_NOISE * (1 + abs(value)):
                accepted = candidate
        while accepted is None and step >= MIN_STEP:
            candidate = evaluate(x + step * direction)
            if candidate[0] <= value - ARMIJO_ALPHA * step * decrement:
                accepted = candidate
            else:
                step *= ARMIJO_BETA

        if accepted is None:
            # no progress possible at machine precision
            return x, it, decrement / 2 <= stall_tol
        x = x + step * direction
        value, grad, hess = accepted
    return x, max_iter, False


def _barrier_terms(G: np.ndarray, slack: np.ndarray):
    inv = 1.0 / slack
    return -np.log(slack).sum(), G.T @ inv, (G.T * inv**2) @ G


# ── Phase 1 ──


def _phase_one(prog: _Program, settings: SolverSettings, decoder: DecoderMap, stall_tol: float):
    """Minimize the largest budget/consistency violation. Returns (z, upper, lower, iterations)."""
    z = prog.barycenter()
    soft = prog.soft
    s0 = prog.soft_violation(z)
    x = np.append(z, s0 + 1.0)

    # rows in (z, s): soft rows G z - s <= h, floor rows G z <= h
    G1 = np.zeros((prog.rows, x.size))
    G1[:, :-1] = prog.G
    G1[soft, -1] = -1.0
    h1 = prog.h
    objective = np.zeros(x.size)
    objective[-1] = 1.0

    def inside(v):
        return bool(np.all(h1 - G1 @ v > 0))

    t, total = 1.0, 0
    upper, lower = s0, -np.inf
    while True:
        def evaluate(v, t=t):
            slack = h1 - G1 @ v
            b_val, b_grad, b_hess = _barrier_terms(G1, slack)
            return v[-1] + b_val / t, objective + b_grad / t, b_hess / t

        x, its, ok = _newton_centering(evaluate, inside, x, t, stall_tol, settings.max_inner_iterations)
        total += its
        if not ok:
            raise NumericalFailure(f"phase-1 centering stalled at t={t:.3g}", decoder)
        upper = prog.soft_violation(x[:-1])
        lower = x[-1] - prog.rows / t
        logger.debug("phase-1 t=%.3g upper=%.3g lower=%.3g", t, upper, lower)
        if upper <= RELAXATION / 2 or lower > settings.feasibility_tol:
            break
        if prog.rows / t <= PHASE1_GAP_TOL:
            break
        t *= BARRIER_FACTOR
    return x[:-1], upper, lower, total


def _feasibility(prog: _Program, settings: SolverSettings, decoder: DecoderMap, stall_tol: float):
    """Returns (feasible, z, upper, lower, iterations)."""
    z = prog.barycenter()
    upper = prog.soft_violation(z)
    if upper <= RELAXATION / 2:
        return True, z, upper, -np.inf, 0
    z, upper, lower, its = _phase_one(prog, settings, decoder, stall_tol)
    if lower > settings.feasibility_tol:
        return False, None, upper, lower, its
    if upper <= settings.feasibility_tol:
        return True, z, upper, lower, its
    raise NumericalFailure(
        f"phase-1 could not separate feasibility (upper {upper:.3g}, lower {lower:.3g})", decoder
    )


def check_feasibility(spec: SubproblemSpec, settings: SolverSettings = DEFAULT_SETTINGS) -> FeasibilityResult:
    """Decide whether any channel meets the budget with the decoder consistent."""
    if spec.instance.l == 1:
        return _single_letter_feasibility(spec, settings)
    prog = _Program(spec)
    feasible, z, upper, lower, its = _with_retry(
        lambda stall_tol: _feasibility(prog, settings, spec.decoder, stall_tol)
    )
    witness = CompressionChannel(_clean(prog.q_from_z(z))) if feasible else None
    return FeasibilityResult(feasible, witness, upper, lower, its)


def _single_letter_feasibility(spec: SubproblemSpec, settings: SolverSettings) -> FeasibilityResult:
    channel = CompressionChannel.constant(spec.instance.n, 1)
    violation = max(
        expected_cost(spec.instance, channel, spec.decoder) - spec.budget,
        decoder_violation(spec.instance, channel, spec.decoder),
    )
    feasible = violation <= settings.feasibility_tol
    return FeasibilityResult(feasible, channel if feasible else None, violation, violation)


# ── Main solve ──


def _clean(q: np.ndarray) -> np.ndarray:
    q = np.clip(q, 0.0, 1.0)
    return q / q.sum(axis=1, keepdims=True)


def _relaxation(upper: float, settings: SolverSettings) -> float:
    if upper <= RELAXATION / 2:
        return RELAXATION
    return (upper + settings.feasibility_tol) / 2


def _start_point(prog: _Program, z_witness: np.ndarray, h: np.ndarray) -> np.ndarray:
    shifted = z_witness + START_SHIFT * (prog.barycenter() - z_witness)
    if np.all(h - prog.G @ shifted > 0):
        return shifted
    return z_witness


def _barrier_solve(prog: _Program, z: np.ndarray, h: np.ndarray, settings: SolverSettings,
                   decoder: DecoderMap, stall_tol: float):
    def inside(v):
        return bool(np.all(h - prog.G @ v > 0))

    t, total = 1.0, 0
    while True:
        def evaluate(v, t=t):
            q = prog.q_from_z(v)
            slack = h - prog.G @ v
            b_val, b_grad, b_hess = _barrier_terms(prog.G, slack)
            value = _rate_value(prog.p, q) + b_val / t
            grad = prog.M.T @ rate_gradient(prog.p, q).ravel() + b_grad / t
            hess = prog.M.T @ _rate_hessian(prog.p, q) @ prog.M + b_hess / t
            return value, grad, hess

        z, its, ok = _newton_centering(evaluate, inside, z, t, stall_tol, settings.max_inner_iterations)
        total += its
        if not ok:
            raise NumericalFailure(f"centering did not converge at t={t:.3g}", decoder)
        logger.debug("barrier t=%.3g iterations=%d", t, its)
        if prog.rows / t <= settings.gap_tol:
            return z, total
        t *= BARRIER_FACTOR


def stall_tolerance(attempt: int) -> float:
    return STALL_TOL * RETRY_BACKOFF**attempt


def _with_retry(run):
    """Call run(stall_tol), loosening the stall tolerance after each NumericalFailure.

    Barrier results still go through _certify afterwards.
    """
    last_exc = None
    for attempt in range(MAX_RETRIES):
        try:
            return run(stall_tolerance(attempt))
        except NumericalFailure as e:
            last_exc = e
            logger.info("numerical failure (%s), attempt %d/%d", e, attempt + 1, MAX_RETRIES)
    raise last_exc


def _solve_single_letter(spec: SubproblemSpec, settings: SolverSettings) -> SolveResult:
    check = _single_letter_feasibility(spec, settings)
    if not check.feasible:
        return SolveResult(Status.INFEASIBLE, spec.decoder, message="single-letter channel infeasible")
    cost = expected_cost(spec.instance, check.witness, spec.decoder)
    return SolveResult(Status.OPTIMAL, spec.decoder, check.witness, 0.0, cost, 0.0)


def solve_subproblem(spec: SubproblemSpec, settings: SolverSettings = DEFAULT_SETTINGS) -> SolveResult:
    """Minimum-rate channel for which spec.decoder is an optimal decoder within the budget."""
    if spec.instance.l == 1:
        return _solve_single_letter(spec, settings)
    prog = _Program(spec)
    try:
        feasible, z_witness, upper, lower, phase1_its = _with_retry(
            lambda stall_tol: _feasibility(prog, settings, spec.decoder, stall_tol)
        )
    except NumericalFailure as e:
        return SolveResult(Status.NUMERICAL_FAILURE, spec.decoder, message=str(e))
    if not feasible:
        return SolveResult(
            Status.INFEASIBLE, spec.decoder, iterations=phase1_its,
            message=f"minimum constraint violation >= {lower:.3g}",
        )

    relaxed_h = prog.h.copy()
    relaxed_h[prog.soft] += _relaxation(upper, settings)
    start = _start_point(prog, z_witness, relaxed_h)

    try:
        z, its = _with_retry(
            lambda stall_tol: _barrier_solve(prog, start, relaxed_h, settings, spec.decoder, stall_tol)
        )
        return _certify(spec, prog, z, its + phase1_its, settings)
    except NumericalFailure as e:
        return SolveResult(Status.NUMERICAL_FAILURE, spec.decoder, message=str(e))


def _certify(spec: SubproblemSpec, prog: _Program, z: np.ndarray, iterations: int,
             settings: SolverSettings) -> SolveResult:
    channel = CompressionChannel(_clean(prog.q_from_z(z)))
    achieved = expected_cost(spec.instance, channel, spec.decoder)
    if achieved > spec.budget + BUDGET_TOL:
        raise NumericalFailure(f"budget exceeded: {achieved!r} > {spec.budget!r}", spec.decoder)
    violation = decoder_violation(spec.instance, channel, spec.decoder)
    if violation > CONSISTENCY_TOL:
        raise NumericalFailure(f"decoder consistency violated by {violation:.3g}", spec.decoder)
    residual = kkt_residual(spec, channel)
    if residual > settings.kkt_tol:
        raise NumericalFailure(f"KKT residual {residual:.3g} above {settings.kkt_tol:.3g}", spec.decoder)
    mi = compression_rate(spec.instance, channel)
    logger.debug("decoder %s: mi=%.9f cost=%.9f kkt=%.2g", spec.decoder.assignment, mi, achieved, residual)
    return SolveResult(Status.OPTIMAL, spec.decoder, channel, mi, achieved, residual, iterations)


def kkt_residual(spec: SubproblemSpec, channel: CompressionChannel) -> float:
    """Stationarity/complementarity residual with least-squares nonnegative multipliers.

    Also reports primal violation beyond the solver tolerances, so the value is
    zero only at a feasible KKT point.
    """
    if spec.instance.l == 1:
        return 0.0
    prog = _Program(spec)
    z = prog.z_from_q(channel.matrix)
    grad = prog.rate_grad_z(z)
    slack = prog.h - prog.G @ z
    system = np.vstack([prog.G.T, np.diag(np.maximum(slack, 0.0))])
    target = np.concatenate([-grad, np.zeros(prog.rows)])
    _, residual = nnls(system, target, maxiter=50 * prog.rows)
    violation = float(np.maximum(-slack - prog.tolerances, 0.0).max())
    return max(float(residual), violation)
