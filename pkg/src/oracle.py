"""Independent checks for the solver: exhaustive grid search, Monte Carlo cost
estimation and finite-difference gradient checks."""

import logging
from dataclasses import dataclass
from itertools import combinations_with_replacement
from math import comb

import numpy as np
from scipy.special import rel_entr

from src.probability import (
    CompressionChannel,
    DecoderMap,
    ProblemInstance,
    ValidationError,
    data_marginal,
)
from src.subproblem import rate_gradient

logger = logging.getLogger(__name__)

LN2 = np.log(2.0)

MAX_GRID_CELLS = 6  # n * l
MAX_GRID_POINTS = 10**8
GRID_TOL = 1e-9
CHUNK_SIZE = 50_000
BATCH_SIZE = 100_000
STEP_TOL = 1e-9
RELATIVE_FLOOR = 1e-12  # gradient entries below this are compared on this absolute scale


class OracleRefusal(ValueError):
    """Raised when an instance is too large for exhaustive checking."""


@dataclass(frozen=True, eq=False)
class GridSearchReport:
    step: float
    best_mi: float | None
    best_channel: CompressionChannel | None
    feasible_count: int
    evaluated_count: int
    best_cost: float | None = None
    decoder: DecoderMap | None = None

    @property
    def feasible(self) -> bool:
        return self.feasible_count > 0


# ── Grid search ──


def _divisions(step: float) -> int:
    if not 0 < step <= 1:
        raise ValidationError(f"step must lie in (0, 1], got {step!r}")
    k = round(1.0 / step)
    if abs(k * step - 1.0) > STEP_TOL:
        raise ValidationError(f"step {step!r} does not divide 1")
    return k


def simplex_grid(l: int, divisions: int) -> np.ndarray:
    """All points of the l-simplex whose coordinates are multiples of 1/divisions."""
    rows = []
    # bars-and-stars: positions of l-1 bars among divisions + l - 1 slots
    for bars in combinations_with_replacement(range(divisions + 1), l - 1):
        edges = (0,) + bars + (divisions,)
        rows.append([edges[i + 1] - edges[i] for i in range(l)])
    return np.array(rows, dtype=np.float64) / divisions


def grid_size(n: int, l: int, step: float) -> int:
    return comb(_divisions(step) + l - 1, l - 1) ** n


def _chunk_metrics(p: np.ndarray, risk_weights: np.ndarray, q: np.ndarray):
    """Rates (bits) and (B, l, m) letter risks for a batch of channels q of shape (B, n, l)."""
    used = p > 0
    r = np.einsum("j,bjk->bk", p, q)
    kl = rel_entr(q[:, used, :], r[:, None, :]).sum(axis=2)
    mi = np.maximum(kl @ p[used] / LN2, 0.0)
    risks = np.einsum("bjk,jm->bkm", q, risk_weights)
    return mi, risks


def grid_search(
    instance: ProblemInstance,
    budget: float,
    step: float,
    decoder: DecoderMap | None = None,
) -> GridSearchReport:
    """Minimum I(X; X~) over grid channels whose min-cost decoding meets the budget.

    With ``decoder`` given, only channels for which that decoder is consistent
    (within GRID_TOL) and meets the budget count as feasible.
    """
    n, l = instance.n, instance.l
    if n * l > MAX_GRID_CELLS:
        raise OracleRefusal(f"grid search needs n*l <= {MAX_GRID_CELLS}, got {n}*{l} = {n * l}")
    divisions = _divisions(step)
    total = comb(divisions + l - 1, l - 1) ** n
    if total > MAX_GRID_POINTS:
        raise OracleRefusal(f"grid of {total} channels exceeds {MAX_GRID_POINTS}; use a coarser step")
    if decoder is not None:
        if len(decoder) != l:
            raise ValidationError(f"decoder has {len(decoder)} entries but compressed_size is {l}")
        decoder.check_labels(instance.m)

    rows = simplex_grid(l, divisions)
    p = data_marginal(instance)
    weights = instance.risk_weights
    best_mi, best_q, best_cost = np.inf, None, None
    feasible_count = 0
    letters = np.arange(l)

    for start in range(0, total, CHUNK_SIZE):
        index = np.arange(start, min(start + CHUNK_SIZE, total))
        digits = np.unravel_index(index, (len(rows),) * n)
        q = np.stack([rows[d] for d in digits], axis=1)
        mi, risks = _chunk_metrics(p, weights, q)
        lowest = risks.min(axis=2)
        if decoder is None:
            cost = lowest.sum(axis=1)
            ok = cost <= budget + GRID_TOL
        else:
            declared = risks[:, letters, decoder.assignment]
            cost = declared.sum(axis=1)
            ok = (cost <= budget + GRID_TOL) & ((declared - lowest).max(axis=1) <= GRID_TOL)
        feasible_count += int(ok.sum())
        if ok.any():
            candidates = np.flatnonzero(ok)
            winner = candidates[np.argmin(mi[candidates])]
            if mi[winner] < best_mi:
                best_mi, best_q, best_cost = float(mi[winner]), q[winner], float(cost[winner])

    logger.debug("grid search step=%g: %d of %d channels feasible", step, feasible_count, total)
    if best_q is None:
        return GridSearchReport(step, None, None, 0, total, decoder=decoder)
    return GridSearchReport(step, best_mi, CompressionChannel(best_q), feasible_count, total,
                            best_cost, decoder)


# ── Monte Carlo ──


def _inverse_cdf(cdf: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Row-wise inverse CDF sampling: cdf is (batch, k) with last column 1."""
    return (cdf <= u[:, None]).sum(axis=1)


def _cdf(rows: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(rows, axis=-1)
    cdf[..., -1] = 1.0
    return cdf


def monte_carlo_error(
    instance: ProblemInstance,
    channel: CompressionChannel,
    decoder: DecoderMap,
    samples: int,
    seed: int = 0,
) -> tuple[float, float]:
    """Sampled expected cost of decoding label -> data -> compressed letter chains.

    Returns (estimate, standard error). Draws come from numpy's PCG64
    generator in fixed-size batches, so results are reproducible given seed.
    """
    if samples < 1:
        raise ValidationError(f"samples must be at least 1, got {samples!r}")
    if channel.shape != (instance.n, instance.l):
        raise ValidationError(f"channel must be {instance.n}x{instance.l}, got {channel.shape}")
    if len(decoder) != instance.l:
        raise ValidationError(f"decoder has {len(decoder)} entries but compressed_size is {instance.l}")
    decoder.check_labels(instance.m)

    rng = np.random.default_rng(seed)
    label_cdf = _cdf(instance.prior.probs)
    data_cdf = _cdf(instance.generation.matrix)
    letter_cdf = _cdf(channel.matrix)
    decoded = np.array(decoder.assignment)
    cost = instance.cost.matrix

    total, total_sq = 0.0, 0.0
    remaining = samples
    while remaining > 0:
        size = min(BATCH_SIZE, remaining)
        u = rng.random((3, size))
        labels = np.searchsorted(label_cdf, u[0], side="right")
        data = _inverse_cdf(data_cdf[labels], u[1])
        letters = _inverse_cdf(letter_cdf[data], u[2])
        costs = cost[labels, decoded[letters]]
        total += float(costs.sum())
        total_sq += float((costs**2).sum())
        remaining -= size

    estimate = total / samples
    if samples == 1:
        return estimate, float("nan")
    variance = max(total_sq - samples * estimate**2, 0.0) / (samples - 1)
    return estimate, float(np.sqrt(variance / samples))


# ── Gradient check ──


def analytic_gradient(instance: ProblemInstance, channel: CompressionChannel) -> np.ndarray:
    """n x l matrix dI(X; X~)/dQ(k|j) in bits."""
    if channel.shape != (instance.n, instance.l):
        raise ValidationError(f"channel must be {instance.n}x{instance.l}, got {channel.shape}")
    return rate_gradient(data_marginal(instance), channel.matrix)


def _rate_unconstrained(p: np.ndarray, q: np.ndarray) -> float:
    """I(X; X~) as a function of every entry of q, rows not renormalized."""
    r = p @ q
    return float((p[:, None] * rel_entr(q, r[None, :])).sum() / LN2)


def numeric_gradient(instance: ProblemInstance, channel: CompressionChannel, h: float) -> np.ndarray:
    """Central differences of I(X; X~) entry by entry."""
    p = data_marginal(instance)
    q0 = channel.matrix
    grad = np.zeros_like(q0)
    for index in np.ndindex(q0.shape):
        q = q0.copy()
        q[index] = q0[index] + h
        plus = _rate_unconstrained(p, q)
        q[index] = q0[index] - h
        minus = _rate_unconstrained(p, q)
        grad[index] = (plus - minus) / (2 * h)
    return grad


def gradient_check(instance: ProblemInstance, channel: CompressionChannel, h: float = 1e-6) -> float:
    """Max entrywise relative error |analytic - numeric| / max(|analytic|, |numeric|, RELATIVE_FLOOR)."""
    if not h > 0:
        raise ValidationError(f"h must be positive, got {h!r}")
    if channel.matrix.min() < 10 * h:
        raise ValidationError(f"channel entries must be at least 10*h = {10 * h!r}")
    analytic = analytic_gradient(instance, channel)
    numeric = numeric_gradient(instance, channel, h)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), RELATIVE_FLOOR)
    error = float((np.abs(analytic - numeric) / scale).max())
    logger.debug("gradient check h=%g: max relative error %.3g", h, error)
    return error
