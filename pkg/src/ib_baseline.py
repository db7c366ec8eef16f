"""Information Bottleneck baseline evaluated under min-cost decoding.

Alternating self-consistent updates
    Q(k|j) ∝ r(k) 2^(-beta KL_bits(P(.|x_j) || P(.|x~_k)))
followed by refreshing r = p Q and P(y|x~), restarted from the barycenter and
from random rows; the lowest I(X;X~) - beta I(Y;X~) wins.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, rel_entr

from src.probability import (
    CompressionChannel,
    DecoderMap,
    ProblemInstance,
    ValidationError,
    compression_rate,
    data_marginal,
    expected_cost,
    induced_decoder,
    label_information,
)

logger = logging.getLogger(__name__)

CONVERGENCE_TOL = 1e-9
MAX_ITERATIONS = 10_000
RESTARTS = 10
OBJECTIVE_TIE_TOL = 1e-12
BETA_GRID_SIZE = 40
BETA_MIN = 0.01
BETA_MAX = 1000.0


@dataclass(frozen=True, eq=False)
class IBSolution:
    channel: CompressionChannel
    beta: float
    mi_x: float
    mi_y: float
    converged: bool
    restarts_used: int
    iterations: int = 0

    @property
    def objective(self) -> float:
        return ib_objective(self.mi_x, self.mi_y, self.beta)


@dataclass(frozen=True, eq=False)
class IBPoint:
    beta: float
    mi: float
    cost: float
    converged: bool
    decoder: DecoderMap


def ib_objective(mi_x: float, mi_y: float, beta: float) -> float:
    return mi_x - beta * mi_y


def default_beta_grid() -> list[float]:
    """beta = 0 followed by log-spaced values from 0.01 to 1000."""
    return [0.0] + np.logspace(np.log10(BETA_MIN), np.log10(BETA_MAX), BETA_GRID_SIZE).tolist()


def _label_given_data(instance: ProblemInstance) -> tuple[np.ndarray, np.ndarray]:
    """(p(x), n x m matrix P(y|x_j)); rows of letters with p(x_j) = 0 are zero."""
    p = data_marginal(instance)
    used = p > 0
    pycx = np.zeros((instance.n, instance.m))
    pycx[used] = instance.joint[:, used].T / p[used, None]
    return p, pycx


def ib_update(instance: ProblemInstance, q: np.ndarray, beta: float) -> np.ndarray:
    """One self-consistent step. Rows of zero-probability data letters are left unchanged."""
    p, pycx = _label_given_data(instance)
    return _update(instance, p, pycx, q, beta)


def _update(instance, p, pycx, q, beta):
    r = p @ q
    alive = r > 0
    log_r = np.full(r.shape, -np.inf)
    log_r[alive] = np.log(r[alive])
    if beta == 0:
        logits = np.broadcast_to(log_r, q.shape).copy()
    else:
        pycz = np.zeros((instance.m, q.shape[1]))
        pycz[:, alive] = (instance.joint @ q)[:, alive] / r[alive]
        # natural-log KL; exp(-beta KL_nats) = 2^(-beta KL_bits)
        kl = rel_entr(pycx[:, None, :], pycz.T[None, :, :]).sum(axis=2)
        logits = np.where(alive, log_r - beta * kl, -np.inf)
    norm = logsumexp(logits, axis=1, keepdims=True)
    new = np.exp(logits - norm)
    keep = (p == 0) | ~np.all(np.isfinite(new), axis=1)
    new[keep] = q[keep]
    return new


def _iterate(instance, p, pycx, q, beta, max_iterations):
    """Run updates until the max entry change is within CONVERGENCE_TOL. Returns (q, iterations, converged)."""
    for it in range(max_iterations):
        new = _update(instance, p, pycx, q, beta)
        if np.abs(new - q).max() <= CONVERGENCE_TOL:
            # q itself is the verified fixed point
            return q, it + 1, True
        q = new
    return q, max_iterations, False


def _initial_channels(n: int, l: int, restarts: int, seed: int) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    starts = [np.full((n, l), 1.0 / l)]
    starts.extend(rng.dirichlet(np.ones(l), size=n) for _ in range(restarts))
    return starts


def ib_solve(
    instance: ProblemInstance,
    beta: float,
    seed: int = 0,
    restarts: int = RESTARTS,
    max_iterations: int = MAX_ITERATIONS,
) -> IBSolution:
    """Best IB channel over the barycenter start plus ``restarts`` random starts."""
    if not np.isfinite(beta) or beta < 0:
        raise ValidationError(f"beta must be a nonnegative number, got {beta!r}")
    if restarts < 0:
        raise ValidationError(f"restarts must be nonnegative, got {restarts!r}")
    p, pycx = _label_given_data(instance)

    best = None
    for index, start in enumerate(_initial_channels(instance.n, instance.l, restarts, seed)):
        q, its, converged = _iterate(instance, p, pycx, start, beta, max_iterations)
        channel = CompressionChannel(q / q.sum(axis=1, keepdims=True))
        mi_x = compression_rate(instance, channel)
        mi_y = label_information(instance, channel)
        objective = ib_objective(mi_x, mi_y, beta)
        logger.debug("beta=%.4g restart %d: objective=%.9g converged=%s iterations=%d",
                     beta, index, objective, converged, its)
        if not converged:
            logger.info("beta=%.4g restart %d hit the iteration cap", beta, index)
        if best is None or objective < best[0] - OBJECTIVE_TIE_TOL:
            best = (objective, channel, mi_x, mi_y, converged, its)

    _, channel, mi_x, mi_y, converged, its = best
    return IBSolution(channel, float(beta), mi_x, mi_y, converged, restarts + 1, its)


def ib_sweep(
    instance: ProblemInstance,
    betas,
    seed: int = 0,
    restarts: int = RESTARTS,
) -> list[IBPoint]:
    """(I(X;X~), expected cost under the induced min-cost decoder) for each beta."""
    betas = [float(b) for b in betas]
    if any(b < 0 or not np.isfinite(b) for b in betas):
        raise ValidationError("betas must be nonnegative numbers")
    if any(b2 <= b1 for b1, b2 in zip(betas, betas[1:])):
        raise ValidationError("betas must be increasing")

    points = []
    for beta in betas:
        solution = ib_solve(instance, beta, seed=seed, restarts=restarts)
        decoder = induced_decoder(instance, solution.channel)
        cost = expected_cost(instance, solution.channel, decoder)
        if not solution.converged:
            logger.warning("beta=%.4g did not converge; point kept and flagged", beta)
        points.append(IBPoint(beta, solution.mi_x, cost, solution.converged, decoder))
    return points
