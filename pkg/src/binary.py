"""Closed-form optimal tradeoff for binary labels, data and compressed data.

Labels are equiprobable and the generation channel is symmetric with
crossover p1 < 1/2. The optimal compression channel is symmetric with
crossover p2 in [0, 1/2], giving error p1 + p2 - 2 p1 p2 at rate 1 - H2(p2).
"""

from dataclasses import dataclass

import numpy as np

from src.probability import (
    CompressionChannel,
    GenerationChannel,
    LabelPrior,
    ProblemInstance,
    ValidationError,
)

class BelowBayesFloorError(ValueError):
    """Raised when an error target is below the crossover of the generation channel."""


def _check_p1(p1: float) -> None:
    if not 0.0 <= p1 < 0.5:
        raise ValidationError(f"p1 must lie in [0, 1/2), got {p1!r}")


def _check_p2(p2: float) -> None:
    if not 0.0 <= p2 <= 0.5:
        raise ValidationError(f"p2 must lie in [0, 1/2], got {p2!r}")


@dataclass(frozen=True)
class BinaryInstance:
    p1: float

    def __post_init__(self):
        _check_p1(self.p1)

    def to_problem(self) -> ProblemInstance:
        p1 = self.p1
        return ProblemInstance(
            prior=LabelPrior([0.5, 0.5]),
            generation=GenerationChannel([[1 - p1, p1], [p1, 1 - p1]]),
            compressed_size=2,
            labels=("y0", "y1"),
            data_letters=("x0", "x1"),
        )


@dataclass(frozen=True)
class BinaryTradeoffPoint:
    p2: float
    pe: float
    mi: float
    map_tie: bool = False  # p2 = 1/2: both labels equally likely for every compressed letter


def binary_entropy(p: float) -> float:
    """H2(p) in bits."""
    if not 0.0 <= p <= 1.0:
        raise ValidationError(f"probability must lie in [0, 1], got {p!r}")
    # log2 keeps H2(1/2) exactly 1
    return float(-sum(x * np.log2(x) for x in (p, 1.0 - p) if x > 0))


def binary_error(p1: float, p2: float) -> float:
    _check_p1(p1)
    _check_p2(p2)
    return p1 + p2 - 2 * p1 * p2


def binary_rate(p2: float) -> float:
    _check_p2(p2)
    return min(1.0, max(0.0, 1.0 - binary_entropy(p2)))


def binary_curve(p1: float, grid_size: int) -> list[BinaryTradeoffPoint]:
    """Points with p2 equally spaced over [0, 1/2]."""
    _check_p1(p1)
    if grid_size < 2:
        raise ValidationError(f"grid_size must be at least 2, got {grid_size!r}")
    points = []
    for p2 in np.linspace(0.0, 0.5, grid_size):
        p2 = float(p2)
        points.append(BinaryTradeoffPoint(
            p2=p2,
            pe=binary_error(p1, p2),
            mi=binary_rate(p2),
            map_tie=p2 == 0.5,
        ))
    return points


def invert_error_to_p2(p1: float, pe_target: float) -> float:
    """Symmetric crossover p2 whose error equals pe_target; targets above 1/2 clamp to 1/2."""
    _check_p1(p1)
    if pe_target < p1:
        raise BelowBayesFloorError(
            f"infeasible: error target {pe_target!r} is below the Bayes floor p1 = {p1!r}"
        )
    if pe_target >= 0.5:
        return 0.5
    return (pe_target - p1) / (1 - 2 * p1)


def optimal_rate(p1: float, pe_target: float) -> float:
    """Smallest I(X; X~) reaching error pe_target."""
    return binary_rate(invert_error_to_p2(p1, pe_target))


def symmetric_channel(p2: float) -> CompressionChannel:
    return asymmetric_channel(p2, p2)


def asymmetric_channel(p2: float, p3: float) -> CompressionChannel:
    """P(x~=1 | x=0) = p2, P(x~=0 | x=1) = p3."""
    for name, p in (("p2", p2), ("p3", p3)):
        if not 0.0 <= p <= 1.0:
            raise ValidationError(f"{name} must lie in [0, 1], got {p!r}")
    return CompressionChannel([[1 - p2, p2], [p3, 1 - p3]])


def symmetrize(p2: float, p3: float) -> float:
    return (p2 + p3) / 2


def asymmetric_error(p1: float, p2: float, p3: float) -> float:
    """MAP error of the asymmetric compression channel (p2, p3)."""
    _check_p1(p1)
    base = p1 * (1 - p2 - p3) + (p2 + p3) / 2
    if p2 < 1 - p3:
        return base
    return 1 - base
