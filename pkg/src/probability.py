"""Finite-alphabet probability arithmetic for label -> data -> compressed-data chains.

All information quantities are in bits. Zero-probability terms are skipped
(0 * log 0 = 0), never smoothed.
"""

from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numpy as np
from scipy.special import entr, rel_entr

SUM_TOL = 1e-12
TIE_TOL = 1e-12  # expected-cost ties within this are broken by lowest label index
LN2 = np.log(2.0)


class ValidationError(ValueError):
    """Raised when a distribution, channel or instance is malformed."""


def _as_matrix(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ValidationError(f"{name} must be a non-empty 2-D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite entries")
    return arr


def _check_stochastic_rows(arr: np.ndarray, name: str, row_names=None) -> None:
    """Reject (never renormalize) rows outside [0, 1] or not summing to 1."""
    for i, row in enumerate(arr):
        label = f"row {i}" if row_names is None else f"row {i} ({row_names[i]!r})"
        if np.any(row < 0) or np.any(row > 1):
            raise ValidationError(f"{name} {label} has entries outside [0, 1]: {row.tolist()}")
        total = row.sum()
        if abs(total - 1.0) > SUM_TOL:
            raise ValidationError(f"{name} {label} sums to {total!r}, expected 1")


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


# ── Domain types ──


@dataclass(frozen=True, eq=False)
class LabelPrior:
    probs: np.ndarray
    allow_zero: bool = field(default=False, repr=False)

    def __post_init__(self):
        probs = np.array(self.probs, dtype=np.float64)
        if probs.ndim != 1 or probs.size == 0:
            raise ValidationError(f"prior must be a non-empty vector, got shape {probs.shape}")
        if not np.all(np.isfinite(probs)) or np.any(probs < 0) or np.any(probs > 1):
            raise ValidationError(f"prior entries must lie in [0, 1]: {probs.tolist()}")
        if not self.allow_zero and np.any(probs <= 0):
            zero = int(np.flatnonzero(probs <= 0)[0])
            raise ValidationError(
                f"prior entry {zero} is zero; drop labels with zero prior before solving"
            )
        if abs(probs.sum() - 1.0) > SUM_TOL:
            raise ValidationError(f"prior sums to {probs.sum()!r}, expected 1")
        object.__setattr__(self, "probs", _frozen(probs))

    def __len__(self) -> int:
        return self.probs.size


@dataclass(frozen=True, eq=False)
class GenerationChannel:
    """m x n matrix of P(x_j | y_i), one row per label."""

    matrix: np.ndarray

    def __post_init__(self):
        arr = _as_matrix(self.matrix, "generation channel")
        _check_stochastic_rows(arr, "generation channel")
        object.__setattr__(self, "matrix", _frozen(arr))

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape


@dataclass(frozen=True, eq=False)
class CompressionChannel:
    """n x l matrix of Q(k | j) = P(x~_k | x_j), one row per data letter."""

    matrix: np.ndarray

    def __post_init__(self):
        arr = _as_matrix(self.matrix, "compression channel")
        _check_stochastic_rows(arr, "compression channel")
        object.__setattr__(self, "matrix", _frozen(arr))

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    @classmethod
    def constant(cls, n: int, l: int) -> "CompressionChannel":
        """Every data letter mapped uniformly over the compressed alphabet."""
        return cls(np.full((n, l), 1.0 / l))

    @classmethod
    def identity(cls, n: int) -> "CompressionChannel":
        return cls(np.eye(n))


@dataclass(frozen=True, eq=False)
class CostMatrix:
    """m x m costs c(y_i, y^) of decoding true label y_i as y^."""

    matrix: np.ndarray

    def __post_init__(self):
        arr = _as_matrix(self.matrix, "cost matrix")
        if arr.shape[0] != arr.shape[1]:
            raise ValidationError(f"cost matrix must be square, got shape {arr.shape}")
        for i, row in enumerate(arr):
            if row[i] != 0:
                raise ValidationError(f"cost matrix row {i} has nonzero diagonal entry {row[i]!r}")
            if np.any(row < 0):
                raise ValidationError(f"cost matrix row {i} has negative entries: {row.tolist()}")
        object.__setattr__(self, "matrix", _frozen(arr))

    @property
    def is_zero_one(self) -> bool:
        m = self.matrix.shape[0]
        return bool(np.array_equal(self.matrix, 1.0 - np.eye(m)))


def zero_one_cost(m: int) -> CostMatrix:
    return CostMatrix(1.0 - np.eye(m))


@dataclass(frozen=True)
class DecoderMap:
    """Entry k is the label index that compressed letter k decodes to."""

    assignment: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "assignment", tuple(int(a) for a in self.assignment))
        if any(a < 0 for a in self.assignment):
            raise ValidationError(f"decoder entries must be label indices: {self.assignment}")

    def __len__(self) -> int:
        return len(self.assignment)

    def __getitem__(self, k: int) -> int:
        return self.assignment[k]

    def check_labels(self, m: int) -> None:
        bad = [a for a in self.assignment if a >= m]
        if bad:
            raise ValidationError(f"decoder {self.assignment} uses label index {bad[0]} but m = {m}")

    def render(self, labels: tuple[str, ...]) -> str:
        """Comma-free label list, e.g. ``y1|y3``."""
        return "|".join(labels[a] for a in self.assignment)


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    prior: LabelPrior
    generation: GenerationChannel
    compressed_size: int
    cost: CostMatrix | None = None
    labels: tuple[str, ...] = ()
    data_letters: tuple[str, ...] = ()

    def __post_init__(self):
        m, n = self.generation.shape
        if len(self.prior) != m:
            raise ValidationError(
                f"prior has {len(self.prior)} entries but generation channel has {m} rows"
            )
        if int(self.compressed_size) != self.compressed_size or self.compressed_size < 1:
            raise ValidationError(f"compressed_size must be a positive integer, got {self.compressed_size!r}")
        object.__setattr__(self, "compressed_size", int(self.compressed_size))
        if self.cost is None:
            object.__setattr__(self, "cost", zero_one_cost(m))
        elif self.cost.matrix.shape != (m, m):
            raise ValidationError(f"cost matrix must be {m}x{m}, got {self.cost.matrix.shape}")
        labels = tuple(self.labels) or tuple(f"y{i + 1}" for i in range(m))
        letters = tuple(self.data_letters) or tuple(f"x{j + 1}" for j in range(n))
        if len(labels) != m:
            raise ValidationError(f"expected {m} label names, got {len(labels)}")
        if len(letters) != n:
            raise ValidationError(f"expected {n} data letter names, got {len(letters)}")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "data_letters", letters)

    @property
    def m(self) -> int:
        return self.generation.shape[0]

    @property
    def n(self) -> int:
        return self.generation.shape[1]

    @property
    def l(self) -> int:
        return self.compressed_size

    @cached_property
    def joint(self) -> np.ndarray:
        """m x n matrix of P(y_i) P(x_j | y_i)."""
        return _frozen(self.prior.probs[:, None] * self.generation.matrix)

    @cached_property
    def risk_weights(self) -> np.ndarray:
        """n x m matrix A[j, y^] = sum_i P(y_i) P(x_j | y_i) c(y_i, y^)."""
        return _frozen(self.joint.T @ self.cost.matrix)

    def with_cost(self, cost: CostMatrix | None) -> "ProblemInstance":
        return ProblemInstance(
            prior=self.prior,
            generation=self.generation,
            compressed_size=self.compressed_size,
            cost=cost,
            labels=self.labels,
            data_letters=self.data_letters,
        )

    def with_compressed_size(self, l: int) -> "ProblemInstance":
        return ProblemInstance(
            prior=self.prior,
            generation=self.generation,
            compressed_size=l,
            cost=self.cost,
            labels=self.labels,
            data_letters=self.data_letters,
        )


class Posterior(NamedTuple):
    """m x l posterior P(y_i | x~_k); columns of never-emitted letters are NaN."""

    matrix: np.ndarray
    defined: np.ndarray


# ── Validation helpers ──


def _check_compression(instance: ProblemInstance, compression: CompressionChannel) -> None:
    if compression.shape != (instance.n, instance.l):
        raise ValidationError(
            f"compression channel must be {instance.n}x{instance.l}, got {compression.shape}"
        )


def _check_decoder(instance: ProblemInstance, decoder: DecoderMap) -> None:
    if len(decoder) != instance.l:
        raise ValidationError(
            f"decoder has {len(decoder)} entries but compressed_size is {instance.l}"
        )
    decoder.check_labels(instance.m)


def _as_distribution(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValidationError(f"{name} must be a non-empty vector")
    if np.any(arr < 0) or abs(arr.sum() - 1.0) > SUM_TOL:
        raise ValidationError(f"{name} is not a probability vector: {arr.tolist()}")
    return arr


# ── Information quantities ──


def entropy(probs) -> float:
    """Shannon entropy in bits."""
    p = _as_distribution(probs, "distribution")
    return float(entr(p).sum() / LN2)


def _mutual_information_bits(p: np.ndarray, channel: np.ndarray) -> float:
    """I = sum_j p_j KL(channel_j || p @ channel), no validation."""
    used = p > 0
    out = p @ channel
    kl = rel_entr(channel[used], out[None, :]).sum(axis=1)
    return max(0.0, float(p[used] @ kl / LN2))


def mutual_information(input_probs, channel) -> float:
    """Mutual information (bits) between a source and the output of a row-stochastic channel."""
    p = _as_distribution(input_probs, "input distribution")
    q = channel.matrix if hasattr(channel, "matrix") else _as_matrix(channel, "channel")
    if q.shape[0] != p.size:
        raise ValidationError(f"channel has {q.shape[0]} rows but input has {p.size} entries")
    _check_stochastic_rows(q, "channel")
    return _mutual_information_bits(p, q)


def data_marginal(instance: ProblemInstance) -> np.ndarray:
    """p(x_j) = sum_i P(y_i) P(x_j | y_i)."""
    return instance.prior.probs @ instance.generation.matrix


def compressed_marginal(instance: ProblemInstance, compression: CompressionChannel) -> np.ndarray:
    _check_compression(instance, compression)
    return data_marginal(instance) @ compression.matrix


def label_information(instance: ProblemInstance, compression: CompressionChannel) -> float:
    """I(Y; X~) in bits."""
    _check_compression(instance, compression)
    label_channel = instance.generation.matrix @ compression.matrix
    return _mutual_information_bits(instance.prior.probs, label_channel)


def data_label_information(instance: ProblemInstance) -> float:
    """I(Y; X) in bits."""
    return _mutual_information_bits(instance.prior.probs, instance.generation.matrix)


def compression_rate(instance: ProblemInstance, compression: CompressionChannel) -> float:
    """I(X; X~) in bits."""
    _check_compression(instance, compression)
    return _mutual_information_bits(data_marginal(instance), compression.matrix)


# ── Decoding ──


def _label_compressed_joint(instance: ProblemInstance, q: np.ndarray) -> np.ndarray:
    """m x l matrix of P(y_i, x~_k)."""
    return instance.joint @ q


def posterior(instance: ProblemInstance, compression: CompressionChannel) -> Posterior:
    _check_compression(instance, compression)
    joint = _label_compressed_joint(instance, compression.matrix)
    marginal = joint.sum(axis=0)
    defined = marginal > 0
    matrix = np.full_like(joint, np.nan)
    matrix[:, defined] = joint[:, defined] / marginal[defined]
    return Posterior(matrix, defined)


def _letter_risks(instance: ProblemInstance, q: np.ndarray) -> np.ndarray:
    """l x m matrix R[k, y^] = sum_i P(y_i, x~_k) c(y_i, y^) (unnormalized posterior risk)."""
    return q.T @ instance.risk_weights


def _min_cost_labels(risks: np.ndarray) -> tuple[int, ...]:
    best = risks.min(axis=1, keepdims=True)
    # first index within TIE_TOL of the minimum
    return tuple(int(k) for k in np.argmax(risks <= best + TIE_TOL, axis=1))


def induced_decoder(instance: ProblemInstance, compression: CompressionChannel) -> DecoderMap:
    """Minimum posterior expected cost decoder (MAP under 0-1 cost); ties go to the lowest label."""
    _check_compression(instance, compression)
    return DecoderMap(_min_cost_labels(_letter_risks(instance, compression.matrix)))


def expected_cost(
    instance: ProblemInstance,
    compression: CompressionChannel,
    decoder: DecoderMap,
) -> float:
    _check_compression(instance, compression)
    _check_decoder(instance, decoder)
    risks = _letter_risks(instance, compression.matrix)
    return float(risks[np.arange(instance.l), decoder.assignment].sum())


def error_probability(
    instance: ProblemInstance,
    compression: CompressionChannel,
    decoder: DecoderMap,
) -> float:
    """Probability that the decoded label differs from the true one, whatever the cost matrix."""
    _check_compression(instance, compression)
    _check_decoder(instance, decoder)
    joint = _label_compressed_joint(instance, compression.matrix)
    correct = joint[decoder.assignment, np.arange(instance.l)].sum()
    return float(joint.sum() - correct)


def decoder_violation(
    instance: ProblemInstance,
    compression: CompressionChannel,
    decoder: DecoderMap,
) -> float:
    """Largest excess of the declared label's risk over a competitor's (<= 0 when consistent)."""
    _check_compression(instance, compression)
    _check_decoder(instance, decoder)
    risks = _letter_risks(instance, compression.matrix)
    declared = risks[np.arange(instance.l), decoder.assignment]
    return float((declared - risks.min(axis=1)).max())


def bayes_floor(instance: ProblemInstance) -> float:
    """Minimum expected cost when decoding straight from X (lossless compression)."""
    return float(instance.risk_weights.min(axis=1).sum())


def uninformative_cost(instance: ProblemInstance) -> float:
    """Cost of the best constant guess, i.e. of any channel whose output ignores X."""
    return float((instance.prior.probs @ instance.cost.matrix).min())
