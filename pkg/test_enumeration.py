import numpy as np
import pytest

from src.binary import BinaryInstance, optimal_rate
from src.enumeration import (
    DecoderSpaceTooLarge,
    _reduce,
    budget_range,
    cost_at_rate,
    enumerate_decoders,
    global_solve,
    instance_digest,
    sweep,
)
from src.probability import (
    DecoderMap,
    GenerationChannel,
    LabelPrior,
    ProblemInstance,
    ValidationError,
    error_probability,
    expected_cost,
    induced_decoder,
)
from src.subproblem import KKT_TOL, NumericalFailure, SolveResult, Status


@pytest.mark.parametrize("m,l,full,canonical", [(2, 2, 4, 3), (3, 3, 27, 10), (3, 2, 9, 6)])
def test_decoder_counts(m, l, full, canonical):
    assert len(enumerate_decoders(m, l, canonical=False)) == full
    assert len(enumerate_decoders(m, l, canonical=True)) == canonical


def test_full_enumeration_is_lexicographic():
    maps = [d.assignment for d in enumerate_decoders(2, 2, canonical=False)]
    assert maps == [(0, 0), (0, 1), (1, 0), (1, 1)]


def test_canonical_maps_are_non_decreasing():
    for d in enumerate_decoders(3, 4, canonical=True):
        assert list(d.assignment) == sorted(d.assignment)


def test_size_guard():
    with pytest.raises(DecoderSpaceTooLarge, match="canonical"):
        enumerate_decoders(10, 7, canonical=False)
    assert len(enumerate_decoders(10, 7, canonical=True)) == 11440


def test_global_solve_binary_examples(binary_p03):
    loose = global_solve(binary_p03, 0.5)
    assert loose.status is Status.OPTIMAL
    assert loose.mi <= 1e-6

    interior = global_solve(binary_p03, 0.34)
    assert interior.mi == pytest.approx(0.53101, abs=1e-3)
    assert interior.decoder == DecoderMap((0, 1))
    assert interior.subproblems_solved == 3

    below = global_solve(binary_p03, 0.29)
    assert below.status is Status.INFEASIBLE
    assert below.decoder is None
    assert below.subproblems_infeasible == below.subproblems_solved


def test_winning_decoder_is_consistent(second_table):
    result = global_solve(second_table, 0.1)
    channel = result.best.channel
    induced = induced_decoder(second_table, channel)
    assert expected_cost(second_table, channel, induced) == pytest.approx(
        expected_cost(second_table, channel, result.decoder), abs=1e-8
    )


def test_binary_curve_agreement():
    # 21 budgets from the Bayes floor to the uninformative cost
    binary_p03 = BinaryInstance(0.3).to_problem()
    budgets = np.round(np.linspace(0.30, 0.50, 21), 10)
    curve = sweep(binary_p03, budgets)
    for point in curve.points:
        assert point.status is Status.OPTIMAL
        assert point.mi == pytest.approx(optimal_rate(0.3, point.budget), abs=1e-3)
        assert point.kkt_residual <= KKT_TOL


@pytest.mark.parametrize("p1", [0.1, 0.2, 0.4])
def test_binary_agreement_other_crossovers(p1):
    inst = BinaryInstance(p1).to_problem()
    budgets = np.linspace(p1, 0.5, 6)
    for point in sweep(inst, budgets).points:
        assert point.mi == pytest.approx(optimal_rate(p1, point.budget), abs=1e-3)


def test_sweep_below_floor_is_all_infeasible(binary_p03):
    curve = sweep(binary_p03, [0.1, 0.2, 0.29])
    assert [p.status for p in curve.points] == [Status.INFEASIBLE] * 3
    assert all(p.mi is None for p in curve.points)


def test_sweep_rejects_unordered_budgets(binary_p03):
    with pytest.raises(ValidationError, match="increasing"):
        sweep(binary_p03, [0.4, 0.35])
    with pytest.raises(ValidationError):
        sweep(binary_p03, [-0.1, 0.4])


def test_sweep_metadata(binary_p03):
    curve = sweep(binary_p03, [0.4])
    assert curve.metadata["instance_digest"] == instance_digest(binary_p03)
    assert len(curve.metadata["instance_digest"]) == 16
    assert curve.metadata["gap_tol"] == 1e-9
    assert curve.metadata["decoders_per_budget"] == 3


def test_worker_pool_matches_serial(binary_p03):
    budgets = [0.32, 0.4, 0.45]
    serial = sweep(binary_p03, budgets)
    pooled = sweep(binary_p03, budgets, workers=2)
    for a, b in zip(serial.points, pooled.points):
        assert a.mi == b.mi
        assert a.decoder == b.decoder


@pytest.mark.parametrize("c", [0.5, 1.0, 2.0])
def test_first_table_curves(first_table, c):
    inst = first_table(c)
    low, high = budget_range(inst)
    curve = sweep(inst, np.linspace(low, high, 20))
    assert len(curve.optimal_points()) == 20
    mis = [p.mi for p in curve.points]
    assert all(b <= a + 1e-6 for a, b in zip(mis, mis[1:]))
    assert mis[-1] <= 1e-6
    assert all(p.kkt_residual <= KKT_TOL for p in curve.points)
    if c == 1.0:
        for p in curve.points:
            assert p.achieved_budget == pytest.approx(error_probability(inst, p.channel, p.decoder), abs=1e-9)


def test_canonical_pruning_is_lossless_on_second_table(second_table):
    budgets = np.linspace(0.06, 0.26, 10)
    pruned = sweep(second_table, budgets, canonical=True)
    full = sweep(second_table, budgets, canonical=False)
    for a, b in zip(pruned.points, full.points):
        assert a.status is b.status
        if a.status is Status.OPTIMAL:
            assert a.mi == pytest.approx(b.mi, abs=1e-9)


@pytest.mark.parametrize("m,n,l", [(3, 2, 2), (3, 3, 3)])
def test_canonical_pruning_is_lossless_on_random_instances(m, n, l):
    rng = np.random.default_rng(17)
    for _ in range(2):
        inst = ProblemInstance(
            LabelPrior(rng.dirichlet(np.ones(m))),
            GenerationChannel(rng.dirichlet(np.ones(n), size=m)),
            l,
        )
        low, high = budget_range(inst)
        for budget in (low + 0.3 * (high - low), low + 0.7 * (high - low)):
            a = global_solve(inst, budget, canonical=True)
            b = global_solve(inst, budget, canonical=False)
            assert a.status is Status.OPTIMAL and b.status is Status.OPTIMAL
            assert a.mi == pytest.approx(b.mi, abs=1e-9)


def test_cost_at_rate(binary_p03):
    cost, result = cost_at_rate(binary_p03, optimal_rate(0.3, 0.4))
    assert 0.399 <= cost <= 0.4 + 1e-6
    assert result.status is Status.OPTIMAL

    floor_cost, _ = cost_at_rate(binary_p03, 1.0)
    assert floor_cost == pytest.approx(0.3, abs=1e-6)


def _result(assignment, status, mi=None):
    return SolveResult(status, DecoderMap(assignment), mi=mi, message="stalled")


def test_failed_subproblem_sinks_a_positive_rate_point():
    results = [
        _result((0, 0), Status.INFEASIBLE),
        _result((0, 1), Status.OPTIMAL, 0.4),
        _result((1, 1), Status.NUMERICAL_FAILURE),
    ]
    with pytest.raises(NumericalFailure, match=r"\(1, 1\)"):
        _reduce(results)


def test_certified_zero_rate_outlasts_failed_subproblems():
    results = [
        _result((0, 0), Status.OPTIMAL, 0.0),
        _result((0, 1), Status.NUMERICAL_FAILURE),
        _result((1, 1), Status.INFEASIBLE),
    ]
    reduced = _reduce(results)
    assert reduced.decoder == DecoderMap((0, 0))
    assert reduced.mi == 0.0
    assert reduced.subproblems_infeasible == 1
