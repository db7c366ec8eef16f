import numpy as np
import pytest

from src.binary import BinaryInstance, optimal_rate, symmetric_channel
from src.enumeration import enumerate_decoders
from src.oracle import grid_search
from src.probability import (
    CompressionChannel,
    DecoderMap,
    ValidationError,
    compression_rate,
    decoder_violation,
    expected_cost,
    induced_decoder,
)
from src.subproblem import (
    BUDGET_TOL,
    CONSISTENCY_TOL,
    KKT_TOL,
    MAX_RETRIES,
    NumericalFailure,
    SolverSettings,
    Status,
    SubproblemSpec,
    _newton_centering,
    _with_retry,
    check_feasibility,
    kkt_residual,
    rate_gradient,
    solve_subproblem,
    stall_tolerance,
)

IDENTITY = DecoderMap((0, 1))


def _assert_certified(spec, result):
    assert result.status is Status.OPTIMAL
    channel = result.channel
    assert expected_cost(spec.instance, channel, spec.decoder) <= spec.budget + BUDGET_TOL
    assert decoder_violation(spec.instance, channel, spec.decoder) <= CONSISTENCY_TOL
    assert result.kkt_residual <= KKT_TOL
    assert result.mi == pytest.approx(compression_rate(spec.instance, channel), abs=1e-12)


def test_binary_interior_budget(binary_p03):
    spec = SubproblemSpec(binary_p03, IDENTITY, 0.34)
    result = solve_subproblem(spec)
    _assert_certified(spec, result)
    assert result.mi == pytest.approx(optimal_rate(0.3, 0.34), abs=1e-6)
    np.testing.assert_allclose(result.channel.matrix, symmetric_channel(0.1).matrix, atol=1e-4)
    assert result.achieved_budget == pytest.approx(0.34, abs=1e-6)


def test_uninformative_budget_gives_zero_rate(binary_p03):
    spec = SubproblemSpec(binary_p03, DecoderMap((0, 0)), 0.5)
    result = solve_subproblem(spec)
    _assert_certified(spec, result)
    assert result.mi <= 1e-6


@pytest.mark.parametrize("p1", [0.1, 0.3])
def test_budget_at_bayes_floor(p1):
    spec = SubproblemSpec(BinaryInstance(p1).to_problem(), IDENTITY, p1)
    result = solve_subproblem(spec)
    _assert_certified(spec, result)
    assert result.mi == pytest.approx(1.0, abs=1e-6)


def test_interior_budget_with_small_crossover():
    # optimum sits at crossover 0.025, close to the Q >= 0 boundary
    spec = SubproblemSpec(BinaryInstance(0.1).to_problem(), IDENTITY, 0.12)
    result = solve_subproblem(spec)
    _assert_certified(spec, result)
    assert result.mi == pytest.approx(optimal_rate(0.1, 0.12), abs=1e-6)
    np.testing.assert_allclose(result.channel.matrix, symmetric_channel(0.025).matrix, atol=1e-4)


def test_below_bayes_floor_is_infeasible(binary_p03):
    for decoder in (IDENTITY, DecoderMap((0, 0)), DecoderMap((1, 0))):
        spec = SubproblemSpec(binary_p03, decoder, 0.29)
        assert solve_subproblem(spec).status is Status.INFEASIBLE
        check = check_feasibility(spec)
        assert not check.feasible
        assert check.lower_bound > 1e-8


def test_constant_decoder_cannot_beat_its_constant_cost(binary_p03):
    spec = SubproblemSpec(binary_p03, DecoderMap((1, 1)), 0.4)
    assert solve_subproblem(spec).status is Status.INFEASIBLE


def test_feasibility_witness(binary_p03):
    spec = SubproblemSpec(binary_p03, IDENTITY, 0.4)
    check = check_feasibility(spec)
    assert check.feasible
    assert expected_cost(binary_p03, check.witness, IDENTITY) <= 0.4 + 1e-8
    assert decoder_violation(binary_p03, check.witness, IDENTITY) <= 1e-8


def test_second_table_decoders_are_certified(second_table):
    for assignment in [(0, 1), (0, 2), (1, 2), (2, 2)]:
        spec = SubproblemSpec(second_table, DecoderMap(assignment), 0.12)
        result = solve_subproblem(spec)
        if result.status is Status.OPTIMAL:
            _assert_certified(spec, result)
            induced = induced_decoder(second_table, result.channel)
            assert expected_cost(second_table, result.channel, induced) == pytest.approx(
                result.achieved_budget, abs=1e-8
            )
        else:
            assert result.status is Status.INFEASIBLE


def test_single_letter_compression(binary_p03):
    single = binary_p03.with_compressed_size(1)
    ok = solve_subproblem(SubproblemSpec(single, DecoderMap((0,)), 0.5))
    assert ok.status is Status.OPTIMAL
    assert ok.mi == 0.0
    assert solve_subproblem(SubproblemSpec(single, DecoderMap((0,)), 0.4)).status is Status.INFEASIBLE


def test_kkt_residual_flags_a_perturbed_optimum(binary_p03):
    spec = SubproblemSpec(binary_p03, IDENTITY, 0.34)
    optimum = solve_subproblem(spec).channel.matrix
    assert kkt_residual(spec, CompressionChannel(optimum)) <= KKT_TOL
    shifted = optimum + 0.01
    shifted /= shifted.sum(axis=1, keepdims=True)
    assert kkt_residual(spec, CompressionChannel(shifted)) > 1e-4
    # strictly inside the budget but off the optimum
    assert kkt_residual(spec, symmetric_channel(0.09)) > 1e-4


def test_rate_gradient_vanishes_on_constant_channel():
    grad = rate_gradient(np.array([0.2, 0.3, 0.5]), np.full((3, 2), 0.5))
    np.testing.assert_allclose(grad, 0.0, atol=1e-15)


def test_invalid_subproblem_inputs(binary_p03):
    with pytest.raises(ValidationError, match="compressed_size"):
        SubproblemSpec(binary_p03, DecoderMap((0, 1, 1)), 0.4)
    with pytest.raises(ValidationError, match="budget"):
        SubproblemSpec(binary_p03, IDENTITY, -0.1)
    with pytest.raises(ValidationError, match="gap_tol"):
        SolverSettings(gap_tol=0.0)


def test_identity_channel_meets_floor_exactly(binary_p03):
    spec = SubproblemSpec(binary_p03, IDENTITY, 0.3)
    assert kkt_residual(spec, CompressionChannel.identity(2)) <= 1e-6


def test_rate_does_not_increase_with_the_budget(binary_p03):
    budgets = np.round(np.arange(0.30, 0.501, 0.02), 10)
    mis = [solve_subproblem(SubproblemSpec(binary_p03, IDENTITY, b)).mi for b in budgets]
    assert all(b <= a + 1e-8 for a, b in zip(mis, mis[1:]))


def test_repeated_solves_agree(second_table):
    spec = SubproblemSpec(second_table, DecoderMap((0, 2)), 0.15)
    first, second = solve_subproblem(spec), solve_subproblem(spec)
    assert first.status is second.status
    if first.status is Status.OPTIMAL:
        assert abs(first.mi - second.mi) <= 1e-9
        np.testing.assert_allclose(first.channel.matrix, second.channel.matrix, atol=1e-9)


@pytest.mark.parametrize("budget", [0.34, 0.45])
def test_fixed_decoder_never_worse_than_grid_on_binary(binary_p03, budget):
    for decoder in enumerate_decoders(2, 2, canonical=False):
        _check_against_grid(SubproblemSpec(binary_p03, decoder, budget), step=0.01)


def test_fixed_decoder_never_worse_than_grid_on_second_table(second_table):
    for decoder in enumerate_decoders(3, 2, canonical=False):
        _check_against_grid(SubproblemSpec(second_table, decoder, 0.15), step=0.05)


def _check_against_grid(spec, step):
    grid = grid_search(spec.instance, spec.budget, step, decoder=spec.decoder)
    result = solve_subproblem(spec)
    if grid.feasible:
        _assert_certified(spec, result)
        assert result.mi <= grid.best_mi + 1e-6
    if result.status is Status.INFEASIBLE:
        assert not grid.feasible


def test_second_table_decoder_cannot_meet_tight_budget(second_table):
    # the y1|y3 decoder needs cost of about 0.25 whatever the channel
    spec = SubproblemSpec(second_table, DecoderMap((0, 2)), 0.13)
    check = check_feasibility(spec)
    assert not check.feasible
    assert check.lower_bound > 1e-8
    assert not grid_search(second_table, 0.13, 0.05, decoder=spec.decoder).feasible
    assert solve_subproblem(spec).status is Status.INFEASIBLE


def test_centering_accepts_a_stall_only_within_tolerance():
    # the value never decreases, so the line search stalls with lambda^2 / 2 = 5e-7
    def evaluate(x):
        return 0.0, np.array([1e-3]), np.eye(1)

    def inside(x):
        return True

    x = np.zeros(1)
    _, _, converged = _newton_centering(evaluate, inside, x, 1e6, stall_tolerance(0), 100)
    assert not converged
    _, _, converged = _newton_centering(evaluate, inside, x, 1e6, stall_tolerance(1), 100)
    assert converged


def test_retries_loosen_the_stall_tolerance():
    seen = []

    def run(stall_tol):
        seen.append(stall_tol)
        if len(seen) < MAX_RETRIES:
            raise NumericalFailure("stalled")
        return "done"

    assert _with_retry(run) == "done"
    assert seen == [stall_tolerance(a) for a in range(MAX_RETRIES)]
    assert all(b > a for a, b in zip(seen, seen[1:]))


def test_retries_give_up_with_the_last_failure():
    def run(stall_tol):
        raise NumericalFailure(f"stalled at {stall_tol:g}")

    with pytest.raises(NumericalFailure, match=f"{stall_tolerance(MAX_RETRIES - 1):g}"):
        _with_retry(run)
