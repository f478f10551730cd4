import math
from functools import reduce

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from errors import NegativeEntry, NotIrreducible, RowSumNotOne, SizeMismatch, ZeroProbabilityStep
from markov_core import (
    cesaro_stationary,
    chain_product,
    constant_schedule,
    counterexample_mask,
    counterexample_schedule,
    entropy_rate,
    is_irreducible,
    log_joint,
    marginal_at,
    propagate,
    schedule_at,
    schedule_block,
    stationary_distribution,
    unreachable_pair,
    validate_matrix,
)
from models import DecayKind, InitialDistribution, StochasticMatrix, TransitionSchedule
from tests.conftest import ASYMMETRIC, FLIP, H_P1, P1, P2


@st.composite
def stochastic_matrices(draw, min_size=2, max_size=5):
    b = draw(st.integers(min_size, max_size))
    rows = []
    for _ in range(b):
        raw = draw(st.lists(st.floats(min_value=0.01, max_value=1.0), min_size=b, max_size=b))
        total = sum(raw)
        rows.append([x / total for x in raw])
    return StochasticMatrix.model_validate(rows)


def uses_p1(k):
    return any(2 ** m <= k <= 2 ** m + m for m in range(k.bit_length()))


def test_validate_matrix_errors():
    with pytest.raises(RowSumNotOne) as info:
        validate_matrix([[0.6, 0.5], [0.5, 0.5]])
    assert info.value.row == 1
    with pytest.raises(NegativeEntry) as info:
        validate_matrix([[0.5, 0.5], [-0.1, 1.1]])
    assert (info.value.row, info.value.col) == (2, 1)
    with pytest.raises(SizeMismatch):
        validate_matrix([[0.5, 0.5, 0.0], [0.5, 0.5, 0.0]])
    assert validate_matrix(P1).size == 2


def test_counterexample_mask_small_k():
    k = np.arange(1, 13)
    expected = [True] * 6 + [False] + [True] * 4 + [False]
    assert counterexample_mask(k).tolist() == expected


@given(st.integers(min_value=1, max_value=2 ** 40))
def test_counterexample_mask_matches_definition(k):
    assert bool(counterexample_mask(np.array([k]))[0]) == uses_p1(k)


def test_counterexample_schedule_at(counterexample):
    assert np.array_equal(schedule_at(counterexample, 9).array, np.array(P1))
    assert np.array_equal(schedule_at(counterexample, 12).array, np.array(P2))
    assert np.array_equal(schedule_at(counterexample, 2 ** 20 + 20).array, np.array(P1))
    assert np.array_equal(schedule_at(counterexample, 2 ** 20 + 21).array, np.array(P2))
    with pytest.raises(ValueError):
        schedule_at(counterexample, 0)


def test_perturbed_block():
    schedule = TransitionSchedule.model_validate({
        "kind": "perturbed", "limit": P1, "perturbation": [[0.05, -0.05], [-0.05, 0.05]],
        "decay": {"kind": "harmonic", "scale": 1.0}})
    block = schedule_block(schedule, 1, 4)
    d = np.array([[0.05, -0.05], [-0.05, 0.05]])
    for offset, k in enumerate(range(1, 5)):
        assert np.allclose(block[offset], np.array(P1) + d / k, rtol=0, atol=1e-15)
    assert np.allclose(block.sum(axis=2), 1.0, rtol=0, atol=1e-12)


def test_piecewise_block_falls_back_to_limit():
    schedule = TransitionSchedule.model_validate({
        "kind": "piecewise", "limit": P1, "segments": [{"start": 3, "end": 4, "matrix": FLIP}]})
    block = schedule_block(schedule, 1, 6)
    expected = [P1, P1, FLIP, FLIP, P1, P1]
    assert all(np.array_equal(block[i], np.array(m)) for i, m in enumerate(expected))


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=1, max_value=17), st.integers(min_value=0, max_value=2 ** 32 - 1))
def test_chain_product_matches_sequential_product(count, seed):
    rng = np.random.default_rng(seed)
    mats = rng.dirichlet([1.0, 1.0, 1.0], size=(count, 3))
    assert np.allclose(chain_product(mats), reduce(np.matmul, mats), rtol=0, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=1, max_value=5000), st.integers(min_value=0, max_value=300))
def test_propagate_matches_step_by_step(k_start, steps):
    counterexample = counterexample_schedule()
    mu = np.array([0.3, 0.7])
    expected = mu.copy()
    for k in range(k_start, k_start + steps):
        expected = expected @ schedule_at(counterexample, k).array
    assert np.allclose(propagate(counterexample, mu, k_start, steps), expected, rtol=0, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(list(DecayKind)), st.integers(min_value=1, max_value=2 ** 40),
       st.floats(min_value=0.1, max_value=6.0), st.floats(min_value=0.1, max_value=3.0),
       st.floats(min_value=0.05, max_value=0.95))
def test_perturbed_schedule_stays_stochastic(kind, k, scale, exponent, ratio):
    schedule = TransitionSchedule.model_validate({
        "kind": "perturbed", "limit": P1, "perturbation": [[0.05, -0.05], [-0.05, 0.05]],
        "decay": {"kind": kind.value, "scale": scale, "exponent": exponent, "ratio": ratio}})
    block = schedule_block(schedule, k, 3)
    assert np.all(block >= -1e-12) and np.all(block <= 1.0 + 1e-12)
    assert np.allclose(block.sum(axis=2), 1.0, rtol=0, atol=1e-12)
    assert schedule_at(schedule, k).size == 2


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(["perturbed", "counterexample"]), st.integers(min_value=0, max_value=3000),
       st.integers(min_value=0, max_value=3000))
def test_marginal_semigroup(kind, n1, n2):
    if kind == "counterexample":
        schedule = counterexample_schedule()
    else:
        schedule = TransitionSchedule.model_validate({
            "kind": "perturbed", "limit": P1, "perturbation": [[0.05, -0.05], [-0.05, 0.05]],
            "decay": {"kind": "harmonic", "scale": 1.0}})
    mu0 = InitialDistribution.model_validate([0.2, 0.8])
    midway = marginal_at(schedule, mu0, n1)
    onward = propagate(schedule, midway.array, n1 + 1, n2)
    assert np.allclose(onward, marginal_at(schedule, mu0, n1 + n2).array, rtol=0, atol=1e-12)


def test_marginal_at_zero_is_mu0(p1_schedule, uniform_mu):
    assert marginal_at(p1_schedule, uniform_mu, 0) == uniform_mu
    start = InitialDistribution.model_validate([1, 0])
    assert np.allclose(marginal_at(p1_schedule, start, 1).array, [1 / 3, 2 / 3], rtol=0, atol=1e-15)


def test_irreducibility():
    assert is_irreducible(StochasticMatrix.model_validate(FLIP))
    assert unreachable_pair(StochasticMatrix.model_validate([[1, 0], [0, 1]])) == (1, 2)
    assert unreachable_pair(StochasticMatrix.model_validate([[0.5, 0.5], [0, 1]])) == (2, 1)
    with pytest.raises(NotIrreducible) as info:
        stationary_distribution(StochasticMatrix.model_validate([[1, 0], [0, 1]]))
    assert info.value.exit_code == 6


@pytest.mark.parametrize("rows,expected", [
    (P1, [0.5, 0.5]),
    (P2, [0.5, 0.5]),
    (ASYMMETRIC, [2 / 3, 1 / 3]),
    (FLIP, [0.5, 0.5]),
])
def test_stationary_cross_check(rows, expected):
    matrix = StochasticMatrix.model_validate(rows)
    pi = stationary_distribution(matrix)
    assert np.allclose(pi.array, expected, rtol=0, atol=1e-12)
    assert np.max(np.abs(pi.array @ matrix.array - pi.array)) <= 1e-10
    assert pi.residual <= 1e-10
    for row in cesaro_stationary(matrix, 10_000):
        assert np.max(np.abs(row.array - pi.array)) <= 1e-3


@settings(max_examples=40, deadline=None)
@given(stochastic_matrices())
def test_stationary_of_positive_matrices(matrix):
    pi = stationary_distribution(matrix)
    assert abs(pi.array.sum() - 1.0) <= 1e-12
    assert np.all(pi.array >= 0.0)
    assert pi.residual <= 1e-10
    h = entropy_rate(matrix, pi)
    assert 0.0 <= h <= math.log(matrix.size)


def test_entropy_rates():
    for rows, expected in [(P1, H_P1), (P2, math.log(2)), (FLIP, 0.0)]:
        matrix = StochasticMatrix.model_validate(rows)
        assert abs(entropy_rate(matrix, stationary_distribution(matrix)) - expected) <= 1e-12
    assert abs(H_P1 - 0.636514) <= 1e-6


def test_log_joint_deterministic_chain(flip_schedule):
    start = InitialDistribution.model_validate([1, 0])
    assert log_joint(flip_schedule, start, [1, 2, 1, 2]) == 0.0
    assert log_joint(flip_schedule, start, [2, 1], m=1) == 0.0
    with pytest.raises(ZeroProbabilityStep) as info:
        log_joint(flip_schedule, start, [1, 1])
    assert info.value.index == 1
    with pytest.raises(ZeroProbabilityStep) as info:
        log_joint(flip_schedule, start, [2, 1])
    assert info.value.index == 0


def test_log_joint_p1(p1_schedule, uniform_mu):
    value = log_joint(p1_schedule, uniform_mu, [1, 2, 2])
    assert math.isclose(value, math.log(0.5 * 2 / 3 * 1 / 3), rel_tol=0, abs_tol=1e-12)


def test_constant_schedule_block_is_broadcast(p1):
    block = schedule_block(constant_schedule(p1), 10, 5)
    assert block.shape == (5, 2, 2)
    assert np.array_equal(block[3], p1.array)


@pytest.mark.parametrize("k,uses_first", [(2, True), (4, True), (100, False), (70, True), (71, False)])
def test_counterexample_rule_examples(counterexample, k, uses_first):
    expected = P1 if uses_first else P2
    assert np.array_equal(schedule_at(counterexample, k).array, np.array(expected))
