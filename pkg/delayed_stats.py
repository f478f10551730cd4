"""Delayed-window statistics: counts, entropy density, the plug-in estimator and delayed-sum residuals."""

import math
from typing import Callable, Tuple

import numpy as np
from scipy.special import entr

from errors import NonFiniteInput, SizeMismatch
from markov_core import iter_schedule_blocks
from models import DelayedWindowStats, GId, GKind, ResidualReport, TransitionSchedule, WindowSample

# g(prev, nxt, rows) -> (realized g_k(x_{k-1}, x_k), sum_j g_k(x_{k-1}, j) p_k(x_{k-1}, j)) per step
DelayedSumFunction = Callable[[np.ndarray, np.ndarray, np.ndarray], Tuple[np.ndarray, np.ndarray]]


def count_stats(sample: WindowSample) -> DelayedWindowStats:
    """S(j) over the first phi states of the window and S(i,j) over its phi transitions"""
    b = sample.n_states
    states = np.asarray(sample.states, dtype=np.int64)
    head, tail = states[:-1], states[1:]
    state_counts = np.bincount(head, minlength=b)
    pair_counts = np.bincount(head * b + tail, minlength=b * b).reshape(b, b)
    return DelayedWindowStats(n=sample.n, a_n=sample.a_n, phi_n=sample.phi_n, state_counts=state_counts,
                              pair_counts=pair_counts, seed=sample.seed)


def entropy_density(sample: WindowSample) -> float:
    """f = -(log mu_a(xi_a) + sum_k log p_k(xi_{k-1}, xi_k)) / phi"""
    if not math.isfinite(sample.log_mu_start) or not np.all(np.isfinite(sample.step_logps)):
        raise NonFiniteInput(f"window n={sample.n} carries an infinite log-probability term")
    return -(sample.log_mu_start + float(np.sum(sample.step_logps))) / sample.phi_n


def h_hat(stats: DelayedWindowStats) -> float:
    """Plug-in entropy-rate estimate from the window's state and pair counts

    Rows never visited (S(i) = 0) carry no information and are skipped.
    """
    if stats.phi_n < 1:
        raise ValueError("h_hat needs phi >= 1")
    state_counts = np.asarray(stats.state_counts, dtype=float)
    pair_counts = np.asarray(stats.pair_counts, dtype=float)
    visited = state_counts > 0
    kernel = pair_counts[visited] / state_counts[visited][:, None]
    weights = state_counts[visited] / stats.phi_n
    value = float(weights @ entr(kernel).sum(axis=1))
    return min(max(value, 0.0), math.log(len(state_counts)))


def window_stats(sample: WindowSample) -> DelayedWindowStats:
    stats = count_stats(sample)
    return stats.model_copy(update={"f": entropy_density(sample), "h_hat": h_hat(stats)})


def merge_counts(left: DelayedWindowStats, right: DelayedWindowStats) -> DelayedWindowStats:
    """Pool replicate windows of the same grid point by adding their counts"""
    if left.state_counts.shape != right.state_counts.shape:
        raise SizeMismatch("state counts", len(left.state_counts), len(right.state_counts))
    merged = DelayedWindowStats(n=left.n, a_n=left.a_n, phi_n=left.phi_n + right.phi_n,
                                state_counts=left.state_counts + right.state_counts,
                                pair_counts=left.pair_counts + right.pair_counts, seed=left.seed)
    return merged.model_copy(update={"h_hat": h_hat(merged)})


def builtin_g(g_id: GId, b: int) -> DelayedSumFunction:
    """Vectorized realized/conditional-expectation pair for a built-in g family"""
    if g_id.kind == GKind.STATE_INDICATOR:
        j = g_id.j - 1

        def state_indicator(prev, nxt, rows):
            return (nxt == j).astype(float), rows[:, j]
        return state_indicator

    if g_id.kind == GKind.PAIR_INDICATOR:
        i, j = g_id.i - 1, g_id.j - 1

        def pair_indicator(prev, nxt, rows):
            at_i = (prev == i).astype(float)
            return at_i * (nxt == j), at_i * rows[:, j]
        return pair_indicator

    def log_transition(prev, nxt, rows):
        realized = np.log(rows[np.arange(len(nxt)), nxt])
        return realized, -entr(rows).sum(axis=1)
    return log_transition


def delayed_sum_residual(sample: WindowSample, schedule: TransitionSchedule, g: DelayedSumFunction) -> float:
    """(1/phi) sum_{k=a+1}^{a+phi} { g_k(xi_{k-1}, xi_k) - E[g_k(xi_{k-1}, xi_k) | xi_{k-1}] }"""
    states = np.asarray(sample.states, dtype=np.int64)
    total = 0.0
    for offset, block in iter_schedule_blocks(schedule, sample.a_n + 1, sample.phi_n):
        count = len(block)
        prev = states[offset:offset + count]
        nxt = states[offset + 1:offset + 1 + count]
        rows = block[np.arange(count), prev]
        realized, expected = g(prev, nxt, rows)
        total += float(np.sum(realized - expected))
    return total / sample.phi_n


def builtin_residual(sample: WindowSample, schedule: TransitionSchedule, g_id: GId) -> ResidualReport:
    """Delayed-sum residual for a built-in g; tends to 0 when the summability and moment conditions hold"""
    if schedule.size != sample.n_states:
        raise SizeMismatch("schedule", sample.n_states, schedule.size)
    value = delayed_sum_residual(sample, schedule, builtin_g(g_id, schedule.size))
    return ResidualReport(g_id=g_id, value=value)


def moment_bound(g_id: GId, b: int) -> Tuple[float, float]:
    """(gamma, c) certifying the moment condition analytically for the built-in g families

    Indicators are bounded by 1, so E[g^2 e^{gamma|g|} | .] <= e with gamma = 1.
    For log p_k the conditional moment with gamma = 1/2 is sum_j p^{1/2} log^2 p <= 16 b e^-2.
    """
    if g_id.kind == GKind.LOG_TRANSITION:
        return 0.5, 16.0 * b * math.exp(-2.0)
    return 1.0, math.e


def boundary_identity_check(sample: WindowSample, stats: DelayedWindowStats) -> bool:
    """S(j) + 1{xi_end = j} - 1{xi_start = j} == sum_{k=a+1}^{a+phi} 1{xi_k = j} for every j"""
    states = np.asarray(sample.states, dtype=np.int64)
    b = sample.n_states
    shifted = np.bincount(states[1:], minlength=b)
    lhs = np.asarray(stats.state_counts, dtype=np.int64).copy()
    lhs[states[-1]] += 1
    lhs[states[0]] -= 1
    return bool(np.array_equal(lhs, shifted))


def count_deviations(sample: WindowSample, schedule: TransitionSchedule) -> Tuple[np.ndarray, np.ndarray]:
    """|S(j)/phi - (1/phi) sum_k p_k(xi_{k-1}, j)| per state and the pair analogue per (i, j)"""
    b = sample.n_states
    states = np.asarray(sample.states, dtype=np.int64)
    expected_state = np.zeros(b)
    expected_pair = np.zeros((b, b))
    for offset, block in iter_schedule_blocks(schedule, sample.a_n + 1, sample.phi_n):
        count = len(block)
        prev = states[offset:offset + count]
        rows = block[np.arange(count), prev]
        expected_state += rows.sum(axis=0)
        np.add.at(expected_pair, prev, rows)
    stats = count_stats(sample)
    phi = sample.phi_n
    state_dev = np.abs(stats.state_counts / phi - expected_state / phi)
    pair_dev = np.abs(stats.pair_counts / phi - expected_pair / phi)
    return state_dev, pair_dev
