"""Finite-state Markov chain primitives.

Stochastic-matrix validation, transition schedules, marginal propagation,
stationary distributions, entropy rate and exact log-joint probabilities.
States are 0-based inside this module; every public function taking a
path expects the 1-based labels used in config and output files.
"""

import logging
import math
from typing import Iterator, List, Sequence, Tuple

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import breadth_first_order, connected_components
from scipy.special import entr

from config import Config
from errors import NotIrreducible, SizeMismatch, ZeroProbabilityStep
from models import (
    InitialDistribution,
    ScheduleKind,
    StationaryDistribution,
    StochasticMatrix,
    TransitionSchedule,
    check_stochastic_rows,
    counterexample_matrices,
)
from utils import to_internal

logger = logging.getLogger(__name__)


def validate_matrix(raw) -> StochasticMatrix:
    """Validate a raw b x b array, raising NegativeEntry / RowSumNotOne / SizeMismatch"""
    array = np.asarray(raw, dtype=float)
    if array.ndim != 2:
        raise SizeMismatch("transition matrix rows", array.shape[0] if array.ndim else 0, 0)
    check_stochastic_rows(array)
    return StochasticMatrix(entries=array.tolist())


def constant_schedule(matrix: StochasticMatrix) -> TransitionSchedule:
    return TransitionSchedule(kind=ScheduleKind.CONSTANT, limit=matrix)


def counterexample_schedule() -> TransitionSchedule:
    """P_k = P1 when 2^m <= k <= 2^m + m for some m >= 0, else P2; the limit matrix is P2"""
    _, p2 = counterexample_matrices()
    return TransitionSchedule(kind=ScheduleKind.COUNTEREXAMPLE, limit=StochasticMatrix(entries=p2.tolist()))


def counterexample_mask(k: np.ndarray) -> np.ndarray:
    """True where the counterexample schedule uses P1"""
    k = np.asarray(k, dtype=np.int64)
    # frexp gives k = mantissa * 2**e with mantissa in [0.5, 1), so floor(log2 k) = e - 1 exactly
    _, exponent = np.frexp(k.astype(float))
    m = exponent.astype(np.int64) - 1
    return (k - (np.int64(1) << m)) <= m


def schedule_block(schedule: TransitionSchedule, k_start: int, count: int) -> np.ndarray:
    """P_k for k = k_start .. k_start + count - 1 as a read-only (count, b, b) array"""
    if k_start < 1:
        raise ValueError(f"schedule index must be >= 1, got {k_start}")
    b = schedule.size
    limit = schedule.limit.array
    if count <= 0:
        return np.empty((0, b, b))
    if schedule.kind == ScheduleKind.CONSTANT:
        return np.broadcast_to(limit, (count, b, b))
    k = np.arange(k_start, k_start + count, dtype=np.int64)
    if schedule.kind == ScheduleKind.PERTURBED:
        c = schedule.decay.coefficients(k)
        return limit[None, :, :] + c[:, None, None] * schedule.perturbation_array[None, :, :]
    if schedule.kind == ScheduleKind.COUNTEREXAMPLE:
        p1, p2 = counterexample_matrices()
        return np.where(counterexample_mask(k)[:, None, None], p1[None, :, :], p2[None, :, :])
    block = np.repeat(limit[None, :, :], count, axis=0)
    k_stop = k_start + count - 1
    for seg in schedule.sorted_segments:
        lo, hi = max(seg.start, k_start), min(seg.end, k_stop)
        if lo <= hi:
            block[lo - k_start:hi - k_start + 1] = seg.matrix.array
    return block


def iter_schedule_blocks(schedule: TransitionSchedule, k_start: int, count: int,
                         chunk_size: int = Config.CHUNK_SIZE) -> Iterator[Tuple[int, np.ndarray]]:
    """Yield (offset, block) pairs covering count consecutive steps in bounded memory"""
    offset = 0
    while offset < count:
        size = min(chunk_size, count - offset)
        yield offset, schedule_block(schedule, k_start + offset, size)
        offset += size


def schedule_at(schedule: TransitionSchedule, k: int) -> StochasticMatrix:
    """P_k of the schedule"""
    if k < 1:
        raise ValueError(f"schedule index must be >= 1, got {k}")
    if schedule.kind == ScheduleKind.CONSTANT:
        return schedule.limit
    return StochasticMatrix(entries=schedule_block(schedule, k, 1)[0].tolist())


def chain_product(mats: np.ndarray) -> np.ndarray:
    """Ordered product mats[0] @ mats[1] @ ... by pairwise reduction"""
    if len(mats) == 0:
        raise ValueError("empty product")
    mats = np.asarray(mats)
    while len(mats) > 1:
        paired = mats[0:len(mats) - 1:2] @ mats[1::2]
        if len(mats) % 2:
            paired = np.concatenate([paired, mats[-1:]], axis=0)
        mats = paired
    return mats[0]


def propagate(schedule: TransitionSchedule, mu: np.ndarray, k_start: int, steps: int,
              chunk_size: int = Config.CHUNK_SIZE) -> np.ndarray:
    """mu @ P_{k_start} ... P_{k_start + steps - 1}, chunk by chunk"""
    mu = np.array(mu, dtype=float)
    if steps <= 0:
        return mu
    if schedule.kind == ScheduleKind.CONSTANT:
        return mu @ np.linalg.matrix_power(schedule.limit.array, steps)
    for _, block in iter_schedule_blocks(schedule, k_start, steps, chunk_size):
        mu = mu @ chain_product(block)
    return mu


def marginal_at(schedule: TransitionSchedule, mu0: InitialDistribution, n: int) -> InitialDistribution:
    """Exact distribution of xi_n, mu_0 P_1 ... P_n"""
    if mu0.size != schedule.size:
        raise SizeMismatch("initial distribution", schedule.size, mu0.size)
    if n < 0:
        raise ValueError(f"n must be nonnegative, got {n}")
    if n == 0:
        return mu0
    mu = propagate(schedule, mu0.array, 1, n)
    mu = np.clip(mu, 0.0, None)
    return InitialDistribution(weights=(mu / mu.sum()).tolist())


def unreachable_pair(matrix: StochasticMatrix) -> Tuple[int, int] | None:
    """First (source, target) pair, 1-based, with target unreachable from source; None if irreducible"""
    graph = csr_matrix(matrix.array > 0.0)
    n_components, _ = connected_components(graph, directed=True, connection="strong")
    if n_components == 1:
        return None
    b = matrix.size
    for source in range(b):
        reached = set(breadth_first_order(graph, source, directed=True, return_predecessors=False).tolist())
        for target in range(b):
            if target not in reached:
                return source + 1, target + 1
    return None


def is_irreducible(matrix: StochasticMatrix) -> bool:
    return unreachable_pair(matrix) is None


def stationary_distribution(matrix: StochasticMatrix) -> StationaryDistribution:
    """Unique pi with pi P = pi by a direct solve of the balance equations"""
    pair = unreachable_pair(matrix)
    if pair is not None:
        raise NotIrreducible(*pair)
    p = matrix.array
    b = matrix.size
    system = p.T - np.eye(b)
    # the balance equations have rank b - 1; swap one for the normalization
    system[-1, :] = 1.0
    rhs = np.zeros(b)
    rhs[-1] = 1.0
    pi = np.linalg.solve(system, rhs)
    pi = np.clip(pi, 0.0, None)
    pi = pi / pi.sum()
    residual = float(np.max(np.abs(pi @ p - pi)))
    if residual > Config.STATIONARY_RESIDUAL_TOLERANCE:
        logger.warning("stationary residual %.3g exceeds %.1g", residual, Config.STATIONARY_RESIDUAL_TOLERANCE)
    return StationaryDistribution(weights=pi.tolist(), residual=residual)


def cesaro_rows(matrix: StochasticMatrix, m: int) -> np.ndarray:
    """(1/m) sum_{l=1}^m P^l as a b x b array"""
    if m < 1:
        raise ValueError(f"m must be positive, got {m}")
    p = matrix.array
    power = p.copy()
    total = p.copy()
    for _ in range(m - 1):
        power = power @ p
        total += power
    return total / m


def cesaro_stationary(matrix: StochasticMatrix, m: int) -> List[InitialDistribution]:
    """Cesaro-averaged l-step rows; each approaches pi as m grows, periodic P included"""
    rows = cesaro_rows(matrix, m)
    rows = rows / rows.sum(axis=1, keepdims=True)
    return [InitialDistribution(weights=row.tolist()) for row in rows]


def entropy_rate(matrix: StochasticMatrix, pi: StationaryDistribution) -> float:
    """H = -sum_i sum_j pi_i p(i,j) log p(i,j) in nats, with 0 log 0 = 0"""
    if pi.size != matrix.size:
        raise SizeMismatch("stationary distribution", matrix.size, pi.size)
    h = float(pi.array @ entr(matrix.array).sum(axis=1))
    return min(max(h, 0.0), math.log(matrix.size))


def log_joint(schedule: TransitionSchedule, mu0: InitialDistribution, path: Sequence[int], m: int = 0) -> float:
    """log P(xi_m..xi_{m+n} = path) for a 1-based path starting at index m"""
    if mu0.size != schedule.size:
        raise SizeMismatch("initial distribution", schedule.size, mu0.size)
    states = to_internal(path, schedule.size)
    if len(states) == 0:
        raise ValueError("path must contain at least one state")
    start_mass = marginal_at(schedule, mu0, m).array[states[0]]
    if start_mass <= 0.0:
        raise ZeroProbabilityStep(m, f"initial state {states[0] + 1} has zero mass")
    total = math.log(start_mass)
    steps = len(states) - 1
    if steps == 0:
        return total
    logps = np.empty(steps)
    for offset, block in iter_schedule_blocks(schedule, m + 1, steps):
        idx = np.arange(offset, offset + len(block))
        probs = block[np.arange(len(block)), states[idx], states[idx + 1]]
        zero = np.flatnonzero(probs <= 0.0)
        if zero.size:
            k = m + 1 + offset + int(zero[0])
            raise ZeroProbabilityStep(k, "transition with zero probability")
        logps[idx] = np.log(probs)
    return total + float(np.sum(logps))
