import logging
import math
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from config import Config
from delayed_stats import count_stats, entropy_density, h_hat
from markov_core import counterexample_schedule, entropy_rate, iter_schedule_blocks, stationary_distribution
from models import (
    ConditionId,
    ConditionReport,
    ConvergenceRecord,
    ExperimentConfig,
    LengthKind,
    TransitionSchedule,
    Verdict,
    WindowPlan,
)
from simulator import check_budget, simulate_window_series

logger = logging.getLogger(__name__)


def summability_partial_sums(plan: WindowPlan, epsilon: float, cutoff: int,
                             ratio_threshold: float = Config.SUMMABILITY_RATIO) -> ConditionReport:
    """Partial sums S_1..S_N of sum_n exp(-epsilon phi(n)) with a dyadic block-ratio heuristic verdict

    A custom phi is only known up to its last listed value, so the cutoff is capped there.
    """
    if epsilon <= 0.0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if cutoff < 1:
        raise ValueError(f"cutoff must be positive, got {cutoff}")
    note = ""
    if plan.phi_kind == LengthKind.CUSTOM and cutoff > len(plan.phi_values) - 1:
        note = f"; cutoff capped at N={len(plan.phi_values) - 1} by the listed phi_values (asked for {cutoff})"
        cutoff = len(plan.phi_values) - 1
    n = np.arange(1, cutoff + 1)
    phi = np.array([plan.phi(int(k)) for k in n], dtype=float)
    terms = np.exp(-epsilon * phi)
    partial = np.cumsum(terms)

    verdict, rationale = _summability_verdict(terms, ratio_threshold)
    return ConditionReport(condition_id=ConditionId.SUMMABILITY, grid=n.tolist(), values=partial.tolist(),
                           verdict=verdict, epsilon=epsilon, threshold=ratio_threshold, rationale=rationale + note)


def _summability_verdict(terms: np.ndarray, ratio_threshold: float) -> Tuple[Verdict, str]:
    # Cauchy condensation: for nonincreasing terms the series converges iff the
    # dyadic block sums do, so compare consecutive complete blocks.
    # A finite prefix never proves divergence, hence no violated verdict.
    blocks = []
    k = 0
    while 2 ** (k + 1) - 1 <= len(terms):
        blocks.append(float(terms[2 ** k - 1:2 ** (k + 1) - 1].sum()))
        k += 1
    ratios = []
    for prev, cur in zip(blocks, blocks[1:]):
        ratios.append(0.0 if prev == 0.0 else cur / prev)
    tail = ratios[len(ratios) // 2:]
    heuristic = "heuristic on finitely many terms; convergence of an infinite series is not decidable numerically"
    if len(tail) < 2:
        return Verdict.INCONCLUSIVE, f"too few dyadic blocks to judge ({heuristic})"
    worst = max(tail)
    if worst <= ratio_threshold:
        return Verdict.SATISFIED_ON_GRID, f"tail block ratios <= {worst:.3g} < {ratio_threshold} ({heuristic})"
    return Verdict.INCONCLUSIVE, f"tail block ratios up to {worst:.3g} do not show geometric decay ({heuristic})"


def cesaro_deviation(schedule: TransitionSchedule, a: int, phi: int) -> Tuple[np.ndarray, float]:
    """(1/phi) sum_{k=a+1}^{a+phi} |p_k(i,j) - p(i,j)| per entry, and its max"""
    if phi < 1:
        raise ValueError(f"window length must be at least 1, got {phi}")
    limit = schedule.limit.array
    total = np.zeros_like(limit)
    for _, block in iter_schedule_blocks(schedule, a + 1, phi):
        total += np.abs(block - limit).sum(axis=0)
    deviation = total / phi
    return deviation, float(deviation.max())


def prefix_deviations(schedule: TransitionSchedule, n_grid: Sequence[int]) -> List[float]:
    """max_ij (1/n) sum_{k=1}^n |p_k - p| at each grid point, in one pass"""
    limit = schedule.limit.array
    running = np.zeros_like(limit)
    values = []
    done = 0
    for n in n_grid:
        steps = n - done
        for _, block in iter_schedule_blocks(schedule, done + 1, steps):
            running += np.abs(block - limit).sum(axis=0)
        done = n
        values.append(float((running / n).max()))
    return values


def _tail_verdict(values: List[float], threshold: float) -> Tuple[Verdict, str]:
    tail = values[len(values) // 2:]
    nonincreasing = all(b <= a * (1.0 + 1e-9) for a, b in zip(tail, tail[1:]))
    if nonincreasing and tail[-1] <= threshold:
        return Verdict.SATISFIED_ON_GRID, f"tail nonincreasing and last value {tail[-1]:.3g} <= {threshold}"
    if min(tail) > threshold and tail[-1] >= tail[0] * (1.0 - 1e-9):
        return Verdict.VIOLATED_ON_GRID, f"tail stalls at {tail[-1]:.3g} above {threshold}"
    return Verdict.INCONCLUSIVE, f"last value {tail[-1]:.3g} against threshold {threshold}"


def prefix_deviation_series(schedule: TransitionSchedule, n_grid: Sequence[int],
                            threshold: float = Config.CONDITION_THRESHOLD) -> ConditionReport:
    """Full-prefix Cesaro condition (1/n) sum_{k=1}^n |p_k(i,j) - p(i,j)| on the grid"""
    grid = list(n_grid)
    if not grid or grid[0] < 1 or any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("prefix grid must be a nonempty increasing list of positive integers")
    values = prefix_deviations(schedule, grid)
    verdict, rationale = _tail_verdict(values, threshold)
    return ConditionReport(condition_id=ConditionId.PREFIX_CESARO, grid=grid, values=values,
                           verdict=verdict, threshold=threshold, rationale=rationale)


def windowed_deviation_series(schedule: TransitionSchedule, plan: WindowPlan,
                              threshold: float = Config.CONDITION_THRESHOLD) -> ConditionReport:
    """Windowed Cesaro condition D_n = max_ij cesaro_deviation(a_n, phi(n)) on the plan's grid"""
    values = [cesaro_deviation(schedule, a, phi)[1] for _, a, phi in plan.windows()]
    verdict, rationale = _tail_verdict(values, threshold)
    return ConditionReport(condition_id=ConditionId.WINDOWED_CESARO, grid=list(plan.n_grid), values=values,
                           verdict=verdict, threshold=threshold, rationale=rationale)


def windowed_bound_from_prefix(schedule: TransitionSchedule, plan: WindowPlan,
                               threshold: float = Config.CONDITION_THRESHOLD,
                               ratio_limit: float = Config.BOUNDED_RATIO_LIMIT) -> Optional[ConditionReport]:
    """Upper bounds (1 + a_n/phi(n)) * prefix deviation at a_n + phi(n); None unless a_n/phi(n) stays bounded"""
    windows = plan.windows()
    ratios = [a / phi for _, a, phi in windows]
    if max(ratios) > ratio_limit:
        return None
    ends = sorted({a + phi for _, a, phi in windows})
    prefix = dict(zip(ends, prefix_deviations(schedule, ends)))
    values = [(1.0 + a / phi) * prefix[a + phi] for _, a, phi in windows]
    verdict, rationale = _tail_verdict(values, threshold)
    if verdict == Verdict.VIOLATED_ON_GRID:
        # an upper bound that stays large proves nothing
        verdict = Verdict.INCONCLUSIVE
    return ConditionReport(condition_id=ConditionId.WINDOWED_CESARO, grid=list(plan.n_grid), values=values,
                           verdict=verdict, threshold=threshold,
                           rationale=f"derived from the prefix condition (max a_n/phi = {max(ratios):.3g}); {rationale}")


def counterexample_prefix_bound(n: int) -> float:
    """(k+2)(k+1)/(12 * 2^k) for 2^k <= n < 2^{k+1}"""
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    k = n.bit_length() - 1
    return (k + 2) * (k + 1) / 12.0 / 2 ** k


def _seed_records(config: ExperimentConfig, seed: int, pi: np.ndarray, h: float,
                  d_by_n: Dict[int, float]) -> List[ConvergenceRecord]:
    limit = config.schedule.limit.array
    target_pairs = pi[:, None] * limit
    records = []
    samples = simulate_window_series(config.sim_config(seed), config.window_plan,
                                     step_budget=config.step_budget, mode=config.series_mode)
    for sample in samples:
        stats = count_stats(sample)
        phi = sample.phi_n
        f = entropy_density(sample)
        estimate = h_hat(stats)
        records.append(ConvergenceRecord(
            n=sample.n, a_n=sample.a_n, phi_n=phi, seed=seed, f=f, H=h, abs_err_f=abs(f - h),
            freq_err_max=float(np.max(np.abs(stats.state_counts / phi - pi))),
            pair_err_max=float(np.max(np.abs(stats.pair_counts / phi - target_pairs))),
            h_hat=estimate, abs_err_hhat=abs(estimate - h), D_n=d_by_n[sample.n]))
    return records


def convergence_series(config: ExperimentConfig,
                       progress: Optional[Callable[[str], None]] = None) -> List[ConvergenceRecord]:
    """Per-(n, seed) convergence records sorted by n then seed"""
    check_budget(config.window_plan, config.step_budget)
    stationary = stationary_distribution(config.schedule.limit)
    h = entropy_rate(config.schedule.limit, stationary)
    pi = stationary.array
    d_by_n = {n: cesaro_deviation(config.schedule, a, phi)[1] for n, a, phi in config.window_plan.windows()}
    logger.info("Limit chain: pi=%s, H=%.6f; simulating %d seed(s) with jobs=%d",
                np.round(pi, 6).tolist(), h, len(config.seeds), config.jobs)

    records: List[ConvergenceRecord] = []
    if config.jobs > 1 and len(config.seeds) > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            futures = [pool.submit(_seed_records, config, seed, pi, h, d_by_n) for seed in config.seeds]
            for seed, future in zip(config.seeds, futures):
                records.extend(future.result())
                if progress:
                    progress(f"seed {seed} done")
    else:
        for seed in config.seeds:
            records.extend(_seed_records(config, seed, pi, h, d_by_n))
            if progress:
                progress(f"seed {seed} done")
    records.sort(key=lambda r: (r.n, r.seed))
    return records


def ensemble_summary(records: Sequence[ConvergenceRecord], n_states: int) -> List[Dict[str, Any]]:
    """Seed averages per n: the L1 trend of |f - H| and the uniform-integrability bound E f <= 2 log b"""
    by_n: Dict[int, List[ConvergenceRecord]] = {}
    for record in records:
        by_n.setdefault(record.n, []).append(record)
    bound = 2.0 * math.log(n_states)
    summary = []
    for n in sorted(by_n):
        group = by_n[n]
        mean_f = float(np.mean([r.f for r in group]))
        summary.append({
            "n": n,
            "seeds": len(group),
            "mean_f": mean_f,
            "mean_abs_err_f": float(np.mean([r.abs_err_f for r in group])),
            "mean_abs_err_hhat": float(np.mean([r.abs_err_hhat for r in group])),
            "mean_freq_err_max": float(np.mean([r.freq_err_max for r in group])),
            "mean_pair_err_max": float(np.mean([r.pair_err_max for r in group])),
            "mean_f_within_bound": mean_f <= bound,
        })
    return summary
