"""Seeded, streaming trajectory generation for delayed windows."""

import logging
import math
from typing import Iterator, List, Optional, Tuple

import numpy as np

from config import Config
from errors import OverflowRisk
from markov_core import iter_schedule_blocks, propagate
from models import SeriesMode, SimConfig, TransitionSchedule, WindowPlan, WindowSample
from utils import derive_seed

logger = logging.getLogger(__name__)


def make_generator(rng_id: str, seed: int) -> np.random.Generator:
    return np.random.Generator(Config.bit_generator(rng_id, seed))


def saturate_cdf(probs: np.ndarray) -> np.ndarray:
    """Cumulative sums along the last axis, pinned to 1 from the last positive column onward"""
    cdf = np.cumsum(probs, axis=-1)
    b = probs.shape[-1]
    last = b - 1 - np.argmax(probs[..., ::-1] > 0.0, axis=-1)
    cdf[np.arange(b) >= np.expand_dims(last, -1)] = 1.0
    return cdf


def next_state_table(block: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
    """Inverse-CDF choice for every possible current state: table[t, i] = next state from i at step t"""
    cdf = saturate_cdf(block)
    # smallest j with u < cdf[j]; zero-probability columns never win since their cdf repeats
    return np.sum(uniforms[:, None, None] >= cdf, axis=2)


class ChainWalker:
    """Walks one realization forward, tracking the exact marginal of the current index"""

    def __init__(self, schedule: TransitionSchedule, mu0: np.ndarray, rng: np.random.Generator,
                 chunk_size: int = Config.CHUNK_SIZE):
        self.schedule = schedule
        self.rng = rng
        self.chunk_size = chunk_size
        self.k = 0
        self.marginal = np.array(mu0, dtype=float)
        cdf = saturate_cdf(self.marginal)
        self.state = int(np.sum(rng.random() >= cdf))

    def log_marginal(self) -> float:
        """log mu_k(xi_k) at the current index"""
        mass = self.marginal[self.state]
        return math.log(mass) if mass > 0.0 else -math.inf

    def advance(self, steps: int, record: bool = False) -> Optional[Tuple[np.ndarray, np.ndarray]]:
        """Move `steps` transitions forward; with record, return (states incl. start, step log-probs)"""
        if steps <= 0:
            return (np.array([self.state]), np.empty(0)) if record else None
        states = np.empty(steps + 1, dtype=np.int64) if record else None
        logps = np.empty(steps) if record else None
        if record:
            states[0] = self.state
        x = self.state
        for offset, block in iter_schedule_blocks(self.schedule, self.k + 1, steps, self.chunk_size):
            table = next_state_table(block, self.rng.random(len(block))).tolist()
            if record:
                chunk = [0] * len(table)
                for t, row in enumerate(table):
                    x = row[x]
                    chunk[t] = x
                states[offset + 1:offset + 1 + len(chunk)] = chunk
                idx = np.arange(len(block))
                logps[offset:offset + len(block)] = np.log(
                    block[idx, states[offset:offset + len(block)], states[offset + 1:offset + 1 + len(block)]])
            else:
                for row in table:
                    x = row[x]
        self.marginal = self._normalized(propagate(self.schedule, self.marginal, self.k + 1, steps, self.chunk_size))
        self.state = x
        self.k += steps
        return (states, logps) if record else None

    @staticmethod
    def _normalized(mu: np.ndarray) -> np.ndarray:
        mu = np.clip(mu, 0.0, None)
        return mu / mu.sum()


def simulate_window(cfg: SimConfig, a: int, phi: int, n: int = 0) -> WindowSample:
    """Sample xi_a..xi_{a+phi}, discarding the prefix but carrying mu_a exactly"""
    if phi < 1:
        raise ValueError(f"window length must be at least 1, got {phi}")
    walker = ChainWalker(cfg.schedule, cfg.mu0.array, make_generator(cfg.rng_id, cfg.seed))
    walker.advance(a)
    log_mu_start = walker.log_marginal()
    states, logps = walker.advance(phi, record=True)
    return WindowSample(n=n, a_n=a, phi_n=phi, n_states=cfg.schedule.size, states=states,
                        log_mu_start=log_mu_start, step_logps=logps, seed=cfg.seed, stream_seed=cfg.seed)


def check_budget(plan: WindowPlan, step_budget: int = Config.STEP_BUDGET) -> List[Tuple[int, int, int]]:
    """Grid windows, raising OverflowRisk for the first one beyond the step budget"""
    for n in plan.n_grid:
        a = plan.a(n)
        # 2**n grows without bound; test it before asking for phi
        if a > step_budget:
            raise OverflowRisk(n, a + plan.phi(n), step_budget)
        steps = a + plan.phi(n)
        if steps > step_budget:
            raise OverflowRisk(n, steps, step_budget)
    return plan.windows()


def simulate_window_series(cfg: SimConfig, plan: WindowPlan, step_budget: int = Config.STEP_BUDGET,
                           mode: SeriesMode = SeriesMode.INDEPENDENT) -> Iterator[WindowSample]:
    """One WindowSample per grid point; the budget is checked before anything is simulated"""
    windows = check_budget(plan, step_budget)
    if mode == SeriesMode.SINGLE_TRAJECTORY:
        return _single_trajectory(cfg, windows)
    return _independent(cfg, windows)


def _independent(cfg: SimConfig, windows: List[Tuple[int, int, int]]) -> Iterator[WindowSample]:
    for n, a, phi in windows:
        stream_seed = derive_seed(cfg.seed, n)
        sample = simulate_window(cfg.model_copy(update={"seed": stream_seed}), a, phi, n=n)
        logger.debug("window n=%d a=%d phi=%d stream_seed=%d", n, a, phi, stream_seed)
        yield sample.model_copy(update={"seed": cfg.seed})


def _single_trajectory(cfg: SimConfig, windows: List[Tuple[int, int, int]]) -> Iterator[WindowSample]:
    """All windows cut from one realization driven by the master seed"""
    walker = ChainWalker(cfg.schedule, cfg.mu0.array, make_generator(cfg.rng_id, cfg.seed))
    start = min(a for _, a, _ in windows)
    end = max(a + phi for _, a, phi in windows)
    walker.advance(start)
    # record the whole span piecewise so mu_a is captured at every window start
    breakpoints = sorted({a for _, a, _ in windows} | {end})
    log_mu = {start: walker.log_marginal()}
    states = [np.array([walker.state])]
    logps = []
    for lo, hi in zip(breakpoints, breakpoints[1:]):
        piece_states, piece_logps = walker.advance(hi - lo, record=True)
        states.append(piece_states[1:])
        logps.append(piece_logps)
        log_mu[hi] = walker.log_marginal()
    path = np.concatenate(states)
    path_logps = np.concatenate(logps) if logps else np.empty(0)
    for n, a, phi in windows:
        lo = a - start
        yield WindowSample(n=n, a_n=a, phi_n=phi, n_states=cfg.schedule.size,
                           states=path[lo:lo + phi + 1].copy(), log_mu_start=log_mu[a],
                           step_logps=path_logps[lo:lo + phi].copy(), seed=cfg.seed, stream_seed=cfg.seed)
