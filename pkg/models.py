from enum import Enum
from functools import cached_property
from typing import Any, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from config import Config
from errors import NegativeEntry, RowSumNotOne, SizeMismatch
from utils import floor_power, parse_probability


def check_stochastic_rows(array: np.ndarray, tol: float = Config.MATRIX_TOLERANCE) -> None:
    """Raise NegativeEntry / RowSumNotOne for the first offending row (1-based labels)"""
    if array.ndim != 2 or array.shape[0] != array.shape[1]:
        raise SizeMismatch("transition matrix rows", array.shape[0], array.shape[1] if array.ndim == 2 else 0)
    if array.shape[0] < 2:
        raise SizeMismatch("transition matrix (at least 2 states)", 2, array.shape[0])
    if not np.all(np.isfinite(array)):
        raise NegativeEntry(*(int(v) + 1 for v in np.argwhere(~np.isfinite(array))[0]), float("nan"))
    for i, row in enumerate(array):
        for j, value in enumerate(row):
            if value < 0.0:
                raise NegativeEntry(i + 1, j + 1, float(value))
            if value > 1.0 + tol:
                raise RowSumNotOne(i + 1, float(row.sum() - 1.0))
        deviation = float(row.sum() - 1.0)
        if abs(deviation) > tol:
            raise RowSumNotOne(i + 1, deviation)


def check_probability_vector(array: np.ndarray, tol: float = Config.MATRIX_TOLERANCE) -> None:
    """Raise NegativeEntry / RowSumNotOne for an invalid probability vector"""
    if array.ndim != 1 or array.size < 1:
        raise SizeMismatch("probability vector", 1, 0)
    for i, value in enumerate(array):
        if not np.isfinite(value) or value < 0.0:
            raise NegativeEntry(1, i + 1, float(value))
    deviation = float(array.sum() - 1.0)
    if abs(deviation) > tol:
        raise RowSumNotOne(1, deviation)


def _parse_rows(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (list, tuple)):
        return [[parse_probability(x) for x in row] if isinstance(row, (list, tuple)) else row for row in value]
    return value


class StochasticMatrix(BaseModel):
    """Row-stochastic b x b transition matrix"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    entries: List[List[float]]

    @model_validator(mode="before")
    @classmethod
    def _accept_bare_rows(cls, data: Any) -> Any:
        if isinstance(data, (list, tuple, np.ndarray)):
            return {"entries": data}
        return data

    @field_validator("entries", mode="before")
    @classmethod
    def _parse_entries(cls, value: Any) -> Any:
        return _parse_rows(value)

    @model_validator(mode="after")
    def _check(self) -> "StochasticMatrix":
        widths = {len(row) for row in self.entries}
        if widths != {len(self.entries)}:
            raise SizeMismatch("transition matrix rows", len(self.entries), max(widths or {0}))
        check_stochastic_rows(np.asarray(self.entries, dtype=float))
        return self

    @property
    def size(self) -> int:
        return len(self.entries)

    @cached_property
    def array(self) -> np.ndarray:
        arr = np.asarray(self.entries, dtype=float)
        arr.flags.writeable = False
        return arr


class InitialDistribution(BaseModel):
    """Probability vector over the b states; also used for propagated marginals"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    weights: List[float]

    @model_validator(mode="before")
    @classmethod
    def _accept_bare_weights(cls, data: Any) -> Any:
        if isinstance(data, (list, tuple, np.ndarray)):
            return {"weights": data}
        return data

    @field_validator("weights", mode="before")
    @classmethod
    def _parse_weights(cls, value: Any) -> Any:
        if isinstance(value, np.ndarray):
            return value.tolist()
        if isinstance(value, (list, tuple)):
            return [parse_probability(x) for x in value]
        return value

    @model_validator(mode="after")
    def _check(self) -> "InitialDistribution":
        check_probability_vector(np.asarray(self.weights, dtype=float))
        return self

    @property
    def size(self) -> int:
        return len(self.weights)

    @cached_property
    def array(self) -> np.ndarray:
        arr = np.asarray(self.weights, dtype=float)
        arr.flags.writeable = False
        return arr


class StationaryDistribution(BaseModel):
    model_config = ConfigDict(frozen=True)

    weights: List[float]
    residual: float

    @property
    def size(self) -> int:
        return len(self.weights)

    @cached_property
    def array(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=float)


class ScheduleKind(str, Enum):
    CONSTANT = "constant"
    PERTURBED = "perturbed"
    COUNTEREXAMPLE = "counterexample"
    PIECEWISE = "piecewise"


class DecayKind(str, Enum):
    HARMONIC = "harmonic"
    POWER = "power"
    GEOMETRIC = "geometric"


class DecaySpec(BaseModel):
    """c_k = scale/k, scale*k^-exponent or scale*ratio^(k-1); nonincreasing with c_1 = scale"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: DecayKind = DecayKind.HARMONIC
    scale: float = Field(default=1.0, gt=0.0)
    exponent: float = Field(default=1.0, gt=0.0)
    ratio: float = Field(default=0.5, gt=0.0, lt=1.0)

    def coefficients(self, k: np.ndarray) -> np.ndarray:
        k = np.asarray(k, dtype=float)
        if self.kind == DecayKind.HARMONIC:
            return self.scale / k
        if self.kind == DecayKind.POWER:
            return self.scale * k ** (-self.exponent)
        return self.scale * self.ratio ** (k - 1.0)


class ScheduleSegment(BaseModel):
    """P_k = matrix for start <= k <= end (inclusive)"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    start: int = Field(ge=1)
    end: int = Field(ge=1)
    matrix: StochasticMatrix

    @model_validator(mode="after")
    def _check_range(self) -> "ScheduleSegment":
        if self.end < self.start:
            raise ValueError(f"segment end {self.end} precedes start {self.start}")
        return self


def counterexample_matrices() -> Tuple[np.ndarray, np.ndarray]:
    """The two matrices of the Cesaro-condition counterexample"""
    p1 = np.array([[1.0 / 3.0, 2.0 / 3.0], [2.0 / 3.0, 1.0 / 3.0]])
    p2 = np.array([[0.5, 0.5], [0.5, 0.5]])
    return p1, p2


class TransitionSchedule(BaseModel):
    """Parametric k -> P_k family together with its candidate limit matrix"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: ScheduleKind
    limit: StochasticMatrix
    perturbation: Optional[List[List[float]]] = None
    decay: Optional[DecaySpec] = None
    segments: List[ScheduleSegment] = Field(default_factory=list)

    @field_validator("perturbation", mode="before")
    @classmethod
    def _parse_perturbation(cls, value: Any) -> Any:
        if value is None:
            return None
        if isinstance(value, np.ndarray):
            return value.tolist()
        return [[parse_probability(x) if isinstance(x, str) else x for x in row] for row in value]

    @model_validator(mode="after")
    def _check_kind(self) -> "TransitionSchedule":
        b = self.limit.size
        if self.kind == ScheduleKind.PERTURBED:
            if self.perturbation is None or self.decay is None:
                raise ValueError("perturbed schedule needs both 'perturbation' and 'decay'")
            d = np.asarray(self.perturbation, dtype=float)
            if d.shape != (b, b):
                raise SizeMismatch("perturbation matrix", b, d.shape[0] if d.ndim else 0)
            for i, s in enumerate(d.sum(axis=1)):
                if abs(s) > Config.MATRIX_TOLERANCE:
                    raise ValueError(f"perturbation row {i + 1} must sum to 0, sums to {s:.3g}")
            # P + c*D is affine in c, so checking c = 0 and c = c_1 covers every k
            extreme = self.limit.array + self.decay.scale * d
            tol = Config.MATRIX_TOLERANCE
            bad = np.argwhere((extreme < -tol) | (extreme > 1.0 + tol))
            if bad.size:
                i, j = (int(v) + 1 for v in bad[0])
                raise ValueError(f"perturbed entry ({i},{j}) leaves [0,1] at k=1")
        elif self.kind == ScheduleKind.COUNTEREXAMPLE:
            _, p2 = counterexample_matrices()
            if b != 2 or not np.allclose(self.limit.array, p2, rtol=0.0, atol=Config.MATRIX_TOLERANCE):
                raise ValueError("counterexample schedule has b=2 and the uniform limit matrix")
        elif self.kind == ScheduleKind.PIECEWISE:
            previous_end = 0
            for seg in sorted(self.segments, key=lambda s: s.start):
                if seg.matrix.size != b:
                    raise SizeMismatch("segment matrix", b, seg.matrix.size)
                if seg.start <= previous_end:
                    raise ValueError(f"segment starting at k={seg.start} overlaps the previous one")
                previous_end = seg.end
        return self

    @property
    def size(self) -> int:
        return self.limit.size

    @cached_property
    def perturbation_array(self) -> Optional[np.ndarray]:
        if self.perturbation is None:
            return None
        return np.asarray(self.perturbation, dtype=float)

    @cached_property
    def sorted_segments(self) -> List[ScheduleSegment]:
        return sorted(self.segments, key=lambda s: s.start)


class SimConfig(BaseModel):
    """Everything that determines one simulated trajectory"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    schedule: TransitionSchedule
    mu0: InitialDistribution
    seed: int = Field(ge=0, lt=2**64)
    rng_id: str = Config.DEFAULT_RNG_ID

    @field_validator("rng_id")
    @classmethod
    def _check_rng(cls, value: str) -> str:
        if not Config.is_supported_rng(value):
            raise ValueError(f"unsupported rng_id {value!r}")
        return value

    @model_validator(mode="after")
    def _check_sizes(self) -> "SimConfig":
        if self.mu0.size != self.schedule.size:
            raise SizeMismatch("initial distribution", self.schedule.size, self.mu0.size)
        return self


class OffsetKind(str, Enum):
    ZERO = "zero"
    LINEAR = "linear"
    POWER_OF_TWO = "power_of_two"
    CUSTOM = "custom"


class LengthKind(str, Enum):
    LINEAR = "linear"
    POLY = "poly"
    CUSTOM = "custom"


class WindowPlan(BaseModel):
    """Delayed-window offsets a_n and lengths phi(n) evaluated on an n-grid

    Custom sequences are indexed by n from 0, so they must be longer than the
    largest grid point.
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    a_kind: OffsetKind = OffsetKind.ZERO
    phi_kind: LengthKind = LengthKind.LINEAR
    alpha: Optional[float] = Field(default=None, gt=0.0)
    a_values: List[int] = Field(default_factory=list)
    phi_values: List[int] = Field(default_factory=list)
    n_grid: List[int]

    @field_validator("n_grid")
    @classmethod
    def _check_grid(cls, grid: List[int]) -> List[int]:
        if not grid:
            raise ValueError("n_grid must not be empty")
        if any(n < 0 for n in grid):
            raise ValueError("n_grid entries must be nonnegative")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("n_grid not increasing")
        return grid

    @field_validator("a_values", "phi_values")
    @classmethod
    def _check_nonnegative(cls, values: List[int]) -> List[int]:
        if any(v < 0 for v in values):
            raise ValueError("sequence values must be nonnegative integers")
        return values

    @model_validator(mode="after")
    def _check_plan(self) -> "WindowPlan":
        if self.phi_kind == LengthKind.POLY and self.alpha is None:
            raise ValueError("phi_kind 'poly' needs alpha > 0")
        top = self.n_grid[-1]
        if self.a_kind == OffsetKind.CUSTOM and len(self.a_values) <= top:
            raise ValueError(f"a_values must cover n = 0..{top}")
        if self.phi_kind == LengthKind.CUSTOM and len(self.phi_values) <= top:
            raise ValueError(f"phi_values must cover n = 0..{top}")
        for n in self.n_grid:
            if self.phi(n) < 1:
                raise ValueError(f"phi({n}) must be at least 1")
        return self

    def a(self, n: int) -> int:
        if self.a_kind == OffsetKind.ZERO:
            return 0
        if self.a_kind == OffsetKind.LINEAR:
            return n
        if self.a_kind == OffsetKind.POWER_OF_TWO:
            return 2 ** n
        if not 0 <= n < len(self.a_values):
            raise ValueError(f"a_values cover n = 0..{len(self.a_values) - 1}, asked for n = {n}")
        return self.a_values[n]

    def phi(self, n: int) -> int:
        if self.phi_kind == LengthKind.LINEAR:
            return n
        if self.phi_kind == LengthKind.POLY:
            return floor_power(n, self.alpha)
        if not 0 <= n < len(self.phi_values):
            raise ValueError(f"phi_values cover n = 0..{len(self.phi_values) - 1}, asked for n = {n}")
        return self.phi_values[n]

    def windows(self) -> List[Tuple[int, int, int]]:
        """(n, a_n, phi_n) for every grid point"""
        return [(n, self.a(n), self.phi(n)) for n in self.n_grid]


class WindowSample(BaseModel):
    """Raw material of one delayed window: states xi_a..xi_{a+phi} (0-based) and realized log terms"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    n: int
    a_n: int
    phi_n: int
    n_states: int
    states: np.ndarray
    log_mu_start: float
    step_logps: np.ndarray
    seed: int
    stream_seed: int

    @model_validator(mode="after")
    def _check_lengths(self) -> "WindowSample":
        if len(self.states) != self.phi_n + 1:
            raise ValueError(f"window of length {self.phi_n} needs {self.phi_n + 1} states, got {len(self.states)}")
        if len(self.step_logps) != self.phi_n:
            raise ValueError(f"window of length {self.phi_n} needs {self.phi_n} step log-probabilities")
        return self


class DelayedWindowStats(BaseModel):
    """State and pair counts of one window plus the entropy statistics derived from them"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    n: int
    a_n: int
    phi_n: int
    state_counts: np.ndarray
    pair_counts: np.ndarray
    f: Optional[float] = None
    h_hat: Optional[float] = None
    seed: int = 0


class GKind(str, Enum):
    STATE_INDICATOR = "state_indicator"
    PAIR_INDICATOR = "pair_indicator"
    LOG_TRANSITION = "log_transition"


class GId(BaseModel):
    """Built-in delayed-sum function g_k(x, y); states i, j are 1-based"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: GKind
    i: Optional[int] = Field(default=None, ge=1)
    j: Optional[int] = Field(default=None, ge=1)

    @model_validator(mode="after")
    def _check_indices(self) -> "GId":
        if self.kind == GKind.STATE_INDICATOR and self.j is None:
            raise ValueError("state_indicator needs j")
        if self.kind == GKind.PAIR_INDICATOR and (self.i is None or self.j is None):
            raise ValueError("pair_indicator needs i and j")
        return self

    @classmethod
    def state(cls, j: int) -> "GId":
        return cls(kind=GKind.STATE_INDICATOR, j=j)

    @classmethod
    def pair(cls, i: int, j: int) -> "GId":
        return cls(kind=GKind.PAIR_INDICATOR, i=i, j=j)

    @classmethod
    def log_transition(cls) -> "GId":
        return cls(kind=GKind.LOG_TRANSITION)


class ResidualReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    g_id: GId
    value: float


class ConditionId(str, Enum):
    SUMMABILITY = "summability"
    WINDOWED_CESARO = "windowed_cesaro"
    PREFIX_CESARO = "prefix_cesaro"


class Verdict(str, Enum):
    SATISFIED_ON_GRID = "satisfied_on_grid"
    VIOLATED_ON_GRID = "violated_on_grid"
    INCONCLUSIVE = "inconclusive"


class ConditionReport(BaseModel):
    """Finite-grid evidence for one hypothesis of the delayed entropy theorem"""
    model_config = ConfigDict(frozen=True)

    condition_id: ConditionId
    grid: List[int]
    values: List[float]
    verdict: Verdict
    epsilon: Optional[float] = None
    threshold: Optional[float] = None
    rationale: str = ""


class ConvergenceRecord(BaseModel):
    """One (n, seed) row of the results table"""
    model_config = ConfigDict(frozen=True)

    n: int
    a_n: int
    phi_n: int
    seed: int
    f: float
    H: float
    abs_err_f: float
    freq_err_max: float
    pair_err_max: float
    h_hat: float
    abs_err_hhat: float
    D_n: float


RESULT_COLUMNS = list(ConvergenceRecord.model_fields)


class SeriesMode(str, Enum):
    INDEPENDENT = "independent"
    SINGLE_TRAJECTORY = "single_trajectory"


class OutputFormat(str, Enum):
    CSV = "csv"
    JSON = "json"


class ConditionSettings(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    check_summability: bool = True
    epsilon: float = Field(default=0.1, gt=0.0)
    summability_cutoff: int = Field(default=Config.SUMMABILITY_CUTOFF, ge=1)
    check_windowed: bool = True
    check_prefix: bool = True
    prefix_grid: List[int] = Field(default_factory=list)
    threshold: float = Field(default=Config.CONDITION_THRESHOLD, gt=0.0)
    derive_windowed_from_prefix: bool = False
    ratio_limit: float = Field(default=Config.BOUNDED_RATIO_LIMIT, gt=0.0)

    @field_validator("prefix_grid")
    @classmethod
    def _check_prefix_grid(cls, grid: List[int]) -> List[int]:
        if any(n < 1 for n in grid):
            raise ValueError("prefix_grid entries must be positive")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("prefix_grid not increasing")
        return grid


class OutputSettings(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    out_dir: str = "results"
    results_file: str = "results"
    conditions_file: str = "conditions.json"
    manifest_file: str = "manifest.json"
    format: OutputFormat = OutputFormat.CSV


class ExperimentConfig(BaseModel):
    """Declarative description of one convergence experiment"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    schema_version: str = Config.SCHEMA_VERSION
    name: str = "experiment"
    description: str = ""
    states: int = Field(ge=2)
    schedule: TransitionSchedule
    mu0: InitialDistribution
    window_plan: WindowPlan
    seeds: List[int] = Field(min_length=1)
    rng_id: str = Config.DEFAULT_RNG_ID
    series_mode: SeriesMode = SeriesMode.INDEPENDENT
    conditions: ConditionSettings = Field(default_factory=ConditionSettings)
    outputs: OutputSettings = Field(default_factory=OutputSettings)
    step_budget: int = Field(default=Config.STEP_BUDGET, ge=1)
    jobs: int = Field(default=Config.DEFAULT_JOBS, ge=1)

    @field_validator("schema_version")
    @classmethod
    def _check_schema(cls, value: str) -> str:
        if value != Config.SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {value!r} (expected {Config.SCHEMA_VERSION!r})")
        return value

    @field_validator("seeds")
    @classmethod
    def _check_seeds(cls, seeds: List[int]) -> List[int]:
        if any(s < 0 or s >= 2**64 for s in seeds):
            raise ValueError("seeds must be 64-bit unsigned integers")
        return seeds

    @field_validator("rng_id")
    @classmethod
    def _check_rng(cls, value: str) -> str:
        if not Config.is_supported_rng(value):
            raise ValueError(f"unsupported rng_id {value!r}")
        return value

    @model_validator(mode="after")
    def _check_sizes(self) -> "ExperimentConfig":
        if self.schedule.size != self.states:
            raise SizeMismatch("schedule limit matrix", self.states, self.schedule.size)
        if self.mu0.size != self.states:
            raise SizeMismatch("mu0", self.states, self.mu0.size)
        return self

    def sim_config(self, seed: int) -> SimConfig:
        return SimConfig(schedule=self.schedule, mu0=self.mu0, seed=seed, rng_id=self.rng_id)
