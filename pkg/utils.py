import math
from fractions import Fraction
from typing import Any, Iterable, List, Sequence

import numpy as np

from config import Config

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15


def splitmix64(value: int) -> int:
    """SplitMix64 finalizer on a 64-bit unsigned integer"""
    z = value & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(master_seed: int, n: int) -> int:
    """Sub-seed for grid point n: splitmix64(master + (n + 1) * golden gamma mod 2^64)"""
    return splitmix64((master_seed + (n + 1) * GOLDEN_GAMMA) & MASK64)


def parse_probability(value: Any) -> float:
    """Parse a float or an exact fraction string such as '1/3'"""
    if isinstance(value, bool):
        raise ValueError(f"not a probability: {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            return float(Fraction(value.strip()))
        except (ValueError, ZeroDivisionError):
            raise ValueError(f"not a number or fraction: {value!r}")
    raise ValueError(f"not a probability: {value!r}")


def format_float(value: float, digits: int = Config.FLOAT_DIGITS) -> str:
    """Locale-independent fixed significant-digit formatting"""
    if value is None:
        return ""
    if math.isnan(value):
        return "nan"
    text = format(float(value), f".{digits}g")
    return "0" if text == "-0" else text


def to_external(states: Iterable[int]) -> List[int]:
    """Convert 0-based internal state labels to the 1-based labels used on every surface"""
    return [int(s) + 1 for s in states]


def to_internal(states: Sequence[int], n_states: int) -> np.ndarray:
    """Convert 1-based labels to a 0-based index array, checking the range"""
    arr = np.asarray(states, dtype=np.int64)
    if arr.size and (arr.min() < 1 or arr.max() > n_states):
        raise ValueError(f"states must be in 1..{n_states}")
    return arr - 1


def floor_power(n: int, alpha: float) -> int:
    """Greatest integer not exceeding n**alpha, robust to float round-off at exact powers"""
    x = float(n) ** alpha
    r = round(x)
    if abs(x - r) <= 1e-9 * max(1.0, x):
        return int(r)
    return int(math.floor(x))
