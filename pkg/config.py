import os

import numpy as np


class Config:
    """Configuration settings for the delayed-window entropy experiments"""

    TOOL_VERSION = "0.1.0"
    SCHEMA_VERSION = "1"

    # Simulation
    DEFAULT_RNG_ID = os.getenv("DELAYED_AEP_RNG_ID", "pcg64")
    STEP_BUDGET = int(float(os.getenv("DELAYED_AEP_STEP_BUDGET", "1e8")))
    CHUNK_SIZE = int(os.getenv("DELAYED_AEP_CHUNK_SIZE", "65536"))
    DEFAULT_JOBS = int(os.getenv("DELAYED_AEP_JOBS", "1"))
    LOG_LEVEL = os.getenv("DELAYED_AEP_LOG_LEVEL", "INFO")

    # Tolerances
    MATRIX_TOLERANCE = 1e-12
    STATIONARY_RESIDUAL_TOLERANCE = 1e-10

    # Condition checks
    CONDITION_THRESHOLD = 1e-3
    SUMMABILITY_RATIO = 0.999
    SUMMABILITY_CUTOFF = 10_000
    BOUNDED_RATIO_LIMIT = 10.0
    DEFAULT_CESARO_M = 10_000

    # Output
    FLOAT_DIGITS = 9

    BIT_GENERATORS = {
        "pcg64": np.random.PCG64,
        "philox": np.random.Philox,
        "sfc64": np.random.SFC64,
        "mt19937": np.random.MT19937,
    }

    @classmethod
    def is_supported_rng(cls, rng_id: str) -> bool:
        """Check if a generator identifier is supported"""
        return rng_id in cls.BIT_GENERATORS

    @classmethod
    def bit_generator(cls, rng_id: str, seed: int) -> np.random.BitGenerator:
        """Build the documented bit generator for a seed"""
        try:
            factory = cls.BIT_GENERATORS[rng_id]
        except KeyError:
            raise ValueError(f"Unknown rng_id: {rng_id} (supported: {', '.join(sorted(cls.BIT_GENERATORS))})")
        return factory(seed)
