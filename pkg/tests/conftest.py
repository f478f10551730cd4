import numpy as np
import pytest

from markov_core import constant_schedule, counterexample_schedule
from models import ExperimentConfig, InitialDistribution, SimConfig, StochasticMatrix, WindowSample

P1 = [[1 / 3, 2 / 3], [2 / 3, 1 / 3]]
P2 = [[0.5, 0.5], [0.5, 0.5]]
ASYMMETRIC = [[0.9, 0.1], [0.2, 0.8]]
FLIP = [[0.0, 1.0], [1.0, 0.0]]

H_P1 = 0.636514168294813


@pytest.fixture
def p1():
    return StochasticMatrix.model_validate(P1)


@pytest.fixture
def flip():
    return StochasticMatrix.model_validate(FLIP)


@pytest.fixture
def p1_schedule(p1):
    return constant_schedule(p1)


@pytest.fixture
def flip_schedule(flip):
    return constant_schedule(flip)


@pytest.fixture
def counterexample():
    return counterexample_schedule()


@pytest.fixture
def uniform_mu():
    return InitialDistribution.model_validate([0.5, 0.5])


@pytest.fixture
def make_sim_config():
    def _make(schedule, mu0=(0.5, 0.5), seed=42, rng_id="pcg64"):
        return SimConfig(schedule=schedule, mu0=InitialDistribution.model_validate(list(mu0)),
                         seed=seed, rng_id=rng_id)
    return _make


def make_sample(states_1based, a=0, n=0, b=2, log_mu_start=0.0, step_logps=None):
    """Hand-built window over 1-based states"""
    states = np.asarray(states_1based, dtype=np.int64) - 1
    phi = len(states) - 1
    logps = np.zeros(phi) if step_logps is None else np.asarray(step_logps, dtype=float)
    return WindowSample(n=n, a_n=a, phi_n=phi, n_states=b, states=states, log_mu_start=log_mu_start,
                        step_logps=logps, seed=0, stream_seed=0)


def experiment_dict(**overrides):
    """Small valid experiment config as plain JSON-able data"""
    data = {
        "name": "small",
        "states": 2,
        "schedule": {"kind": "constant", "limit": {"entries": [["1/3", "2/3"], ["2/3", "1/3"]]}},
        "mu0": {"weights": ["1/2", "1/2"]},
        "window_plan": {"a_kind": "linear", "phi_kind": "linear", "n_grid": [100, 1000]},
        "seeds": [1, 2],
        "conditions": {"summability_cutoff": 1000},
    }
    data.update(overrides)
    return data


@pytest.fixture
def small_config():
    return ExperimentConfig.model_validate(experiment_dict())
