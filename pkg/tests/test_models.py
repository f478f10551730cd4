import numpy as np
import pytest
from pydantic import ValidationError

from models import (
    DecayKind,
    DecaySpec,
    ExperimentConfig,
    GId,
    GKind,
    InitialDistribution,
    LengthKind,
    OffsetKind,
    RESULT_COLUMNS,
    ScheduleKind,
    StochasticMatrix,
    TransitionSchedule,
    WindowPlan,
)
from tests.conftest import P1, experiment_dict


def test_matrix_accepts_bare_rows_and_fractions():
    matrix = StochasticMatrix.model_validate([["1/3", "2/3"], ["2/3", "1/3"]])
    assert matrix.size == 2
    assert np.allclose(matrix.array, P1, rtol=0, atol=1e-15)


def test_matrix_array_is_read_only():
    matrix = StochasticMatrix.model_validate(P1)
    with pytest.raises(ValueError):
        matrix.array[0, 0] = 1.0


@pytest.mark.parametrize("rows", [
    [[0.6, 0.5], [0.5, 0.5]],
    [[0.5, 0.5], [-0.1, 1.1]],
    [[0.5, 0.5, 0.0], [0.5, 0.5, 0.0]],
    [[1.0]],
])
def test_matrix_rejects_invalid_rows(rows):
    with pytest.raises(ValidationError):
        StochasticMatrix.model_validate(rows)


def test_zero_mass_initial_states_are_allowed():
    mu = InitialDistribution.model_validate([1, 0])
    assert mu.weights == [1.0, 0.0]


def test_initial_distribution_must_sum_to_one():
    with pytest.raises(ValidationError):
        InitialDistribution.model_validate([0.5, 0.4])


def test_decay_coefficients():
    k = np.array([1, 2, 4])
    assert np.allclose(DecaySpec(kind=DecayKind.HARMONIC, scale=2.0).coefficients(k), [2.0, 1.0, 0.5])
    assert np.allclose(DecaySpec(kind=DecayKind.POWER, exponent=2.0).coefficients(k), [1.0, 0.25, 1 / 16])
    assert np.allclose(DecaySpec(kind=DecayKind.GEOMETRIC, ratio=0.5).coefficients(k), [1.0, 0.5, 0.125])


def test_perturbed_schedule_validation():
    good = dict(kind="perturbed", limit=P1, perturbation=[[0.05, -0.05], [-0.05, 0.05]],
                decay={"kind": "harmonic", "scale": 1.0})
    assert TransitionSchedule.model_validate(good).kind == ScheduleKind.PERTURBED
    with pytest.raises(ValidationError, match="sum to 0"):
        TransitionSchedule.model_validate({**good, "perturbation": [[0.05, 0.0], [0.0, 0.0]]})
    with pytest.raises(ValidationError, match="leaves"):
        TransitionSchedule.model_validate({**good, "decay": {"kind": "harmonic", "scale": 20.0}})
    with pytest.raises(ValidationError):
        TransitionSchedule.model_validate({k: v for k, v in good.items() if k != "decay"})


def test_counterexample_schedule_needs_uniform_limit():
    with pytest.raises(ValidationError):
        TransitionSchedule.model_validate({"kind": "counterexample", "limit": P1})


def test_piecewise_segments_must_not_overlap():
    segment = {"start": 1, "end": 5, "matrix": P1}
    with pytest.raises(ValidationError, match="overlaps"):
        TransitionSchedule.model_validate({"kind": "piecewise", "limit": P1,
                                           "segments": [segment, {**segment, "start": 5, "end": 8}]})


def test_window_plan_sequences():
    plan = WindowPlan(a_kind=OffsetKind.POWER_OF_TWO, phi_kind=LengthKind.LINEAR, n_grid=[3, 5])
    assert plan.windows() == [(3, 8, 3), (5, 32, 5)]
    poly = WindowPlan(a_kind=OffsetKind.ZERO, phi_kind=LengthKind.POLY, alpha=0.5, n_grid=[100])
    assert poly.windows() == [(100, 0, 10)]
    custom = WindowPlan(a_kind=OffsetKind.CUSTOM, phi_kind=LengthKind.CUSTOM,
                        a_values=[0, 7, 9], phi_values=[0, 2, 4], n_grid=[1, 2])
    assert custom.windows() == [(1, 7, 2), (2, 9, 4)]


def test_custom_plan_is_undefined_past_its_values():
    custom = WindowPlan(a_kind=OffsetKind.CUSTOM, phi_kind=LengthKind.CUSTOM,
                        a_values=[0, 7, 9], phi_values=[0, 2, 4], n_grid=[1, 2])
    with pytest.raises(ValueError, match="phi_values cover n = 0..2"):
        custom.phi(3)
    with pytest.raises(ValueError, match="a_values cover n = 0..2"):
        custom.a(3)
    with pytest.raises(ValueError):
        custom.phi(-1)


def test_window_plan_rejects_bad_grids():
    with pytest.raises(ValidationError, match="n_grid not increasing"):
        WindowPlan(n_grid=[5, 3])
    with pytest.raises(ValidationError):
        WindowPlan(n_grid=[])
    with pytest.raises(ValidationError, match="phi"):
        WindowPlan(phi_kind=LengthKind.LINEAR, n_grid=[0, 1])
    with pytest.raises(ValidationError):
        WindowPlan(phi_kind=LengthKind.POLY, n_grid=[4])
    with pytest.raises(ValidationError):
        WindowPlan(a_kind=OffsetKind.CUSTOM, a_values=[0, 1], n_grid=[2])


def test_g_ids():
    assert GId.state(2).kind == GKind.STATE_INDICATOR
    assert GId.pair(1, 2).i == 1
    assert GId.log_transition().j is None
    with pytest.raises(ValidationError):
        GId(kind=GKind.PAIR_INDICATOR, j=1)


def test_experiment_config_checks():
    config = ExperimentConfig.model_validate(experiment_dict())
    assert config.sim_config(7).seed == 7
    with pytest.raises(ValidationError):
        ExperimentConfig.model_validate(experiment_dict(seeds=[]))
    with pytest.raises(ValidationError):
        ExperimentConfig.model_validate(experiment_dict(states=3))
    with pytest.raises(ValidationError):
        ExperimentConfig.model_validate(experiment_dict(rng_id="xorshift"))
    with pytest.raises(ValidationError):
        ExperimentConfig.model_validate(experiment_dict(seeds=[2**64]))
    with pytest.raises(ValidationError):
        ExperimentConfig.model_validate(experiment_dict(unknown_key=1))


def test_result_columns_are_fixed():
    assert RESULT_COLUMNS == ["n", "a_n", "phi_n", "seed", "f", "H", "abs_err_f", "freq_err_max",
                              "pair_err_max", "h_hat", "abs_err_hhat", "D_n"]
