"""
Tests for closed_loop.py: experiment configuration, the deployment helpers,
a miniature end-to-end run and the planted-ECM check.
"""

import json

import numpy as np
import pytest

from chillopt.logger import configure_logging, get_logger

test_config = {"log_level": "INFO", "log_file": "test.log"}
configure_logging(test_config)
logger = get_logger(__name__)

from chillopt.closed_loop import (
    REPORT_FILES,
    ExperimentConfig,
    _phase,
    drift_metric,
    export_report,
    limit_step,
    planted_ecm_experiment,
    retraining_weights,
    run_experiment,
)
from chillopt.errors import ConfigError, DataError, ExperimentError
from chillopt.metrics import MapeResult
from chillopt.optimizer.ga import GAConfig
from chillopt.plant.policy import OperatorVariation
from chillopt.surrogate import SurrogateMetrics


def _metrics(power_mape_pct: float) -> SurrogateMetrics:
    return SurrogateMetrics(
        power_mape=MapeResult(power_mape_pct, 0.0),
        cooling_mape=MapeResult(1.0, 0.0),
        ood_fraction=0.0,
    )


class TestDrift:
    def test_ratio_of_power_mape(self):
        assert drift_metric(_metrics(2.0), _metrics(5.0)) == pytest.approx(2.5)

    def test_zero_reference_is_degenerate(self):
        with pytest.raises(DataError, match="degenerate reference"):
            drift_metric(_metrics(0.0), _metrics(5.0))


class TestRetrainingWeights:
    @pytest.mark.parametrize("share", [0.25, 0.5, 0.8])
    def test_deployment_rows_get_their_share(self, share):
        weights = retraining_weights(960, 96, share)
        assert len(weights) == 1056
        assert weights[960:].sum() / weights.sum() == pytest.approx(share)
        assert (weights[:960] == 1.0).all()

    def test_no_deployment_rows(self):
        assert retraining_weights(10, 0, 0.5).tolist() == [1.0] * 10


class TestStepLimit:
    def test_disabled_without_limit_or_history(self, small_plant):
        candidate = np.ones(small_plant.n_slots)
        assert limit_step(candidate, None, small_plant, 0.1) is candidate
        assert limit_step(candidate, np.zeros(small_plant.n_slots), small_plant, None) is candidate

    def test_continuous_slots_move_at_most_the_limit(self, small_plant):
        lower, upper, discrete = small_plant.slot_bounds()
        previous = lower.copy()
        candidate = upper.copy()
        limited = limit_step(candidate, previous, small_plant, 0.25)
        reach = 0.25 * (upper - lower)
        assert np.allclose(limited[~discrete], (lower + reach)[~discrete])
        # on/off bits switch freely
        assert np.array_equal(limited[discrete], candidate[discrete])


class TestExperimentConfig:
    def test_augmentation_window_fits_the_deployment(self):
        with pytest.raises(ConfigError, match="augmentation_days") as info:
            ExperimentConfig(deployment_days=5, augmentation_days=6)
        assert info.value.key == "augmentation_days"

    def test_stability_needs_twenty_seeds(self):
        with pytest.raises(ConfigError, match="at least 20"):
            ExperimentConfig(stability_seeds=12)

    def test_step_limit_range(self):
        with pytest.raises(ConfigError, match="step_limit"):
            ExperimentConfig(step_limit=0.0)

    def test_meter_noise_range(self):
        with pytest.raises(ConfigError, match="meter_noise_frac"):
            ExperimentConfig(meter_noise_frac=-0.01)

    def test_trust_region_margins_are_non_negative(self):
        with pytest.raises(ConfigError, match="margins"):
            ExperimentConfig(exploration_margin=-0.1)

    def test_unknown_baseline_kind(self):
        with pytest.raises(ConfigError, match="baseline_kind"):
            ExperimentConfig.from_dict({"baseline_kind": "quadratic_daily"})

    def test_operator_variation_can_be_switched_off(self):
        assert ExperimentConfig.from_dict({"operator_variation": None}).operator_variation is None
        config = ExperimentConfig.from_dict({"operator_variation": {"chw_c": 1.0}})
        assert config.operator_variation == OperatorVariation(chw_c=1.0)

    def test_nested_sections(self):
        config = ExperimentConfig.from_dict({"seed": 4, "ga": {"population": 16, "generations": 5}})
        assert config.seed == 4
        assert config.ga == GAConfig(population=16, generations=5)

    def test_nested_errors_carry_the_dotted_key(self):
        with pytest.raises(ConfigError, match="experiment.ga.populaton"):
            ExperimentConfig.from_dict({"ga": {"populaton": 16}})

    def test_dict_round_trip(self):
        config = ExperimentConfig(seed=2, step_limit=0.2)
        assert ExperimentConfig.from_dict(config.to_dict()) == config


class TestPhases:
    def test_failures_are_labelled_with_the_phase(self):
        with pytest.raises(ExperimentError, match=r"\[training\] DataError: insufficient data") as info:
            with _phase("training"):
                raise DataError("insufficient data")
        assert info.value.phase == "training"
        assert isinstance(info.value.cause, DataError)

    def test_experiment_errors_are_not_wrapped_twice(self):
        with pytest.raises(ExperimentError, match=r"^\[history\]"):
            with _phase("savings"):
                raise ExperimentError("history", ValueError("bad"))


@pytest.fixture(scope="module")
def miniature(fast_forecaster_params, fast_surrogate_params):
    config = ExperimentConfig(
        seed=5,
        history_days=62,
        deployment_days=2,
        augmentation_days=1,
        forecaster=fast_forecaster_params,
        surrogate=fast_surrogate_params,
        ga=GAConfig(population=8, generations=3),
        stability_seeds=0,
    )
    return config, run_experiment(config)


class TestMiniatureRun:
    def test_interval_log_covers_the_deployment(self, miniature):
        config, report = miniature
        log = report.interval_log
        assert len(log) == config.deployment_days * 96
        assert set(log["phase"]) == {"augmentation", "post_retrain"}
        assert (log["realized_power_kw"] >= 0.0).all()
        assert (log["metered_power_kw"] >= 0.0).all()
        # the meter reads noisy, the plant itself does not
        assert not np.allclose(log["metered_power_kw"], log["realized_power_kw"])

    def test_report_sections(self, miniature):
        _, report = miniature
        summary = report.to_dict()
        assert set(summary["surrogate"]) == {
            "in_distribution",
            "pre_retrain",
            "post_retrain",
            "pre_retrain_drift",
            "post_retrain_drift",
        }
        assert summary["stability"] is None
        # history is shorter than a year
        assert report.same_period_last_year_savings_pct is None
        assert 0.0 <= report.realized_within_tolerance <= 1.0
        assert report.savings.method == "changepoint_daily"

    def test_export(self, miniature, tmp_path):
        _, report = miniature
        paths = export_report(report, tmp_path)
        assert [path.name for path in paths] == list(REPORT_FILES)
        assert json.loads(paths[0].read_text())["config"]["seed"] == 5

    def test_runs_are_deterministic(self, miniature):
        config, report = miniature
        again = run_experiment(config)
        assert again.savings.metered_kwh == report.savings.metered_kwh
        assert again.interval_log.equals(report.interval_log)

    def test_short_history_fails_in_training(self):
        config = ExperimentConfig(history_days=10, deployment_days=1, augmentation_days=1, stability_seeds=0)
        with pytest.raises(ExperimentError, match=r"^\[training\]"):
            run_experiment(config)


@pytest.mark.slow
def test_planted_ecm_is_recovered():
    report = planted_ecm_experiment(ExperimentConfig())
    assert report.planted_pct == pytest.approx(10.0)
    assert report.adjusted_error <= 1.5
    assert report.naive_error > report.adjusted_error


@pytest.fixture(scope="module")
def full_run():
    return run_experiment(ExperimentConfig(stability_seeds=0))


@pytest.mark.slow
def test_retraining_recovers_surrogate_accuracy(full_run):
    assert full_run.pre_retrain_drift >= 2.0
    assert full_run.post_retrain_drift <= 1.25


@pytest.mark.slow
def test_deployment_saves_energy_and_serves_the_load(full_run):
    assert full_run.savings.savings_pct >= 8.0
    assert full_run.counterfactual_savings_pct >= 8.0
    assert full_run.realized_within_tolerance >= 0.95

