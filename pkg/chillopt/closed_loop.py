"""
The deployment lifecycle as one seeded experiment.

History is generated under legacy control and the forecaster and
surrogate are trained on it. The optimizer's recommendations are then
applied to the simulated plant interval by interval. After the
augmentation window the surrogate is retrained on history plus the new
operating patterns, and the deployment period is scored with the
adjusted-baseline savings method.

The recorded history carries day-to-day operator drift and metering
noise. Each deployment phase searches only a box around the operation
its surrogate was trained on: widened by ``exploration_margin`` while
augmenting, ``retrained_margin`` after retraining.
"""

from __future__ import annotations

import json
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from datetime import timedelta
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional

import numpy as np
import pandas as pd

from chillopt.config import build_dataclass, dataclass_to_dict
from chillopt.errors import ChillOptError, ConfigError, DataError, ExperimentError
from chillopt.forecaster import ForecasterParams, ProfileForecaster, fit_profile, forecast_profile
from chillopt.logger import get_logger
from chillopt.metrics import MapeResult, mape
from chillopt.optimizer.ga import GAConfig
from chillopt.optimizer.problem import OptProblem, SearchSpace, is_feasible, plant_problem
from chillopt.optimizer.pso import PSOConfig
from chillopt.optimizer.registry import get_optimizer
from chillopt.optimizer.runner import StabilityReport, interval_landscape, stability_report
from chillopt.plant.history import DemandModel, demand_series, meter_readings, metered, simulate_operation
from chillopt.plant.policy import OperatorVariation, draw_adjustments, legacy_policy
from chillopt.plant.simulator import plant_step
from chillopt.plant.types import OperationRecord, PlantConfig, SetpointVector
from chillopt.plant.weather import synth_weather
from chillopt.rng import derive_rng
from chillopt.savings import (
    BASELINE_KINDS,
    BaselineKind,
    SavingsReport,
    avoided_energy,
    fit_baseline,
    plot_frame,
    prior_period_savings,
    same_period_last_year_savings,
)
from chillopt.surrogate import (
    SurrogateMetrics,
    SurrogateModel,
    SurrogateParams,
    evaluate_surrogate,
    operating_box,
    train_surrogate,
)
from chillopt.timeseries import INTERVALS_PER_DAY, TimeSeries, format_timestamp, write_frame

logger = get_logger(__name__)


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    history_days: int = 540
    deployment_days: int = 60
    augmentation_days: int = 14
    weather_profile: str = "subtropical"
    plant: PlantConfig = PlantConfig()
    demand: DemandModel = DemandModel()
    forecaster: ForecasterParams = ForecasterParams()
    surrogate: SurrogateParams = SurrogateParams()
    ga: GAConfig = GAConfig(population=32, generations=80)
    algorithm: str = "ga"
    warm_start: bool = True
    # max move per interval as a fraction of each continuous slot's range; None disables
    step_limit: Optional[float] = None
    # deployment rows' share of the total sample weight when retraining
    augmentation_weight: float = 0.5
    in_distribution_fraction: float = 0.7
    shortfall_tolerance: float = 0.02
    # relative standard deviation of the power meter; recorded power only
    meter_noise_frac: float = 0.03
    # None runs the legacy policy exactly as staged every day
    operator_variation: Optional[OperatorVariation] = OperatorVariation()
    # trust region around the surrogate's training operation, as a fraction of each slot's range
    exploration_margin: float = 0.5
    retrained_margin: float = 0.0
    baseline_kind: BaselineKind = "changepoint_daily"
    stability_seeds: int = 20
    ecm_baseline_days: int = 365
    ecm_reporting_days: int = 60
    ecm_reduction: float = 0.10
    ecm_offset_c: float = 2.0

    def __post_init__(self):
        if self.history_days < 1 or self.deployment_days < 1:
            raise ConfigError("history_days and deployment_days must be positive", key="history_days")
        if not 0 < self.augmentation_days <= self.deployment_days:
            raise ConfigError("augmentation_days must be in [1, deployment_days]", key="augmentation_days")
        if self.step_limit is not None and not 0.0 < self.step_limit <= 1.0:
            raise ConfigError("step_limit must be in (0, 1]", key="step_limit")
        if not 0.0 < self.augmentation_weight < 1.0:
            raise ConfigError("augmentation_weight must be in (0, 1)", key="augmentation_weight")
        if not 0.0 < self.in_distribution_fraction < 1.0:
            raise ConfigError("in_distribution_fraction must be in (0, 1)", key="in_distribution_fraction")
        if not 0.0 <= self.meter_noise_frac < 0.5:
            raise ConfigError("meter_noise_frac must be in [0, 0.5)", key="meter_noise_frac")
        if self.exploration_margin < 0 or self.retrained_margin < 0:
            raise ConfigError("trust-region margins must be non-negative", key="exploration_margin")
        if self.baseline_kind not in BASELINE_KINDS:
            raise ConfigError(f"unknown baseline kind '{self.baseline_kind}'", key="baseline_kind")
        if self.stability_seeds != 0 and self.stability_seeds < 20:
            raise ConfigError("stability_seeds must be 0 (off) or at least 20", key="stability_seeds")
        if not 0.0 <= self.ecm_reduction < 1.0:
            raise ConfigError("ecm_reduction must be in [0, 1)", key="ecm_reduction")

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]]) -> "ExperimentConfig":
        return build_dataclass(cls, data, section="experiment")

    def to_dict(self) -> Dict[str, Any]:
        return dataclass_to_dict(self)


@dataclass
class ClosedLoopReport:
    in_distribution: SurrogateMetrics
    pre_retrain: SurrogateMetrics
    post_retrain: SurrogateMetrics
    savings: SavingsReport
    forecast_holdout: Optional[MapeResult] = None
    deployment_forecast: Optional[MapeResult] = None
    counterfactual_savings_pct: float = 0.0
    prior_period_savings_pct: Optional[float] = None
    same_period_last_year_savings_pct: Optional[float] = None
    realized_within_tolerance: float = 1.0
    stability: Optional[StabilityReport] = None
    interval_log: pd.DataFrame = field(default_factory=pd.DataFrame)
    config: Dict[str, Any] = field(default_factory=dict)

    @property
    def pre_retrain_drift(self) -> float:
        return drift_metric(self.in_distribution, self.pre_retrain)

    @property
    def post_retrain_drift(self) -> float:
        return drift_metric(self.in_distribution, self.post_retrain)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "config": self.config,
            "surrogate": {
                "in_distribution": self.in_distribution.to_dict(),
                "pre_retrain": self.pre_retrain.to_dict(),
                "post_retrain": self.post_retrain.to_dict(),
                "pre_retrain_drift": self.pre_retrain_drift,
                "post_retrain_drift": self.post_retrain_drift,
            },
            "forecast": {
                "holdout": None if self.forecast_holdout is None else self.forecast_holdout.to_dict(),
                "deployment": None if self.deployment_forecast is None else self.deployment_forecast.to_dict(),
            },
            "savings": self.savings.to_dict(),
            "counterfactual_savings_pct": self.counterfactual_savings_pct,
            "prior_period_savings_pct": self.prior_period_savings_pct,
            "same_period_last_year_savings_pct": self.same_period_last_year_savings_pct,
            "realized_within_tolerance": self.realized_within_tolerance,
            "stability": None if self.stability is None else self.stability.to_dict(),
        }


def drift_metric(pre: SurrogateMetrics, post: SurrogateMetrics) -> float:
    """Ratio of post to pre surrogate power MAPE."""
    if pre.power_mape.mape_pct <= 0:
        raise DataError("degenerate reference: reference power MAPE is 0")
    return post.power_mape.mape_pct / pre.power_mape.mape_pct


@contextmanager
def _phase(name: str) -> Iterator[None]:
    logger.info(f"Closed loop: {name}")
    try:
        yield
    except ExperimentError:
        raise
    except (ChillOptError, ValueError) as exc:
        raise ExperimentError(name, exc) from exc


def retraining_weights(n_history: int, n_deployment: int, deployment_share: float) -> np.ndarray:
    """Per-record weights giving deployment rows ``deployment_share`` of the total weight."""
    if n_history == 0 or n_deployment == 0:
        return np.ones(n_history + n_deployment)
    deployment = deployment_share / (1.0 - deployment_share) * n_history / n_deployment
    return np.concatenate([np.ones(n_history), np.full(n_deployment, deployment)])


def limit_step(
    candidate: np.ndarray, previous: Optional[np.ndarray], plant: PlantConfig, step_limit: Optional[float]
) -> np.ndarray:
    """Move continuous slots at most step_limit of their range away from the previous setpoints."""
    if step_limit is None or previous is None:
        return candidate
    lower, upper, discrete = plant.slot_bounds()
    reach = step_limit * (upper - lower)
    limited = np.clip(candidate, previous - reach, previous + reach)
    limited = np.clip(limited, lower, upper)
    return np.where(discrete, candidate, limited)


class _Deployment:
    """Interval-by-interval application of recommendations to the true plant."""

    def __init__(
        self, config: ExperimentConfig, forecaster: ProfileForecaster, surrogate: SurrogateModel, lag_values: np.ndarray
    ):
        self.config = config
        self.plant = config.plant
        self.forecaster = forecaster
        self.use_surrogate(surrogate, config.exploration_margin)
        self.meter = derive_rng(config.seed, "deployment-meter")
        self.true_power: List[float] = []
        self.optimizer = get_optimizer(config.algorithm)
        self.lags = list(lag_values)
        self.records: List[OperationRecord] = []
        self.rows: List[Dict[str, Any]] = []
        self.forecasts: List[float] = []
        self.legacy_power: List[float] = []
        self.previous: Optional[np.ndarray] = None
        self.sample_problem: Optional[OptProblem] = None

    def use_surrogate(self, surrogate: SurrogateModel, margin: float) -> None:
        """Switch models; the search is confined to the new model's operating box widened by ``margin``."""
        self.surrogate = surrogate
        self.space = SearchSpace.for_plant(self.plant).narrowed(*operating_box(surrogate, margin))
        logger.info(
            f"Search box: chw {self._span('chw_supply_setpoint_c')}, pump {self._span('pump_speed_frac')}, "
            f"fan {self._span('tower_fan_frac')}"
        )

    def _span(self, kind: str) -> str:
        block = self.plant.slot_layout()[kind]
        return f"[{self.space.lower[block].min():.2f}, {self.space.upper[block].max():.2f}]"

    def run_day(self, weather: TimeSeries, true_demand: np.ndarray, phase: str) -> None:
        lag_window = self.forecaster.lag_window
        recent = TimeSeries.from_values(
            weather.start - timedelta(minutes=weather.step_minutes * lag_window), self.lags[-lag_window:]
        )
        profile = forecast_profile(self.forecaster, weather, recent)
        for i, (conditions, target) in enumerate(zip(weather.records, profile.records)):
            self._run_interval(weather.timestamp_at(i), conditions, float(target), float(true_demand[i]), phase)
        self.lags.extend(true_demand.tolist())

    def _run_interval(self, instant, conditions, target: float, true_demand: float, phase: str) -> None:
        config = self.config
        problem = plant_problem(
            interval_landscape(self.surrogate, self.plant, conditions, target),
            self.plant,
            target,
            shortfall_tolerance=config.shortfall_tolerance,
            space=self.space,
        )
        legacy = legacy_policy(self.plant, conditions, target)
        seeds = [legacy.flatten()]
        if config.warm_start and self.previous is not None:
            seeds.append(self.previous)
        result = self.optimizer.run(problem, config.ga, initial=np.vstack(seeds))
        vector = limit_step(result.best_vector, self.previous, self.plant, config.step_limit)
        setpoints = SetpointVector.from_flat(vector, self.plant)
        output = plant_step(self.plant, conditions, setpoints, target)
        metered_power = float(meter_readings(np.array([output.power_kw]), config.meter_noise_frac, self.meter)[0])
        legacy_output = plant_step(self.plant, conditions, legacy, target)
        if self.sample_problem is None or target > self.sample_problem.target_cooling_kw:
            self.sample_problem = problem

        self.records.append(
            OperationRecord(instant, conditions, setpoints, replace(output, power_kw=metered_power), target)
        )
        self.true_power.append(output.power_kw)
        self.forecasts.append(target)
        self.legacy_power.append(legacy_output.power_kw)
        self.rows.append(
            {
                "timestamp": format_timestamp(instant),
                "phase": phase,
                "true_demand_kw": true_demand,
                "forecast_cooling_kw": target,
                "predicted_power_kw": result.predicted.power_kw,
                "predicted_cooling_kw": result.predicted.cooling_kw,
                "realized_power_kw": output.power_kw,
                "realized_cooling_kw": output.cooling_kw,
                "metered_power_kw": metered_power,
                "legacy_power_kw": legacy_output.power_kw,
                "feasible": result.feasible,
                "realized_within_tolerance": is_feasible(problem, output.cooling_kw),
            }
        )
        self.previous = vector

    def series(self, start) -> TimeSeries[OperationRecord]:
        return TimeSeries(start=start, records=tuple(self.records))


def _realized_fraction(log: pd.DataFrame) -> float:
    flagged = log[log["feasible"]]
    if flagged.empty:
        return 0.0
    return float(flagged["realized_within_tolerance"].mean())


def _legacy_operation(
    config: ExperimentConfig, weather: TimeSeries, demand: TimeSeries[float], stream: str
) -> TimeSeries[OperationRecord]:
    """Legacy operation as recorded: operator drift applied and power metered."""
    adjustments = None
    if config.operator_variation is not None:
        n_days = -(-len(weather) // INTERVALS_PER_DAY)
        adjustments = draw_adjustments(config.operator_variation, n_days, derive_rng(config.seed, f"{stream}-operator"))
    operations = simulate_operation(config.plant, weather, demand, adjustments=adjustments)
    if config.meter_noise_frac > 0:
        operations = metered(operations, config.meter_noise_frac, config.seed, stream=f"{stream}-meter")
    return operations


def run_experiment(config: ExperimentConfig = ExperimentConfig()) -> ClosedLoopReport:
    """History, training, deployment with augmentation and retraining, then savings."""
    total_days = config.history_days + config.deployment_days
    n_history = config.history_days * INTERVALS_PER_DAY

    with _phase("history"):
        weather = synth_weather(config.seed, total_days, profile=config.weather_profile)
        demand = demand_series(config.demand, weather, config.seed)
        history = _legacy_operation(config, weather.slice(0, n_history), demand.slice(0, n_history), "history")
        deployment_weather = weather.slice(n_history)
        deployment_demand = demand.values()[n_history:]

    with _phase("training"):
        forecaster = fit_profile(history, target="cooling", hyperparams=config.forecaster)
        split = int(round(config.history_days * config.in_distribution_fraction)) * INTERVALS_PER_DAY
        split_params = replace(config.surrogate, min_days=0)
        earlier = train_surrogate(history.slice(0, split), split_params)
        in_distribution = evaluate_surrogate(earlier, history.slice(split), seed=config.seed)
        surrogate = train_surrogate(history, config.surrogate)
        logger.info(f"In-distribution surrogate power MAPE {in_distribution.power_mape.mape_pct:.2f}%")

    deployment = _Deployment(config, forecaster, surrogate, demand.values()[:n_history])
    n_augmentation = config.augmentation_days * INTERVALS_PER_DAY
    with _phase("deployment"):
        for day in range(config.augmentation_days):
            begin = day * INTERVALS_PER_DAY
            stop = begin + INTERVALS_PER_DAY
            deployment.run_day(deployment_weather.slice(begin, stop), deployment_demand[begin:stop], "augmentation")
            logger.info(f"Deployment day {day + 1}/{config.deployment_days} (augmentation)")
        augmentation_logs = deployment.series(deployment_weather.start)
        pre_retrain = evaluate_surrogate(surrogate, augmentation_logs, seed=config.seed)
        logger.info(f"Pre-retrain surrogate power MAPE {pre_retrain.power_mape.mape_pct:.2f}%")

    with _phase("retraining"):
        combined = history.concat(augmentation_logs)
        weights = retraining_weights(len(history), len(augmentation_logs), config.augmentation_weight)
        retrained = train_surrogate(combined, config.surrogate, sample_weight=weights)
        deployment.use_surrogate(retrained, config.retrained_margin)

    with _phase("deployment"):
        for day in range(config.augmentation_days, config.deployment_days):
            begin = day * INTERVALS_PER_DAY
            stop = begin + INTERVALS_PER_DAY
            deployment.run_day(deployment_weather.slice(begin, stop), deployment_demand[begin:stop], "post_retrain")
            logger.info(f"Deployment day {day + 1}/{config.deployment_days}")
        logs = deployment.series(deployment_weather.start)
        if len(logs) > n_augmentation:
            post_retrain = evaluate_surrogate(deployment.surrogate, logs.slice(n_augmentation), seed=config.seed)
        else:
            # no days after the augmentation window: score the retrained model on the window itself
            post_retrain = evaluate_surrogate(deployment.surrogate, augmentation_logs, seed=config.seed)
        logger.info(f"Post-retrain surrogate power MAPE {post_retrain.power_mape.mape_pct:.2f}%")

    with _phase("savings"):
        baseline = fit_baseline(history, config.baseline_kind)
        savings = avoided_energy(baseline, logs)
        legacy_kwh = float(np.sum(deployment.legacy_power))
        realized_kwh = float(np.sum(deployment.true_power))
        counterfactual = 100.0 * (legacy_kwh - realized_kwh) / legacy_kwh if legacy_kwh > 0 else 0.0
        prior = prior_period_savings(history, logs)
        try:
            last_year = same_period_last_year_savings(history, logs)
        except DataError:
            last_year = None
        true_demand = TimeSeries.from_values(deployment_weather.start, deployment_demand)
        forecast = TimeSeries.from_values(deployment_weather.start, deployment.forecasts)
        deployment_forecast = mape(true_demand, forecast, seed=config.seed)

    stability = None
    if config.stability_seeds and deployment.sample_problem is not None:
        with _phase("stability"):
            stability = stability_report(
                deployment.sample_problem, config.ga, PSOConfig(seed=config.ga.seed), n_seeds=config.stability_seeds
            )

    log = pd.DataFrame(deployment.rows)
    report = ClosedLoopReport(
        in_distribution=in_distribution,
        pre_retrain=pre_retrain,
        post_retrain=post_retrain,
        savings=savings,
        forecast_holdout=forecaster.holdout_mape,
        deployment_forecast=deployment_forecast,
        counterfactual_savings_pct=counterfactual,
        prior_period_savings_pct=prior,
        same_period_last_year_savings_pct=last_year,
        realized_within_tolerance=_realized_fraction(log),
        stability=stability,
        interval_log=log,
        config=config.to_dict(),
    )
    logger.info(
        f"Closed loop done: savings {savings.savings_pct:.2f}% (adjusted baseline), "
        f"drift {report.pre_retrain_drift:.2f}x before and {report.post_retrain_drift:.2f}x after retraining"
    )
    return report


# planted ECM -----------------------------------------------------------------


@dataclass
class EcmReport:
    planted_pct: float
    adjusted_pct: float
    naive_pct: float
    same_period_last_year_pct: Optional[float]
    savings: SavingsReport

    @property
    def adjusted_error(self) -> float:
        return abs(self.adjusted_pct - self.planted_pct)

    @property
    def naive_error(self) -> float:
        return abs(self.naive_pct - self.planted_pct)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "planted_pct": self.planted_pct,
            "adjusted_pct": self.adjusted_pct,
            "naive_pct": self.naive_pct,
            "same_period_last_year_pct": self.same_period_last_year_pct,
            "adjusted_error": self.adjusted_error,
            "naive_error": self.naive_error,
            "savings": self.savings.to_dict(),
        }


def _apply_ecm(operations: TimeSeries[OperationRecord], reduction: float) -> TimeSeries[OperationRecord]:
    return operations.map(
        lambda r: replace(r, output=replace(r.output, power_kw=r.output.power_kw * (1.0 - reduction)))
    )


def planted_ecm_experiment(config: ExperimentConfig = ExperimentConfig()) -> EcmReport:
    """Known fractional power cut from a known date, with a warmer reporting period.

    The legacy plant keeps running; only its metered power is scaled, so
    the true savings are exactly ``ecm_reduction``.
    """
    with _phase("history"):
        weather = synth_weather(config.seed, config.ecm_baseline_days, profile=config.weather_profile)
        demand = demand_series(config.demand, weather, config.seed)
        baseline_history = _legacy_operation(config, weather, demand, "ecm-baseline")
        reporting_weather = synth_weather(
            config.seed,
            config.ecm_reporting_days,
            profile=config.weather_profile,
            start=weather.end,
            offset_c=config.ecm_offset_c,
        )
        reporting_demand = demand_series(config.demand, reporting_weather, config.seed, stream="ecm-demand")
        reporting = _apply_ecm(
            _legacy_operation(config, reporting_weather, reporting_demand, "ecm-reporting"), config.ecm_reduction
        )

    with _phase("savings"):
        savings = avoided_energy(fit_baseline(baseline_history, config.baseline_kind), reporting)
        naive = prior_period_savings(baseline_history, reporting)
        try:
            last_year = same_period_last_year_savings(baseline_history, reporting)
        except DataError:
            last_year = None

    report = EcmReport(
        planted_pct=100.0 * config.ecm_reduction,
        adjusted_pct=savings.savings_pct,
        naive_pct=naive,
        same_period_last_year_pct=last_year,
        savings=savings,
    )
    logger.info(
        f"Planted ECM {report.planted_pct:.1f}%: adjusted {report.adjusted_pct:.2f}%, naive {report.naive_pct:.2f}%"
    )
    return report


# export ----------------------------------------------------------------------

REPORT_FILES = ("closed_loop.json", "interval_log.csv", "mape_by_phase.csv", "savings_curves.csv")


def mape_by_phase_frame(report: ClosedLoopReport) -> pd.DataFrame:
    rows = []
    for phase, metrics in (
        ("in_distribution", report.in_distribution),
        ("pre_retrain", report.pre_retrain),
        ("post_retrain", report.post_retrain),
    ):
        rows.append(
            {
                "phase": phase,
                "power_mape_pct": metrics.power_mape.mape_pct,
                "power_ci_halfwidth_pct": metrics.power_mape.ci_halfwidth_pct,
                "cooling_mape_pct": metrics.cooling_mape.mape_pct,
                "ood_fraction": metrics.ood_fraction,
            }
        )
    return pd.DataFrame(rows)


def export_report(report: ClosedLoopReport, out_dir: str | Path) -> List[Path]:
    """Report JSON, per-interval log with phase labels, and the two plot-data CSVs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / name for name in REPORT_FILES]
    with open(paths[0], "w", encoding="utf-8") as file:
        json.dump(report.to_dict(), file, indent=2, sort_keys=True)
        file.write("\n")
    write_frame(report.interval_log, paths[1])
    write_frame(mape_by_phase_frame(report), paths[2])
    write_frame(plot_frame(report.savings), paths[3])
    return paths
