"""
Measurement and verification of plant energy savings.

A baseline model fitted on the pre-change period is re-evaluated under
the reporting period's weather (the adjusted baseline); avoided energy is
that adjusted baseline minus the metered energy. The unadjusted before and
after comparisons are kept alongside as biased comparators.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

import numpy as np
import pandas as pd

from chillopt.errors import DataError
from chillopt.forecaster import (
    ChangePointModel,
    ForecasterParams,
    LinearModel,
    ProfileForecaster,
    fit_changepoint,
    fit_linear,
    fit_profile,
    predict_changepoint,
    predict_linear,
)
from chillopt.logger import get_logger
from chillopt.plant.history import power_of, weather_of
from chillopt.plant.types import OperationRecord
from chillopt.timeseries import (
    INTERVALS_PER_DAY,
    STEP_MINUTES,
    TimeSeries,
    WeatherRecord,
    bucket_counts,
    format_timestamp,
    resample_mean,
    resample_sum,
    write_frame,
)

logger = get_logger(__name__)

BaselineKind = Literal["linear_daily", "linear_monthly", "changepoint_daily", "profile_forecaster"]
BASELINE_KINDS = ("linear_daily", "linear_monthly", "changepoint_daily", "profile_forecaster")

MIN_BASELINE_DAYS = 60
MIN_BASELINE_MONTHS = 6
HOURS_PER_INTERVAL = STEP_MINUTES / 60.0

PLOT_COLUMNS = ["bucket_start", "baseline_kwh", "adjusted_baseline_kwh", "metered_kwh"]


@dataclass
class BaselineModel:
    kind: BaselineKind
    model: Union[LinearModel, ChangePointModel, ProfileForecaster]
    start: datetime
    end: datetime
    # metered baseline-period energy per bucket, for the plot curves
    baseline_kwh: Optional[TimeSeries[float]] = None
    # last lag window of the baseline period, seeds profile roll-forward
    lag_seed: Optional[np.ndarray] = None

    @property
    def granularity(self) -> str:
        if self.kind in ("linear_daily", "changepoint_daily"):
            return "daily"
        if self.kind == "linear_monthly":
            return "monthly"
        return "interval"


@dataclass
class SavingsReport:
    start: datetime
    end: datetime
    adjusted_baseline_kwh: float
    metered_kwh: float
    method: BaselineKind
    adjusted_series: Optional[TimeSeries[float]] = None
    metered_series: Optional[TimeSeries[float]] = None
    baseline_series: Optional[TimeSeries[float]] = None
    comparators: Dict[str, float] = field(default_factory=dict)

    @property
    def avoided_kwh(self) -> float:
        return self.adjusted_baseline_kwh - self.metered_kwh

    @property
    def savings_pct(self) -> float:
        if self.adjusted_baseline_kwh <= 0:
            return 0.0
        return 100.0 * self.avoided_kwh / self.adjusted_baseline_kwh

    def to_dict(self) -> Dict[str, Any]:
        return {
            "method": self.method,
            "start": format_timestamp(self.start),
            "end": format_timestamp(self.end),
            "adjusted_baseline_kwh": self.adjusted_baseline_kwh,
            "metered_kwh": self.metered_kwh,
            "avoided_kwh": self.avoided_kwh,
            "savings_pct": self.savings_pct,
            "comparators": dict(self.comparators),
        }


def interval_kwh(power_kw: TimeSeries[float]) -> TimeSeries[float]:
    return power_kw.map(lambda kw: kw * HOURS_PER_INTERVAL)


def _covered_months(history: TimeSeries) -> int:
    counts = bucket_counts(history, "monthly")
    return int((counts > 0).sum())


def fit_baseline(
    history: TimeSeries[OperationRecord],
    kind: BaselineKind = "linear_daily",
    hyperparams: ForecasterParams = ForecasterParams(),
) -> BaselineModel:
    """Fit the baseline relationship between weather and plant power on the pre-change period."""
    if kind not in BASELINE_KINDS:
        raise DataError(f"unknown baseline kind '{kind}'")
    if len(history) == 0:
        raise DataError("empty input")
    n_days = len(history) // INTERVALS_PER_DAY
    power = power_of(history)
    temps = weather_of(history).map(lambda r: r.dry_bulb_c)

    lag_seed = None
    if kind == "linear_daily":
        if n_days < MIN_BASELINE_DAYS:
            raise DataError(f"insufficient data: linear_daily baseline needs {MIN_BASELINE_DAYS} days, got {n_days}")
        model: Union[LinearModel, ChangePointModel, ProfileForecaster] = fit_linear(temps, power, "daily")
        granularity = "daily"
    elif kind == "changepoint_daily":
        if n_days < MIN_BASELINE_DAYS:
            raise DataError(
                f"insufficient data: changepoint_daily baseline needs {MIN_BASELINE_DAYS} days, got {n_days}"
            )
        model = fit_changepoint(temps, power, "daily")
        granularity = "daily"
    elif kind == "linear_monthly":
        months = _covered_months(history)
        if months < MIN_BASELINE_MONTHS:
            raise DataError(
                f"insufficient data: linear_monthly baseline needs {MIN_BASELINE_MONTHS} months, got {months}"
            )
        model = fit_linear(temps, power, "monthly")
        granularity = "monthly"
    else:
        if n_days < MIN_BASELINE_DAYS:
            raise DataError(
                f"insufficient data: profile_forecaster baseline needs {MIN_BASELINE_DAYS} days, got {n_days}"
            )
        model = fit_profile(history, target="power", hyperparams=hyperparams)
        lag_seed = power.values()[-model.lag_window :]
        granularity = "daily"

    if isinstance(model, LinearModel):
        logger.info(f"Baseline {kind}: slope {model.slope:.3f} kW/C, intercept {model.intercept:.1f} kW, r2 {model.fit_r2:.3f}")
    elif isinstance(model, ChangePointModel):
        logger.info(
            f"Baseline {kind}: balance {model.balance_c:.2f} C, slopes {model.slope_below:.3f}/{model.slope_above:.3f} kW/C, "
            f"r2 {model.fit_r2:.3f}"
        )
    return BaselineModel(
        kind=kind,
        model=model,
        start=history.start,
        end=history.end,
        baseline_kwh=resample_sum(interval_kwh(power), granularity),
        lag_seed=lag_seed,
    )


def adjusted_baseline(model: BaselineModel, conditions: TimeSeries[WeatherRecord]) -> TimeSeries[float]:
    """Energy (kWh per bucket) the baseline relationship predicts under the given weather.

    Linear kinds yield one value per calendar day or month, scaled by the
    hours the conditions actually cover; the profile kind yields one value
    per interval. The total is the sum of the series.
    """
    if len(conditions) == 0:
        raise DataError("empty input")
    if conditions.granularity != "interval":
        raise DataError(f"reporting conditions must be interval data, got {conditions.granularity}")

    if isinstance(model.model, ProfileForecaster):
        if any(record is None for record in conditions):
            raise DataError("reporting weather has absent records")
        if conditions.start != model.end:
            raise DataError(
                f"missing lag window: conditions start {conditions.start.isoformat()} "
                f"but the baseline lags end at {model.end.isoformat()}"
            )
        power = model.model.roll_forward(conditions, model.lag_seed)
        return TimeSeries.from_values(conditions.start, np.maximum(power, 0.0) * HOURS_PER_INTERVAL)

    aggregate = model.model
    predict = predict_changepoint if isinstance(aggregate, ChangePointModel) else predict_linear
    temps = conditions.map(lambda r: r.dry_bulb_c)
    means = resample_mean(temps, aggregate.granularity)
    hours = bucket_counts(temps, aggregate.granularity).to_numpy() * HOURS_PER_INTERVAL
    values = [
        None if np.isnan(mean) else predict(aggregate, float(mean)) * covered
        for mean, covered in zip(means.values(), hours)
    ]
    return TimeSeries.from_values(means.start, values, granularity=aggregate.granularity)


def _total(series: TimeSeries[float]) -> float:
    return float(np.nansum(series.values()))


def avoided_energy(model: BaselineModel, reporting: TimeSeries[OperationRecord]) -> SavingsReport:
    """Adjusted baseline minus metered energy over the reporting period."""
    if len(reporting) == 0:
        raise DataError("empty input")
    if reporting.start < model.end:
        raise DataError(
            f"baseline/reporting overlap: reporting starts {reporting.start.isoformat()} "
            f"before the baseline ends {model.end.isoformat()}"
        )
    adjusted = adjusted_baseline(model, weather_of(reporting))
    metered = interval_kwh(power_of(reporting))
    if model.granularity != "interval":
        metered = resample_sum(metered, model.granularity)
    report = SavingsReport(
        start=reporting.start,
        end=reporting.end,
        adjusted_baseline_kwh=_total(adjusted),
        metered_kwh=_total(metered),
        method=model.kind,
        adjusted_series=adjusted,
        metered_series=metered,
        baseline_series=model.baseline_kwh,
    )
    logger.info(
        f"Savings ({model.kind}): adjusted baseline {report.adjusted_baseline_kwh:.0f} kWh, "
        f"metered {report.metered_kwh:.0f} kWh, {report.savings_pct:.2f}%"
    )
    return report


def naive_savings(baseline_energy_kwh: float, reporting_energy_kwh: float) -> float:
    """Unadjusted before/after comparison in percent."""
    if baseline_energy_kwh <= 0:
        raise DataError("baseline energy must be positive")
    return 100.0 * (baseline_energy_kwh - reporting_energy_kwh) / baseline_energy_kwh


def _daily_mean_kwh(history: TimeSeries[OperationRecord]) -> float:
    daily = resample_sum(interval_kwh(power_of(history)), "daily").values()
    daily = daily[~np.isnan(daily)]
    if len(daily) == 0:
        raise DataError("empty input")
    return float(daily.mean())


def prior_period_savings(
    baseline_history: TimeSeries[OperationRecord], reporting: TimeSeries[OperationRecord]
) -> float:
    """Reporting energy against the equally long period right before it, per day, unadjusted."""
    if baseline_history.end > reporting.start:
        raise DataError("baseline/reporting overlap")
    n = min(len(reporting), len(baseline_history))
    prior = baseline_history.slice(len(baseline_history) - n)
    return naive_savings(_daily_mean_kwh(prior), _daily_mean_kwh(reporting))


def same_period_last_year_savings(
    history: TimeSeries[OperationRecord], reporting: TimeSeries[OperationRecord], days_per_year: int = 365
) -> float:
    """Reporting energy against the same calendar window one year earlier, unadjusted."""
    begin = reporting.start - timedelta(days=days_per_year)
    end = reporting.end - timedelta(days=days_per_year)
    if begin < history.start or end > history.end:
        raise DataError("insufficient data: history does not cover the same period last year")
    return naive_savings(_daily_mean_kwh(history.window(begin, end)), _daily_mean_kwh(reporting))


def linear_crossval(
    history_pre: TimeSeries[OperationRecord], history_post: TimeSeries[OperationRecord]
) -> tuple[float, float]:
    """Savings percentages from a daily and a monthly linear baseline."""
    daily = avoided_energy(fit_baseline(history_pre, "linear_daily"), history_post)
    monthly = avoided_energy(fit_baseline(history_pre, "linear_monthly"), history_post)
    return daily.savings_pct, monthly.savings_pct


def monthly_breakdown(report: SavingsReport) -> pd.DataFrame:
    """Savings per calendar month of the reporting period."""
    if report.adjusted_series is None or report.metered_series is None:
        raise DataError("report carries no detail series")
    adjusted = resample_sum(report.adjusted_series, "monthly")
    metered = resample_sum(report.metered_series, "monthly")
    rows: List[Dict[str, Any]] = []
    for month, base, used in zip(adjusted.timestamps(), adjusted.values(), metered.values()):
        avoided = base - used
        rows.append(
            {
                "month": month.strftime("%Y-%m"),
                "adjusted_baseline_kwh": base,
                "metered_kwh": used,
                "avoided_kwh": avoided,
                "savings_pct": 100.0 * avoided / base if base > 0 else 0.0,
            }
        )
    return pd.DataFrame(rows, columns=["month", "adjusted_baseline_kwh", "metered_kwh", "avoided_kwh", "savings_pct"])


def _detail_frame(report: SavingsReport) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "bucket_start": [format_timestamp(t) for t in report.adjusted_series.timestamps()],
            "adjusted_baseline_kwh": report.adjusted_series.values(),
            "metered_kwh": report.metered_series.values(),
        }
    )


def plot_frame(report: SavingsReport) -> pd.DataFrame:
    """Baseline, adjusted-baseline and metered curves on one daily (or monthly) axis."""
    granularity = "monthly" if report.method == "linear_monthly" else "daily"
    adjusted = report.adjusted_series
    metered = report.metered_series
    if adjusted.granularity != granularity:
        adjusted = resample_sum(adjusted, granularity)
        metered = resample_sum(metered, granularity)
    rows: List[Dict[str, Any]] = []
    if report.baseline_series is not None:
        for instant, value in zip(report.baseline_series.timestamps(), report.baseline_series.values()):
            rows.append({"bucket_start": format_timestamp(instant), "baseline_kwh": value})
    for instant, base, used in zip(adjusted.timestamps(), adjusted.values(), metered.values()):
        rows.append({"bucket_start": format_timestamp(instant), "adjusted_baseline_kwh": base, "metered_kwh": used})
    return pd.DataFrame(rows, columns=PLOT_COLUMNS)


def export_report(report: SavingsReport, out_dir: str | Path) -> List[Path]:
    """Write savings.json, savings_detail.csv, savings_monthly.csv and savings_plot.csv."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / name for name in ("savings.json", "savings_detail.csv", "savings_monthly.csv", "savings_plot.csv")]
    with open(paths[0], "w", encoding="utf-8") as file:
        json.dump(report.to_dict(), file, indent=2, sort_keys=True)
        file.write("\n")
    write_frame(_detail_frame(report), paths[1])
    write_frame(monthly_breakdown(report), paths[2])
    write_frame(plot_frame(report), paths[3])
    return paths
