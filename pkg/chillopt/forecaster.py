"""
Weather-driven load forecasting.

Two families live here: ordinary least-squares models on daily or monthly
aggregates (temperature against energy) and the 15-minute profile
forecaster, a windowed autoregressive regressor that rolls forward one
interval at a time, feeding its own predictions back into the lag window.
"""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field
from datetime import datetime
from typing import Dict, List, Literal, Optional, Protocol

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from chillopt.errors import ConfigError, DataError, ModelError
from chillopt.logger import get_logger
from chillopt.metrics import MapeResult, mape
from chillopt.plant.types import OperationRecord
from chillopt.regressor import (
    FittedRegressor,
    RegressorParams,
    fit_regressor,
    read_model_document,
    write_model_document,
)
from chillopt.timeseries import INTERVALS_PER_DAY, TimeSeries, WeatherRecord, resample_mean, to_utc

logger = get_logger(__name__)

Target = Literal["cooling", "power"]
AggregateGranularity = Literal["daily", "monthly"]

EXOGENOUS_FEATURES = ("dry_bulb_c", "rel_humidity_pct", "hour_sin", "hour_cos", "weekend")


# linear models ------------------------------------------------------------


@dataclass(frozen=True)
class LinearModel:
    slope: float
    intercept: float
    granularity: AggregateGranularity
    fit_r2: float
    n_buckets: int = 3
    temp_mean: float = 0.0
    target_mean: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.slope) and np.isfinite(self.intercept)):
            raise DataError("linear model coefficients must be finite")
        if self.n_buckets < 3:
            raise DataError("insufficient data: a linear model needs at least 3 buckets")

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


def _paired_aggregates(
    temps: TimeSeries[float], targets: TimeSeries[float], granularity: AggregateGranularity
) -> tuple[np.ndarray, np.ndarray]:
    if len(temps) == 0 or len(targets) == 0:
        raise DataError("empty input")
    if not temps.is_aligned_with(targets):
        raise DataError("misaligned series: temperature and target series differ in start, step or length")
    x = resample_mean(temps, granularity).values()
    y = resample_mean(targets, granularity).values()
    keep = ~np.isnan(x) & ~np.isnan(y)
    return x[keep], y[keep]


def fit_linear(
    temps: TimeSeries[float], targets: TimeSeries[float], granularity: AggregateGranularity
) -> LinearModel:
    """Ordinary least squares of bucket-mean target on bucket-mean temperature."""
    x, y = _paired_aggregates(temps, targets, granularity)
    if len(x) < 3:
        raise DataError(f"insufficient data: {len(x)} {granularity} buckets, need at least 3")
    x_mean, y_mean = float(x.mean()), float(y.mean())
    sxx = float(np.sum((x - x_mean) ** 2))
    if sxx <= 1e-12:
        raise DataError("degenerate series: temperature has zero variance")
    slope = float(np.sum((x - x_mean) * (y - y_mean)) / sxx)
    intercept = y_mean - slope * x_mean

    residual = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y_mean) ** 2))
    r2 = 1.0 if ss_tot <= 1e-12 else 1.0 - float(np.sum(residual**2)) / ss_tot
    return LinearModel(
        slope=slope,
        intercept=intercept,
        granularity=granularity,
        fit_r2=float(np.clip(r2, 0.0, 1.0)),
        n_buckets=len(x),
        temp_mean=x_mean,
        target_mean=y_mean,
    )


def predict_linear(model: LinearModel, temp_aggregate: float) -> float:
    return max(0.0, model.slope * temp_aggregate + model.intercept)


MIN_CHANGEPOINT_BUCKETS = 6
BALANCE_STEP_C = 0.25


@dataclass(frozen=True)
class ChangePointModel:
    """Two straight lines joined at a balance temperature.

    ``base`` is the fitted value at the balance point; the slopes apply
    below and above it.
    """

    balance_c: float
    base: float
    slope_below: float
    slope_above: float
    granularity: AggregateGranularity
    fit_r2: float
    n_buckets: int = MIN_CHANGEPOINT_BUCKETS

    def __post_init__(self):
        if not all(np.isfinite([self.balance_c, self.base, self.slope_below, self.slope_above])):
            raise DataError("change-point coefficients must be finite")
        if self.n_buckets < MIN_CHANGEPOINT_BUCKETS:
            raise DataError(f"insufficient data: a change-point model needs {MIN_CHANGEPOINT_BUCKETS} buckets")

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


def _hinge_design(x: np.ndarray, balance_c: float) -> np.ndarray:
    return np.column_stack([np.ones_like(x), np.minimum(x - balance_c, 0.0), np.maximum(x - balance_c, 0.0)])


def fit_changepoint(
    temps: TimeSeries[float], targets: TimeSeries[float], granularity: AggregateGranularity = "daily"
) -> ChangePointModel:
    """Least squares of bucket-mean target on a hinge in bucket-mean temperature.

    The balance temperature is searched on a grid between the 10th and
    90th percentile of the bucket temperatures; the slopes and base are
    solved by ordinary least squares at each candidate and the candidate
    with the smallest squared error wins.
    """
    x, y = _paired_aggregates(temps, targets, granularity)
    if len(x) < MIN_CHANGEPOINT_BUCKETS:
        raise DataError(f"insufficient data: {len(x)} {granularity} buckets, need at least {MIN_CHANGEPOINT_BUCKETS}")
    low, high = np.percentile(x, [10.0, 90.0])
    if high - low <= 1e-9:
        raise DataError("degenerate series: temperature has zero variance")

    best: Optional[tuple[float, np.ndarray, float]] = None
    for balance in np.arange(low, high + BALANCE_STEP_C / 2, BALANCE_STEP_C):
        design = _hinge_design(x, float(balance))
        coeffs, *_ = np.linalg.lstsq(design, y, rcond=None)
        sse = float(np.sum((y - design @ coeffs) ** 2))
        if best is None or sse < best[2]:
            best = (float(balance), coeffs, sse)
    balance, coeffs, sse = best

    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot <= 1e-12 else 1.0 - sse / ss_tot
    logger.debug(f"Change-point fit: balance {balance:.2f} C, slopes {coeffs[1]:.3f}/{coeffs[2]:.3f}, r2 {r2:.3f}")
    return ChangePointModel(
        balance_c=balance,
        base=float(coeffs[0]),
        slope_below=float(coeffs[1]),
        slope_above=float(coeffs[2]),
        granularity=granularity,
        fit_r2=float(np.clip(r2, 0.0, 1.0)),
        n_buckets=len(x),
    )


def predict_changepoint(model: ChangePointModel, temp_aggregate: float) -> float:
    offset = temp_aggregate - model.balance_c
    return max(0.0, model.base + model.slope_below * min(offset, 0.0) + model.slope_above * max(offset, 0.0))


# profile forecaster --------------------------------------------------------


@dataclass(frozen=True)
class ForecasterParams:
    lag_window: int = INTERVALS_PER_DAY
    min_days: int = 60
    holdout_fraction: float = 0.3
    horizon: int = INTERVALS_PER_DAY
    regressor: RegressorParams = RegressorParams()

    def __post_init__(self):
        if self.lag_window < 1 or self.horizon < 1:
            raise ConfigError("lag_window and horizon must be positive", key="lag_window")
        if not 0.0 <= self.holdout_fraction < 1.0:
            raise ConfigError("holdout_fraction must be in [0, 1)", key="holdout_fraction")


class Forecaster(Protocol):
    """Anything that can roll a load profile forward from a lag window."""

    target: Target
    lag_window: int
    train_start: datetime
    train_end: datetime

    def roll_forward(self, weather: TimeSeries[WeatherRecord], lags: np.ndarray) -> np.ndarray: ...


def target_value(record: OperationRecord, target: Target) -> float:
    """Cooling target is the building load the plant was asked to serve."""
    if target == "cooling":
        return record.demand_kw
    if target == "power":
        return record.output.power_kw
    raise DataError(f"unknown forecast target '{target}'")


def exogenous_features(weather: TimeSeries[WeatherRecord]) -> np.ndarray:
    stamps = weather.timestamps()
    hours = stamps.hour.to_numpy() + stamps.minute.to_numpy() / 60.0
    angle = 2.0 * np.pi * hours / 24.0
    dry = weather.map(lambda r: r.dry_bulb_c).values()
    humidity = weather.map(lambda r: r.rel_humidity_pct).values()
    weekend = (stamps.dayofweek.to_numpy() >= 5).astype(float)
    return np.column_stack([dry, humidity, np.sin(angle), np.cos(angle), weekend])


@dataclass
class ProfileForecaster:
    regressor: FittedRegressor
    target: Target
    lag_window: int
    train_start: datetime
    train_end: datetime
    holdout_mape: Optional[MapeResult] = None
    feature_names: List[str] = field(default_factory=list)

    def predict_rows(self, features: np.ndarray) -> np.ndarray:
        return np.maximum(self.regressor.predict(features)[:, 0], 0.0)

    def roll_forward(self, weather: TimeSeries[WeatherRecord], lags: np.ndarray) -> np.ndarray:
        """Recursive multi-step forecast over the weather horizon."""
        window = list(np.asarray(lags, dtype=float)[-self.lag_window :])
        exogenous = exogenous_features(weather)
        out = np.empty(len(weather))
        for step in range(len(weather)):
            row = np.concatenate([window, exogenous[step]])[None, :]
            value = float(self.predict_rows(row)[0])
            out[step] = value
            window.pop(0)
            window.append(value)
        return out


def _design_matrix(values: np.ndarray, exogenous: np.ndarray, lag_window: int) -> tuple[np.ndarray, np.ndarray]:
    windows = sliding_window_view(values, lag_window)[:-1]
    x = np.hstack([windows, exogenous[lag_window:]])
    y = values[lag_window:]
    keep = np.isfinite(x).all(axis=1) & np.isfinite(y)
    return x[keep], y[keep]


def _target_series(history: TimeSeries[OperationRecord], target: Target) -> TimeSeries[float]:
    return history.map(lambda r: target_value(r, target))


def _weather_series(history: TimeSeries[OperationRecord]) -> TimeSeries[WeatherRecord]:
    return history.map(lambda r: r.weather)


def fit_profile(
    history: TimeSeries[OperationRecord],
    target: Target = "cooling",
    hyperparams: ForecasterParams = ForecasterParams(),
) -> ProfileForecaster:
    """Train on the first part of the history, score the chronological holdout, attach the score."""
    n_days = len(history) // INTERVALS_PER_DAY
    if n_days < hyperparams.min_days:
        raise DataError(f"insufficient data: {n_days} days of history, need at least {hyperparams.min_days}")

    split = int(round(n_days * (1.0 - hyperparams.holdout_fraction))) * INTERVALS_PER_DAY
    train = history.slice(0, split)
    values = _target_series(train, target).values()
    x, y = _design_matrix(values, exogenous_features(_weather_series(train)), hyperparams.lag_window)
    if len(x) == 0:
        raise DataError("insufficient data: no complete lag windows in the training span")

    regressor = fit_regressor(x, y, hyperparams.regressor, label=f"forecaster[{target}]")
    forecaster = ProfileForecaster(
        regressor=regressor,
        target=target,
        lag_window=hyperparams.lag_window,
        train_start=train.start,
        train_end=train.end,
        feature_names=[f"lag_{i}" for i in range(hyperparams.lag_window, 0, -1)] + list(EXOGENOUS_FEATURES),
    )
    if split < len(history):
        holdout = history.slice(split)
        forecaster.holdout_mape = evaluate_forecaster(forecaster, holdout, context=train, horizon=hyperparams.horizon)
        logger.info(
            f"Forecaster[{target}] holdout MAPE {forecaster.holdout_mape.mape_pct:.2f}% "
            f"+/- {forecaster.holdout_mape.ci_halfwidth_pct:.2f}"
        )
    return forecaster


def _lag_values(recent_history: TimeSeries, target: Target) -> np.ndarray:
    sample = next((record for record in recent_history if record is not None), None)
    if isinstance(sample, OperationRecord):
        return _target_series(recent_history, target).values()
    return recent_history.values()


def forecast_profile(
    forecaster: Forecaster,
    weather_forecast: TimeSeries[WeatherRecord],
    recent_history: TimeSeries,
) -> TimeSeries[float]:
    """Cooling (or power) profile over the weather horizon, floored at 0.

    ``recent_history`` is a series of operation records or of target
    values ending exactly where the weather forecast starts.
    """
    if len(weather_forecast) == 0:
        return TimeSeries(start=weather_forecast.start, records=())
    if recent_history.end != weather_forecast.start:
        raise DataError("missing lag window: recent history is not contiguous with the weather forecast")
    lags = _lag_values(recent_history, forecaster.target)[-forecaster.lag_window :]
    if len(lags) < forecaster.lag_window or np.isnan(lags).any():
        raise DataError(f"missing lag window: need {forecaster.lag_window} complete past intervals")
    if any(record is None for record in weather_forecast):
        raise DataError("weather forecast has absent records")
    values = np.maximum(forecaster.roll_forward(weather_forecast, lags), 0.0)
    return TimeSeries.from_values(weather_forecast.start, values)


def _check_leakage(forecaster: Forecaster, holdout: TimeSeries) -> None:
    train_start, train_end = to_utc(forecaster.train_start), to_utc(forecaster.train_end)
    if holdout.start < train_end and train_start < holdout.end:
        raise DataError(
            f"data leakage: holdout {holdout.start.isoformat()}..{holdout.end.isoformat()} overlaps "
            f"training span {train_start.isoformat()}..{train_end.isoformat()}"
        )


def evaluate_forecaster(
    forecaster: Forecaster,
    holdout: TimeSeries[OperationRecord],
    context: Optional[TimeSeries[OperationRecord]] = None,
    horizon: int = INTERVALS_PER_DAY,
    seed: int = 0,
) -> MapeResult:
    """Day-by-day roll-forward forecasts over the holdout, scored with daily-first MAPE.

    Lags come from actual records. Without a ``context`` ending where the
    holdout starts, the first lag window of the holdout only feeds lags.
    """
    if len(holdout) == 0:
        raise DataError("empty input")
    _check_leakage(forecaster, holdout)

    actual = _target_series(holdout, forecaster.target)
    lag_source = actual.values()
    offset = 0
    if context is not None and len(context) and context.end == holdout.start:
        prefix = _target_series(context, forecaster.target).values()
        lag_source = np.concatenate([prefix, lag_source])
        offset = len(prefix)

    predicted = np.full(len(holdout), np.nan)
    weather = _weather_series(holdout)
    first = 0 if offset >= forecaster.lag_window else forecaster.lag_window
    for begin in range(first, len(holdout), horizon):
        stop = min(begin + horizon, len(holdout))
        lags = lag_source[offset + begin - forecaster.lag_window : offset + begin]
        chunk = weather.slice(begin, stop)
        if np.isnan(lags).any() or any(record is None for record in chunk):
            continue
        predicted[begin:stop] = np.maximum(forecaster.roll_forward(chunk, lags), 0.0)

    forecast = TimeSeries.from_values(holdout.start, predicted)
    return mape(actual, forecast, seed=seed)


# persistence ---------------------------------------------------------------

MODEL_KIND = "profile_forecaster"


def save_model(forecaster: ProfileForecaster, path: str | os.PathLike) -> None:
    write_model_document(
        path,
        MODEL_KIND,
        {
            "target": forecaster.target,
            "lag_window": forecaster.lag_window,
            "train_start": forecaster.train_start.isoformat(),
            "train_end": forecaster.train_end.isoformat(),
            "feature_names": forecaster.feature_names,
            "holdout_mape": None if forecaster.holdout_mape is None else forecaster.holdout_mape.to_dict(),
            "regressor": forecaster.regressor.to_dict(),
        },
    )


def load_model(path: str | os.PathLike) -> ProfileForecaster:
    document = read_model_document(path, MODEL_KIND)
    regressor = FittedRegressor.from_dict(document["regressor"])
    lag_window = int(document["lag_window"])
    if regressor.n_inputs != lag_window + len(EXOGENOUS_FEATURES):
        raise ModelError("dimension mismatch between lag window and stored weights")
    holdout = document.get("holdout_mape")
    return ProfileForecaster(
        regressor=regressor,
        target=document["target"],
        lag_window=lag_window,
        train_start=to_utc(document["train_start"]),
        train_end=to_utc(document["train_end"]),
        holdout_mape=None if holdout is None else MapeResult.from_dict(holdout),
        feature_names=list(document.get("feature_names", [])),
    )

