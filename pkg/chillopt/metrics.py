"""
Forecast-quality and correlation metrics.

MAPE is computed daily-first: each calendar day contributes the mean of its
absolute percentage errors, and the reported value is the mean over days.
The confidence interval is a seeded percentile bootstrap over daily values.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Sequence

import numpy as np
import pandas as pd

from chillopt.errors import DataError
from chillopt.logger import get_logger
from chillopt.timeseries import TimeSeries, resample_mean

logger = get_logger(__name__)

CI_LEVEL = 0.95
DEFAULT_RESAMPLES = 1000
DEFAULT_MIN_DAY_COVERAGE = 0.5


@dataclass(frozen=True)
class MapeResult:
    mape_pct: float
    ci_halfwidth_pct: float
    ci_level: float = CI_LEVEL
    n_days: int = 1
    excluded_points: int = 0

    def __post_init__(self):
        if self.ci_halfwidth_pct < 0:
            raise DataError("confidence half-width must be non-negative")
        if self.n_days < 1:
            raise DataError("MAPE needs at least one day")

    def to_dict(self) -> Dict[str, float]:
        return {
            "mape_pct": self.mape_pct,
            "ci_halfwidth_pct": self.ci_halfwidth_pct,
            "ci_level": self.ci_level,
            "n_days": self.n_days,
            "excluded_points": self.excluded_points,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, float]) -> "MapeResult":
        return cls(
            mape_pct=float(data["mape_pct"]),
            ci_halfwidth_pct=float(data["ci_halfwidth_pct"]),
            ci_level=float(data.get("ci_level", CI_LEVEL)),
            n_days=int(data.get("n_days", 1)),
            excluded_points=int(data.get("excluded_points", 0)),
        )


def bootstrap_halfwidth(values: np.ndarray, n_resamples: int, seed: int, level: float = CI_LEVEL) -> float:
    """Half-width of the percentile bootstrap interval of the mean."""
    if len(values) < 2:
        return 0.0
    rng = np.random.default_rng(seed)
    picks = rng.integers(0, len(values), size=(n_resamples, len(values)))
    means = values[picks].mean(axis=1)
    tail = (1.0 - level) / 2.0 * 100.0
    low, high = np.percentile(means, [tail, 100.0 - tail])
    return float(max(high - low, 0.0) / 2.0)


def _check_aligned(actual: TimeSeries, forecast: TimeSeries) -> None:
    if not actual.is_aligned_with(forecast):
        raise DataError(
            f"misaligned series: actual starts {actual.start.isoformat()} with {len(actual)} records, "
            f"forecast starts {forecast.start.isoformat()} with {len(forecast)} records"
        )


def _comparable(actual: TimeSeries, forecast: TimeSeries):
    a = actual.values()
    f = forecast.values()
    present = ~np.isnan(a) & ~np.isnan(f)
    # MAPE is undefined at zero actuals
    zero = present & (a <= 0)
    usable = present & ~zero
    return a, f, present, usable, int(zero.sum())


def mape(
    actual: TimeSeries[float],
    forecast: TimeSeries[float],
    *,
    min_day_coverage: float = DEFAULT_MIN_DAY_COVERAGE,
    n_resamples: int = DEFAULT_RESAMPLES,
    seed: int = 0,
) -> MapeResult:
    """Daily-first MAPE with a bootstrap confidence half-width."""
    _check_aligned(actual, forecast)
    a, f, present, usable, excluded = _comparable(actual, forecast)

    days = actual.timestamps().normalize()
    frame = pd.DataFrame(
        {
            "day": days,
            "present": present,
            "usable": usable,
            "ape": np.where(usable, np.abs(a - f) / np.where(usable, a, 1.0), np.nan),
        }
    )
    daily = []
    for _, group in frame.groupby("day", sort=True):
        coverage = group["present"].mean()
        if coverage < min_day_coverage or not group["usable"].any():
            continue
        daily.append(group["ape"].mean())

    if not daily:
        raise DataError("no comparable points")
    if excluded:
        logger.debug(f"MAPE excluded {excluded} zero-actual points")

    daily_values = np.asarray(daily, dtype=float)
    return MapeResult(
        mape_pct=float(daily_values.mean() * 100.0),
        ci_halfwidth_pct=bootstrap_halfwidth(daily_values, n_resamples, seed) * 100.0,
        n_days=len(daily_values),
        excluded_points=excluded,
    )


def mape_by_interval(actual: TimeSeries[float], forecast: TimeSeries[float]) -> float:
    """Plain per-interval MAPE (percent), for comparison with the daily-first default."""
    _check_aligned(actual, forecast)
    a, f, _, usable, _ = _comparable(actual, forecast)
    if not usable.any():
        raise DataError("no comparable points")
    return float(np.mean(np.abs(a[usable] - f[usable]) / a[usable]) * 100.0)


def _to_array(series: TimeSeries[float] | Sequence[float] | np.ndarray) -> np.ndarray:
    if isinstance(series, TimeSeries):
        return series.values()
    return np.asarray(series, dtype=float)


def pearson_corr(x: TimeSeries[float] | Sequence[float], y: TimeSeries[float] | Sequence[float]) -> float:
    """Pearson product-moment correlation over pairs where both values are present."""
    xs = _to_array(x)
    ys = _to_array(y)
    if len(xs) != len(ys):
        raise DataError("misaligned series: lengths differ")
    keep = ~np.isnan(xs) & ~np.isnan(ys)
    xs, ys = xs[keep], ys[keep]
    if len(xs) < 3:
        raise DataError("pearson_corr needs at least 3 paired values")
    dx = xs - xs.mean()
    dy = ys - ys.mean()
    sxx = float(np.dot(dx, dx))
    syy = float(np.dot(dy, dy))
    if sxx <= 1e-12 * max(1.0, float(np.dot(xs, xs))) or syy <= 1e-12 * max(1.0, float(np.dot(ys, ys))):
        raise DataError("degenerate series")
    return float(np.clip(np.dot(dx, dy) / np.sqrt(sxx * syy), -1.0, 1.0))


def weather_power_correlations(history: TimeSeries) -> Dict[str, float]:
    """Correlation of daily-mean extrinsic parameters with daily energy.

    ``history`` holds operation records (anything with ``.weather`` and
    ``.output``).
    """
    dry = history.map(lambda r: r.weather.dry_bulb_c)
    humidity = history.map(lambda r: r.weather.rel_humidity_pct)
    wet = history.map(lambda r: r.weather.wet_bulb_c)
    power = history.map(lambda r: r.output.power_kw)
    daily_power = resample_mean(power, "daily")
    result = {}
    for name, series in (("dry_bulb_c", dry), ("rel_humidity_pct", humidity), ("wet_bulb_c", wet)):
        result[name] = pearson_corr(resample_mean(series, "daily"), daily_power)
    return result
