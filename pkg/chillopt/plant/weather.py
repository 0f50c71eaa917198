"""Synthetic weather: seasonal and diurnal sinusoids plus seeded AR(1) noise."""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime
from typing import Dict, Optional

import numpy as np
import pandas as pd

from chillopt.errors import ConfigError, DataError
from chillopt.logger import get_logger
from chillopt.rng import derive_rng
from chillopt.timeseries import INTERVALS_PER_DAY, TimeSeries, WeatherRecord, to_utc

logger = get_logger(__name__)

DRY_BULB_RANGE_C = (5.0, 38.0)
HUMIDITY_RANGE_PCT = (30.0, 100.0)


@dataclass(frozen=True)
class WeatherProfile:
    annual_mean_c: float = 23.0
    seasonal_amplitude_c: float = 5.0
    diurnal_amplitude_c: float = 4.0
    warmest_day_of_year: float = 200.0
    warmest_hour: float = 15.0
    noise_sd_c: float = 1.0
    noise_persistence: float = 0.95
    humidity_mean_pct: float = 75.0
    humidity_diurnal_amplitude_pct: float = 12.0
    humidity_noise_sd_pct: float = 4.0
    start: str = "2018-03-01T00:00:00Z"

    def __post_init__(self):
        if not 0.0 <= self.noise_persistence < 1.0:
            raise ConfigError("noise_persistence must be in [0, 1)", key="noise_persistence")
        if self.noise_sd_c < 0 or self.humidity_noise_sd_pct < 0:
            raise ConfigError("noise levels must be non-negative")


PROFILES: Dict[str, WeatherProfile] = {
    "subtropical": WeatherProfile(),
}


def resolve_profile(profile: str | WeatherProfile) -> WeatherProfile:
    if isinstance(profile, WeatherProfile):
        return profile
    try:
        return PROFILES[profile]
    except KeyError as exc:
        raise ConfigError(f"unknown weather profile '{profile}'", key="profile") from exc


def _ar1(rng: np.random.Generator, n: int, sd: float, phi: float) -> np.ndarray:
    shocks = rng.normal(0.0, sd * np.sqrt(1.0 - phi * phi), size=n)
    noise = np.empty(n)
    noise[0] = rng.normal(0.0, sd)
    for i in range(1, n):
        noise[i] = phi * noise[i - 1] + shocks[i]
    return noise


def synth_weather(
    seed: int,
    n_days: int,
    profile: str | WeatherProfile = "subtropical",
    start: Optional[datetime | str] = None,
    offset_c: float = 0.0,
) -> TimeSeries[WeatherRecord]:
    """Deterministic 15-minute weather for ``n_days`` days.

    ``offset_c`` shifts every dry-bulb value before clamping (a warmer or
    cooler year with the same shape).
    """
    if n_days < 1:
        raise DataError(f"n_days must be at least 1, got {n_days}")
    spec = resolve_profile(profile)
    begin = to_utc(start or spec.start)
    n = n_days * INTERVALS_PER_DAY
    stamps = pd.date_range(begin, periods=n, freq="15min")

    day_of_year = stamps.dayofyear.to_numpy() + (stamps.hour.to_numpy() + stamps.minute.to_numpy() / 60.0) / 24.0
    hour = stamps.hour.to_numpy() + stamps.minute.to_numpy() / 60.0
    seasonal = np.cos(2.0 * np.pi * (day_of_year - spec.warmest_day_of_year) / 365.25)
    diurnal = np.cos(2.0 * np.pi * (hour - spec.warmest_hour) / 24.0)

    rng = derive_rng(seed, "weather")
    temp_noise = _ar1(rng, n, spec.noise_sd_c, spec.noise_persistence)
    humidity_noise = _ar1(rng, n, spec.humidity_noise_sd_pct, spec.noise_persistence)

    dry = (
        spec.annual_mean_c
        + spec.seasonal_amplitude_c * seasonal
        + spec.diurnal_amplitude_c * diurnal
        + temp_noise
        + offset_c
    )
    dry = np.clip(dry, *DRY_BULB_RANGE_C)
    humidity = spec.humidity_mean_pct - spec.humidity_diurnal_amplitude_pct * diurnal + humidity_noise
    humidity = np.clip(humidity, *HUMIDITY_RANGE_PCT)

    logger.debug(f"Synthesized {n_days} days of weather from {begin.isoformat()} (seed {seed})")
    return TimeSeries(
        start=begin,
        records=tuple(WeatherRecord(float(t), float(h)) for t, h in zip(dry, humidity)),
    )
