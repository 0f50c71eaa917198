"""
Synthetic operation history: weather, building demand, legacy setpoints and plant outputs.

Exports use the weather and energy CSV schemas plus a setpoints CSV whose
columns are the PlantConfig slot names followed by ``cooling_demand_kw``.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, replace
from datetime import datetime
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from chillopt.config import load_config
from chillopt.errors import ConfigError, DataError
from chillopt.logger import get_logger
from chillopt.plant.policy import DailyAdjustment, OperatorVariation, adjust_setpoints, draw_adjustments, legacy_policy
from chillopt.plant.simulator import plant_step
from chillopt.plant.types import OperationRecord, PlantConfig, PlantOutput, SetpointVector
from chillopt.plant.weather import WeatherProfile, synth_weather
from chillopt.rng import derive_rng
from chillopt.timeseries import (
    INTERVALS_PER_DAY,
    EnergyRecord,
    TimeSeries,
    WeatherRecord,
    format_timestamp,
    read_energy_csv,
    read_interval_frame,
    read_weather_csv,
    write_energy_csv,
    write_frame,
    write_weather_csv,
)

logger = get_logger(__name__)

HISTORY_FILES = ("weather.csv", "energy.csv", "setpoints.csv")
DEMAND_COLUMN = "cooling_demand_kw"

Policy = Callable[[PlantConfig, WeatherRecord, float], SetpointVector]


@dataclass(frozen=True)
class DemandModel:
    """Building cooling load: affine in weather plus an occupancy schedule, with multiplicative noise."""

    base_kw: float = 600.0
    temp_slope_kw_per_c: float = 110.0
    reference_temp_c: float = 18.0
    humidity_slope_kw_per_pct: float = 4.0
    reference_humidity_pct: float = 60.0
    weekday_occupied_kw: float = 700.0
    weekend_occupied_kw: float = 150.0
    occupied_start_hour: int = 8
    occupied_end_hour: int = 19
    noise_frac: float = 0.03

    def __post_init__(self):
        if not 0 <= self.occupied_start_hour <= self.occupied_end_hour <= 24:
            raise ConfigError("occupied hours must satisfy 0 <= start <= end <= 24", key="occupied_start_hour")
        if self.noise_frac < 0:
            raise ConfigError("noise_frac must be non-negative", key="noise_frac")


def occupancy_kw(model: DemandModel, timestamps: pd.DatetimeIndex) -> np.ndarray:
    hours = timestamps.hour.to_numpy()
    occupied = (hours >= model.occupied_start_hour) & (hours < model.occupied_end_hour)
    weekend = timestamps.dayofweek.to_numpy() >= 5
    level = np.where(weekend, model.weekend_occupied_kw, model.weekday_occupied_kw)
    return np.where(occupied, level, 0.0)


def demand_series(
    model: DemandModel,
    weather: TimeSeries[WeatherRecord],
    seed: int,
    stream: str = "demand",
) -> TimeSeries[float]:
    """True building cooling demand for a weather series (seeded noise)."""
    if len(weather) == 0:
        raise DataError("empty input")
    dry = weather.map(lambda r: r.dry_bulb_c).values()
    humidity = weather.map(lambda r: r.rel_humidity_pct).values()
    if np.isnan(dry).any():
        raise DataError("weather for demand synthesis must be gap-free")
    deterministic = (
        model.base_kw
        + model.temp_slope_kw_per_c * (dry - model.reference_temp_c)
        + model.humidity_slope_kw_per_pct * (humidity - model.reference_humidity_pct)
        + occupancy_kw(model, weather.timestamps())
    )
    noise = derive_rng(seed, stream).normal(0.0, model.noise_frac, size=len(weather))
    demand = np.maximum(deterministic * (1.0 + noise), 0.0)
    return TimeSeries.from_values(weather.start, demand)


def simulate_operation(
    config: PlantConfig,
    weather: TimeSeries[WeatherRecord],
    demand: TimeSeries[float],
    policy: Policy = legacy_policy,
    adjustments: Optional[Sequence[DailyAdjustment]] = None,
) -> TimeSeries[OperationRecord]:
    """Run a policy against the plant interval by interval.

    With ``adjustments`` (one per day of the series) each day's policy
    output gets that day's operator adjustment.
    """
    if not weather.is_aligned_with(demand):
        raise DataError("misaligned series: weather and demand")
    if adjustments is not None and len(adjustments) * INTERVALS_PER_DAY < len(weather):
        raise DataError(f"need one adjustment per day, got {len(adjustments)} for {len(weather)} intervals")
    records: List[OperationRecord] = []
    for i, (instant, conditions, load) in enumerate(zip(weather.timestamps(), weather.records, demand.records)):
        setpoints = policy(config, conditions, load)
        if adjustments is not None:
            setpoints = adjust_setpoints(config, setpoints, adjustments[i // INTERVALS_PER_DAY])
        output = plant_step(config, conditions, setpoints, load)
        records.append(OperationRecord(instant.to_pydatetime(), conditions, setpoints, output, load))
    return TimeSeries(start=weather.start, records=tuple(records))


def generate_history(
    config: PlantConfig,
    seed: int,
    n_days: int,
    demand_model: Optional[DemandModel] = None,
    profile: str | WeatherProfile = "subtropical",
    start: Optional[datetime | str] = None,
    variation: Optional[OperatorVariation] = None,
    meter_noise_frac: float = 0.0,
) -> TimeSeries[OperationRecord]:
    """Legacy-operated plant history, 96 records per day, deterministic per (config, seed).

    ``variation`` lets the legacy parameters drift day to day and
    ``meter_noise_frac`` adds metering noise to the recorded power.
    """
    demand_model = demand_model or DemandModel()
    weather = synth_weather(seed, n_days, profile=profile, start=start)
    demand = demand_series(demand_model, weather, seed)
    adjustments = None if variation is None else draw_adjustments(variation, n_days, derive_rng(seed, "operator"))
    history = simulate_operation(config, weather, demand, adjustments=adjustments)
    if meter_noise_frac > 0:
        history = metered(history, meter_noise_frac, seed)
    logger.info(f"Generated {n_days} days of plant history ({len(history)} records, seed {seed})")
    return history


def meter_readings(power_kw: np.ndarray, noise_frac: float, rng: np.random.Generator) -> np.ndarray:
    """Metered power: true power times (1 + Gaussian error), never negative."""
    if noise_frac < 0:
        raise ConfigError("meter noise must be non-negative", key="meter_noise_frac")
    power_kw = np.asarray(power_kw, dtype=float)
    return np.maximum(power_kw * (1.0 + rng.normal(0.0, noise_frac, size=power_kw.shape)), 0.0)


def metered(
    operations: TimeSeries[OperationRecord], noise_frac: float, seed: int, stream: str = "meter"
) -> TimeSeries[OperationRecord]:
    """The same operations as a power meter with relative error ``noise_frac`` records them."""
    present = [i for i, record in enumerate(operations.records) if record is not None]
    readings = meter_readings(
        np.array([operations.records[i].output.power_kw for i in present]), noise_frac, derive_rng(seed, stream)
    )
    records = list(operations.records)
    for i, reading in zip(present, readings):
        records[i] = replace(records[i], output=replace(records[i].output, power_kw=float(reading)))
    return TimeSeries(start=operations.start, records=tuple(records))


def energy_of(history: TimeSeries[OperationRecord]) -> TimeSeries[EnergyRecord]:
    return history.map(lambda r: r.output.to_energy())


def weather_of(history: TimeSeries[OperationRecord]) -> TimeSeries[WeatherRecord]:
    return history.map(lambda r: r.weather)


def power_of(history: TimeSeries[OperationRecord]) -> TimeSeries[float]:
    return history.map(lambda r: r.output.power_kw)


def cooling_of(history: TimeSeries[OperationRecord]) -> TimeSeries[float]:
    return history.map(lambda r: r.output.cooling_kw)


def demand_of(history: TimeSeries[OperationRecord]) -> TimeSeries[float]:
    return history.map(lambda r: r.demand_kw)


# persistence ---------------------------------------------------------------


def setpoint_columns(config: PlantConfig) -> List[str]:
    return ["timestamp", *config.slot_names(), DEMAND_COLUMN]


def write_setpoints_csv(history: TimeSeries[OperationRecord], config: PlantConfig, path: str | Path) -> None:
    columns = setpoint_columns(config)
    rows = []
    for instant, record in zip(history.timestamps(), history.records):
        row: Dict[str, object] = {"timestamp": format_timestamp(instant)}
        if record is not None:
            row.update(zip(config.slot_names(), record.setpoints.flatten()))
            row[DEMAND_COLUMN] = record.demand_kw
        rows.append(row)
    write_frame(pd.DataFrame(rows, columns=columns), path)


def write_history(history: TimeSeries[OperationRecord], config: PlantConfig, out_dir: str | Path) -> List[Path]:
    """Write weather.csv, energy.csv and setpoints.csv into out_dir."""
    if len(history) == 0:
        raise DataError("empty input")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / name for name in HISTORY_FILES]
    write_weather_csv(weather_of(history), paths[0])
    write_energy_csv(energy_of(history), paths[1])
    write_setpoints_csv(history, config, paths[2])
    return paths


def read_history(in_dir: str | Path, config: PlantConfig) -> TimeSeries[OperationRecord]:
    """Rebuild operation records from the three history CSVs; any absent part makes the record absent."""
    base = Path(in_dir)
    weather = read_weather_csv(base / HISTORY_FILES[0])
    energy = read_energy_csv(base / HISTORY_FILES[1])
    start, frame = read_interval_frame(base / HISTORY_FILES[2], setpoint_columns(config))
    if not (weather.start == energy.start == start and len(weather) == len(energy) == len(frame)):
        raise DataError(f"misaligned series in {base}")

    slots = frame[config.slot_names()].to_numpy(dtype=float)
    demand = frame[DEMAND_COLUMN].to_numpy(dtype=float)
    records: List[Optional[OperationRecord]] = []
    for i, (instant, conditions, measured) in enumerate(zip(weather.timestamps(), weather.records, energy.records)):
        if conditions is None or measured is None or np.isnan(slots[i]).any() or np.isnan(demand[i]):
            records.append(None)
            continue
        records.append(
            OperationRecord(
                timestamp=instant.to_pydatetime(),
                weather=conditions,
                setpoints=SetpointVector.from_flat(slots[i], config),
                output=PlantOutput(measured.power_kw, measured.cooling_kw),
                demand_kw=float(demand[i]),
            )
        )
    return TimeSeries(start=start, records=tuple(records))


def save_plant_config(config: PlantConfig, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as file:
        json.dump(config.to_dict(), file, indent=2)
        file.write("\n")


def load_plant_config(path: str | os.PathLike) -> PlantConfig:
    return PlantConfig.from_dict(load_config(path))
