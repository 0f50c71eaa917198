"""Control policies that produce SetpointVectors without optimization."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List

import numpy as np

from chillopt.errors import ConfigError, DataError
from chillopt.plant.types import (
    CHW_RANGE_C,
    FAN_SPEED_RANGE,
    PUMP_SPEED_RANGE,
    PlantConfig,
    SetpointVector,
)
from chillopt.timeseries import WeatherRecord


def staged_chiller_count(config: PlantConfig, cooling_demand_kw: float) -> int:
    """Smallest count whose cumulative staging threshold covers the demand."""
    if cooling_demand_kw <= 0:
        return 0
    covered = 0.0
    for count, spec in enumerate(config.chillers, start=1):
        covered += config.stage_threshold * spec.rated_cooling_kw
        if covered >= cooling_demand_kw:
            return count
    return config.n_chillers


def legacy_policy(config: PlantConfig, weather: WeatherRecord, cooling_demand_kw: float) -> SetpointVector:
    """Rule-based operation: fixed speeds, fixed chilled-water setpoint, threshold staging.

    The weather is accepted for interface parity with other policies and
    ignored: the legacy rules look at demand only.
    """
    del weather
    if cooling_demand_kw < 0:
        raise DataError(f"cooling demand must be non-negative, got {cooling_demand_kw}")
    n_chillers = staged_chiller_count(config, cooling_demand_kw)
    if n_chillers == 0:
        return SetpointVector.all_off(config)

    n_pumps = min(config.n_pumps, math.ceil(config.n_pumps * n_chillers / config.n_chillers))
    n_towers = min(config.n_towers, math.ceil(config.n_towers * n_chillers / config.n_chillers))
    speed = config.legacy_speed_frac
    return SetpointVector(
        chiller_on=tuple(i < n_chillers for i in range(config.n_chillers)),
        chw_supply_setpoint_c=(config.legacy_chw_c,) * config.n_chillers,
        pump_speed_frac=tuple(speed if j < n_pumps else 0.0 for j in range(config.n_pumps)),
        pump_on=tuple(j < n_pumps for j in range(config.n_pumps)),
        tower_fan_frac=tuple(speed if k < n_towers else 0.0 for k in range(config.n_towers)),
        tower_on=tuple(k < n_towers for k in range(config.n_towers)),
    )


def random_policy(config: PlantConfig, rng: np.random.Generator, cooling_demand_kw: float) -> SetpointVector:
    """Uniformly random valid setpoints, with at least one of each device on under load."""
    if cooling_demand_kw < 0:
        raise DataError(f"cooling demand must be non-negative, got {cooling_demand_kw}")
    chiller_on = rng.random(config.n_chillers) < 0.5
    pump_on = rng.random(config.n_pumps) < 0.5
    tower_on = rng.random(config.n_towers) < 0.5
    if cooling_demand_kw > 0:
        for bits in (chiller_on, pump_on, tower_on):
            if not bits.any():
                bits[rng.integers(len(bits))] = True
    speeds = rng.uniform(*PUMP_SPEED_RANGE, size=config.n_pumps)
    fans = rng.uniform(*FAN_SPEED_RANGE, size=config.n_towers)
    return SetpointVector(
        chiller_on=tuple(chiller_on),
        chw_supply_setpoint_c=tuple(rng.uniform(*CHW_RANGE_C, size=config.n_chillers)),
        pump_speed_frac=tuple(np.where(pump_on, speeds, 0.0)),
        pump_on=tuple(pump_on),
        tower_fan_frac=tuple(np.where(tower_on, fans, 0.0)),
        tower_on=tuple(tower_on),
    )


@dataclass(frozen=True)
class OperatorVariation:
    """How far operators let the hand-set legacy parameters wander from day to day.

    Each day draws a chilled-water offset, one speed offset shared by the
    pumps and another by the tower fans, and a change of up to the given
    number of pumps and towers against the staged counts.
    """

    chw_c: float = 0.5
    speed_frac: float = 0.05
    extra_pumps: int = 1
    extra_towers: int = 1

    def __post_init__(self):
        if self.chw_c < 0 or self.speed_frac < 0:
            raise ConfigError("operator variation offsets must be non-negative", key="chw_c")
        if self.extra_pumps < 0 or self.extra_towers < 0:
            raise ConfigError("operator variation counts must be non-negative", key="extra_pumps")


@dataclass(frozen=True)
class DailyAdjustment:
    chw_offset_c: float = 0.0
    pump_speed_offset: float = 0.0
    fan_speed_offset: float = 0.0
    pump_delta: int = 0
    tower_delta: int = 0


def draw_adjustments(variation: OperatorVariation, n_days: int, rng: np.random.Generator) -> List[DailyAdjustment]:
    return [
        DailyAdjustment(
            chw_offset_c=float(rng.uniform(-variation.chw_c, variation.chw_c)),
            pump_speed_offset=float(rng.uniform(-variation.speed_frac, variation.speed_frac)),
            fan_speed_offset=float(rng.uniform(-variation.speed_frac, variation.speed_frac)),
            pump_delta=int(rng.integers(-variation.extra_pumps, variation.extra_pumps + 1)),
            tower_delta=int(rng.integers(-variation.extra_towers, variation.extra_towers + 1)),
        )
        for _ in range(n_days)
    ]


def adjust_setpoints(config: PlantConfig, setpoints: SetpointVector, adjustment: DailyAdjustment) -> SetpointVector:
    """Apply one day's operator adjustment to staged setpoints; an idle plant stays idle."""
    if not any(setpoints.chiller_on):
        return setpoints
    n_pumps = int(np.clip(sum(setpoints.pump_on) + adjustment.pump_delta, 1, config.n_pumps))
    n_towers = int(np.clip(sum(setpoints.tower_on) + adjustment.tower_delta, 1, config.n_towers))
    chw = np.clip(np.asarray(setpoints.chw_supply_setpoint_c) + adjustment.chw_offset_c, *CHW_RANGE_C)
    speed = float(np.clip(config.legacy_speed_frac + adjustment.pump_speed_offset, *PUMP_SPEED_RANGE))
    fan = float(np.clip(config.legacy_speed_frac + adjustment.fan_speed_offset, *FAN_SPEED_RANGE))
    return SetpointVector(
        chiller_on=setpoints.chiller_on,
        chw_supply_setpoint_c=tuple(float(v) for v in chw),
        pump_speed_frac=tuple(speed if j < n_pumps else 0.0 for j in range(config.n_pumps)),
        pump_on=tuple(j < n_pumps for j in range(config.n_pumps)),
        tower_fan_frac=tuple(fan if k < n_towers else 0.0 for k in range(config.n_towers)),
        tower_on=tuple(k < n_towers for k in range(config.n_towers)),
    )
