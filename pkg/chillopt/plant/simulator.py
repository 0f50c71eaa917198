"""
Quasi-static simulation of the whole plant for one 15-minute interval.

Delivered cooling is min(demand, on-chiller capacity), split across the
on chillers in proportion to their rated capacity. Chillers reject heat
through the towers, so with no pump or no tower running nothing is
delivered and only parasitic power is drawn.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List

import numpy as np

from chillopt.errors import DataError
from chillopt.plant.devices import chiller_power, fan_power, pump_power, tower_outlet_temp
from chillopt.plant.types import PlantConfig, PlantOutput, SetpointVector
from chillopt.timeseries import WeatherRecord


@dataclass(frozen=True)
class StepBreakdown:
    chiller_kw: List[float]
    pump_kw: List[float]
    fan_kw: List[float]
    cooling_kw: float
    condenser_water_c: float

    @property
    def power_kw(self) -> float:
        return float(sum(self.chiller_kw) + sum(self.pump_kw) + sum(self.fan_kw))


def condenser_inlet_temp(config: PlantConfig, wet_bulb_c: float) -> float:
    approach = max(tower.design_approach_c for tower in config.towers)
    return wet_bulb_c + approach + config.design_range_c


def step_breakdown(
    config: PlantConfig,
    weather: WeatherRecord,
    setpoints: SetpointVector,
    cooling_demand_kw: float,
) -> StepBreakdown:
    """Per-device powers behind plant_step."""
    if cooling_demand_kw < 0 or not np.isfinite(cooling_demand_kw):
        raise DataError(f"cooling demand must be a non-negative number, got {cooling_demand_kw}")
    if not setpoints.matches(config):
        raise DataError("setpoint vector does not match the plant configuration")

    pump_kw = [
        pump_power(spec.rated_power_kw, speed) if on else 0.0
        for spec, speed, on in zip(config.pumps, setpoints.pump_speed_frac, setpoints.pump_on)
    ]
    fan_kw = [
        fan_power(spec.rated_fan_kw, fan) if on else 0.0
        for spec, fan, on in zip(config.towers, setpoints.tower_fan_frac, setpoints.tower_on)
    ]

    chillers_on = [i for i, on in enumerate(setpoints.chiller_on) if on]
    towers_on = [k for k, on in enumerate(setpoints.tower_on) if on]
    circulating = setpoints.n_pumps_on > 0 and len(towers_on) > 0
    capacity = sum(config.chillers[i].rated_cooling_kw for i in chillers_on) if circulating else 0.0
    delivered = min(cooling_demand_kw, capacity)

    chiller_kw = [0.0] * config.n_chillers
    condenser_water = float("nan")
    if towers_on:
        inlet = condenser_inlet_temp(config, weather.wet_bulb_c)
        outlets = [
            tower_outlet_temp(config, inlet, weather.wet_bulb_c, setpoints.tower_fan_frac[k], tower=k)
            for k in towers_on
        ]
        condenser_water = float(np.mean(outlets))

    if delivered > 0:
        for i in chillers_on:
            rated = config.chillers[i].rated_cooling_kw
            plr = min(delivered * rated / capacity / rated, 1.0)
            lift = max(condenser_water - setpoints.chw_supply_setpoint_c[i], config.min_lift_c)
            chiller_kw[i] = chiller_power(config, plr, lift, chiller=i)

    return StepBreakdown(
        chiller_kw=chiller_kw,
        pump_kw=pump_kw,
        fan_kw=fan_kw,
        cooling_kw=float(delivered),
        condenser_water_c=condenser_water,
    )


def plant_step(
    config: PlantConfig,
    weather: WeatherRecord,
    setpoints: SetpointVector,
    cooling_demand_kw: float,
) -> PlantOutput:
    breakdown = step_breakdown(config, weather, setpoints, cooling_demand_kw)
    return PlantOutput(power_kw=breakdown.power_kw, cooling_kw=breakdown.cooling_kw)
