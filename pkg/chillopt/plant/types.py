"""Plant configuration, control decision and output types."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime
from typing import Any, Dict, List, Mapping, Tuple

import numpy as np

from chillopt.config import build_dataclass, dataclass_to_dict
from chillopt.errors import DataError
from chillopt.timeseries import EnergyRecord, WeatherRecord

CHW_RANGE_C = (5.0, 11.0)
PUMP_SPEED_RANGE = (0.3, 1.0)
FAN_SPEED_RANGE = (0.2, 1.0)


@dataclass(frozen=True)
class ChillerSpec:
    rated_cooling_kw: float = 1000.0
    design_cop: float = 5.5
    # efficiency factor a + b*plr + c*plr^2, normalised to 1 at full load
    part_load_coeffs: Tuple[float, float, float] = (0.2, 1.4, -0.6)

    def __post_init__(self):
        if self.rated_cooling_kw <= 0 or self.design_cop <= 0:
            raise DataError("chiller ratings must be positive")
        if abs(sum(self.part_load_coeffs) - 1.0) > 1e-9:
            raise DataError(f"part-load coefficients must sum to 1, got {sum(self.part_load_coeffs)}")


@dataclass(frozen=True)
class PumpSpec:
    rated_power_kw: float = 15.0

    def __post_init__(self):
        if self.rated_power_kw <= 0:
            raise DataError("pump rated power must be positive")


@dataclass(frozen=True)
class TowerSpec:
    rated_fan_kw: float = 15.0
    design_approach_c: float = 5.0

    def __post_init__(self):
        if self.rated_fan_kw <= 0 or self.design_approach_c <= 0:
            raise DataError("tower ratings must be positive")


@dataclass(frozen=True)
class PlantConfig:
    chillers: Tuple[ChillerSpec, ...] = (ChillerSpec(),) * 5
    pumps: Tuple[PumpSpec, ...] = (PumpSpec(),) * 12
    towers: Tuple[TowerSpec, ...] = (TowerSpec(),) * 4
    design_lift_c: float = 18.0
    design_range_c: float = 5.0
    min_lift_c: float = 1.0
    cop_clamp: float = 1.5
    approach_floor_c: float = 1.0
    fan_approach_factor: float = 0.6
    stage_threshold: float = 0.85
    legacy_speed_frac: float = 0.9
    legacy_chw_c: float = 7.0

    def __post_init__(self):
        if not self.chillers or not self.pumps or not self.towers:
            raise DataError("a plant needs at least one chiller, pump and tower")
        if self.design_lift_c <= 0 or self.min_lift_c <= 0:
            raise DataError("lifts must be positive")
        if not 0 < self.stage_threshold <= 1:
            raise DataError("stage_threshold must be in (0, 1]")

    @classmethod
    def uniform(
        cls,
        n_chillers: int = 5,
        n_pumps: int = 12,
        n_towers: int = 4,
        chiller: ChillerSpec = ChillerSpec(),
        pump: PumpSpec = PumpSpec(),
        tower: TowerSpec = TowerSpec(),
        **kwargs: Any,
    ) -> "PlantConfig":
        return cls(
            chillers=(chiller,) * n_chillers,
            pumps=(pump,) * n_pumps,
            towers=(tower,) * n_towers,
            **kwargs,
        )

    @property
    def n_chillers(self) -> int:
        return len(self.chillers)

    @property
    def n_pumps(self) -> int:
        return len(self.pumps)

    @property
    def n_towers(self) -> int:
        return len(self.towers)

    @property
    def n_slots(self) -> int:
        return 2 * (self.n_chillers + self.n_pumps + self.n_towers)

    def capacities(self) -> np.ndarray:
        return np.array([c.rated_cooling_kw for c in self.chillers], dtype=float)

    def total_capacity_kw(self) -> float:
        return float(self.capacities().sum())

    def slot_names(self) -> List[str]:
        """Stable column names of the flattened SetpointVector."""
        names = [f"chiller_on_{i + 1}" for i in range(self.n_chillers)]
        names += [f"chw_supply_setpoint_c_{i + 1}" for i in range(self.n_chillers)]
        names += [f"pump_speed_frac_{j + 1}" for j in range(self.n_pumps)]
        names += [f"pump_on_{j + 1}" for j in range(self.n_pumps)]
        names += [f"tower_fan_frac_{k + 1}" for k in range(self.n_towers)]
        names += [f"tower_on_{k + 1}" for k in range(self.n_towers)]
        return names

    def slot_layout(self) -> Dict[str, slice]:
        c, p, t = self.n_chillers, self.n_pumps, self.n_towers
        return {
            "chiller_on": slice(0, c),
            "chw_supply_setpoint_c": slice(c, 2 * c),
            "pump_speed_frac": slice(2 * c, 2 * c + p),
            "pump_on": slice(2 * c + p, 2 * c + 2 * p),
            "tower_fan_frac": slice(2 * c + 2 * p, 2 * c + 2 * p + t),
            "tower_on": slice(2 * c + 2 * p + t, 2 * c + 2 * p + 2 * t),
        }

    def slot_bounds(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(lower, upper, discrete-mask) arrays over the flattened slots."""
        layout = self.slot_layout()
        lower = np.zeros(self.n_slots)
        upper = np.ones(self.n_slots)
        discrete = np.zeros(self.n_slots, dtype=bool)
        for name in ("chiller_on", "pump_on", "tower_on"):
            discrete[layout[name]] = True
        lower[layout["chw_supply_setpoint_c"]], upper[layout["chw_supply_setpoint_c"]] = CHW_RANGE_C
        lower[layout["pump_speed_frac"]], upper[layout["pump_speed_frac"]] = PUMP_SPEED_RANGE
        lower[layout["tower_fan_frac"]], upper[layout["tower_fan_frac"]] = FAN_SPEED_RANGE
        return lower, upper, discrete

    def to_dict(self) -> Dict[str, Any]:
        return dataclass_to_dict(self)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "PlantConfig":
        return build_dataclass(cls, data, section="plant")


def _in_range(value: float, bounds: Tuple[float, float]) -> bool:
    return bounds[0] - 1e-9 <= value <= bounds[1] + 1e-9


@dataclass(frozen=True)
class SetpointVector:
    chiller_on: Tuple[bool, ...]
    chw_supply_setpoint_c: Tuple[float, ...]
    pump_speed_frac: Tuple[float, ...]
    pump_on: Tuple[bool, ...]
    tower_fan_frac: Tuple[float, ...]
    tower_on: Tuple[bool, ...]

    def __post_init__(self):
        for name in ("chiller_on", "pump_on", "tower_on"):
            object.__setattr__(self, name, tuple(bool(v) for v in getattr(self, name)))
        for name in ("chw_supply_setpoint_c", "pump_speed_frac", "tower_fan_frac"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))

        if len(self.chiller_on) != len(self.chw_supply_setpoint_c):
            raise DataError("chiller slots have inconsistent lengths")
        if len(self.pump_on) != len(self.pump_speed_frac):
            raise DataError("pump slots have inconsistent lengths")
        if len(self.tower_on) != len(self.tower_fan_frac):
            raise DataError("tower slots have inconsistent lengths")
        for value in self.chw_supply_setpoint_c:
            if not _in_range(value, CHW_RANGE_C):
                raise DataError(f"chilled-water setpoint {value} outside {CHW_RANGE_C}")
        for on, speed in zip(self.pump_on, self.pump_speed_frac):
            if not (_in_range(speed, PUMP_SPEED_RANGE) or (not on and speed == 0.0)):
                raise DataError(f"pump speed {speed} invalid (on={on})")
        for on, fan in zip(self.tower_on, self.tower_fan_frac):
            if not (_in_range(fan, FAN_SPEED_RANGE) or (not on and fan == 0.0)):
                raise DataError(f"tower fan speed {fan} invalid (on={on})")

    @classmethod
    def all_off(cls, config: PlantConfig) -> "SetpointVector":
        return cls(
            chiller_on=(False,) * config.n_chillers,
            chw_supply_setpoint_c=(config.legacy_chw_c,) * config.n_chillers,
            pump_speed_frac=(0.0,) * config.n_pumps,
            pump_on=(False,) * config.n_pumps,
            tower_fan_frac=(0.0,) * config.n_towers,
            tower_on=(False,) * config.n_towers,
        )

    @property
    def n_chillers_on(self) -> int:
        return sum(self.chiller_on)

    @property
    def n_pumps_on(self) -> int:
        return sum(self.pump_on)

    @property
    def n_towers_on(self) -> int:
        return sum(self.tower_on)

    def matches(self, config: PlantConfig) -> bool:
        return (
            len(self.chiller_on) == config.n_chillers
            and len(self.pump_on) == config.n_pumps
            and len(self.tower_on) == config.n_towers
        )

    def flatten(self) -> np.ndarray:
        """Slots in PlantConfig.slot_names order; booleans as 0/1."""
        return np.array(
            [float(v) for v in self.chiller_on]
            + list(self.chw_supply_setpoint_c)
            + list(self.pump_speed_frac)
            + [float(v) for v in self.pump_on]
            + list(self.tower_fan_frac)
            + [float(v) for v in self.tower_on],
            dtype=float,
        )

    def canonical(self) -> np.ndarray:
        """Flattened slots with every off device's continuous slot zeroed."""
        return canonicalize(self.flatten(), len(self.chiller_on), len(self.pump_on), len(self.tower_on))

    @classmethod
    def from_flat(cls, values: np.ndarray, config: PlantConfig) -> "SetpointVector":
        values = np.asarray(values, dtype=float)
        if values.shape != (config.n_slots,):
            raise DataError(f"expected {config.n_slots} slots, got {values.shape}")
        layout = config.slot_layout()
        pump_on = values[layout["pump_on"]] >= 0.5
        tower_on = values[layout["tower_on"]] >= 0.5
        speeds = values[layout["pump_speed_frac"]]
        fans = values[layout["tower_fan_frac"]]
        # off pumps and fans read back as speed 0
        return cls(
            chiller_on=tuple(values[layout["chiller_on"]] >= 0.5),
            chw_supply_setpoint_c=tuple(np.clip(values[layout["chw_supply_setpoint_c"]], *CHW_RANGE_C)),
            pump_speed_frac=tuple(np.where(pump_on, np.clip(speeds, *PUMP_SPEED_RANGE), 0.0)),
            pump_on=tuple(pump_on),
            tower_fan_frac=tuple(np.where(tower_on, np.clip(fans, *FAN_SPEED_RANGE), 0.0)),
            tower_on=tuple(tower_on),
        )


def canonicalize(flat: np.ndarray, n_chillers: int, n_pumps: int, n_towers: int) -> np.ndarray:
    """Zero the continuous slot of every off device. Works on (d,) or (n, d) arrays."""
    out = np.array(flat, dtype=float, copy=True)
    c, p, t = n_chillers, n_pumps, n_towers
    chiller_bits = out[..., 0:c] >= 0.5
    pump_bits = out[..., 2 * c + p : 2 * c + 2 * p] >= 0.5
    tower_bits = out[..., 2 * c + 2 * p + t : 2 * c + 2 * p + 2 * t] >= 0.5
    out[..., 0:c] = chiller_bits
    out[..., c : 2 * c] *= chiller_bits
    out[..., 2 * c : 2 * c + p] *= pump_bits
    out[..., 2 * c + p : 2 * c + 2 * p] = pump_bits
    out[..., 2 * c + 2 * p : 2 * c + 2 * p + t] *= tower_bits
    out[..., 2 * c + 2 * p + t :] = tower_bits
    return out


@dataclass(frozen=True)
class PlantOutput:
    power_kw: float
    cooling_kw: float

    def __post_init__(self):
        if not (math.isfinite(self.power_kw) and math.isfinite(self.cooling_kw)):
            raise DataError("plant output must be finite")
        if self.power_kw < 0 or self.cooling_kw < 0:
            raise DataError("plant output must be non-negative")

    def to_energy(self) -> EnergyRecord:
        return EnergyRecord(self.power_kw, self.cooling_kw)


@dataclass(frozen=True)
class OperationRecord:
    timestamp: datetime
    weather: WeatherRecord
    setpoints: SetpointVector
    output: PlantOutput
    # the cooling load the plant was asked to serve in this interval
    demand_kw: float = field(default=0.0)
