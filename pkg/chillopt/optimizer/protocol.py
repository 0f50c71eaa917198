"""Protocols for search landscapes and pluggable optimizers."""

from __future__ import annotations

from typing import Any, Optional, Protocol, Type, runtime_checkable

import numpy as np

from chillopt.plant.simulator import plant_step
from chillopt.plant.types import PlantConfig, SetpointVector
from chillopt.surrogate import SurrogateModel, predict_batch
from chillopt.timeseries import WeatherRecord


@runtime_checkable
class Landscape(Protocol):
    """Maps candidate rows to predicted (power_kw, cooling_kw) rows."""

    def evaluate(self, candidates: np.ndarray) -> np.ndarray:
        """(n, d) candidates -> (n, 2) outputs, row order preserved."""


@runtime_checkable
class Optimizer(Protocol):
    """Protocol implemented by each search algorithm."""

    name: str
    config_type: Type[Any]

    def run(self, problem: Any, config: Any, initial: Optional[np.ndarray] = None) -> Any:
        """Search the problem and return an OptResult; ``initial`` rows seed the first candidates."""


class SurrogateLandscape:
    """The trained plant surrogate under fixed weather and demand."""

    def __init__(self, model: SurrogateModel, weather: WeatherRecord, cooling_demand_kw: float):
        self.model = model
        self.weather = weather
        self.cooling_demand_kw = cooling_demand_kw

    def evaluate(self, candidates: np.ndarray) -> np.ndarray:
        return predict_batch(self.model, candidates, self.weather, self.cooling_demand_kw)


class PlantOracle:
    """The simulated plant itself, used as a perfect surrogate."""

    def __init__(self, config: PlantConfig, weather: WeatherRecord, cooling_demand_kw: float):
        self.config = config
        self.weather = weather
        self.cooling_demand_kw = cooling_demand_kw

    def evaluate(self, candidates: np.ndarray) -> np.ndarray:
        rows = np.atleast_2d(candidates)
        out = np.empty((len(rows), 2))
        for i, row in enumerate(rows):
            output = plant_step(
                self.config, self.weather, SetpointVector.from_flat(row, self.config), self.cooling_demand_kw
            )
            out[i] = (output.power_kw, output.cooling_kw)
        return out
