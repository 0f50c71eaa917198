"""
Holistic plant surrogate: (setpoints, weather, demand) -> (power, cooling).

Only the extrinsic inputs and the two plant outputs are modeled; device
internals are never observed. Off devices are canonicalized before
featurization so every encoding of "pump off" maps to the same row. The
per-input min/max box seen in training is kept as the training domain.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from datetime import datetime
from typing import Any, Dict, List, Optional

import numpy as np

from chillopt.errors import ConfigError, DataError, ModelError
from chillopt.logger import get_logger
from chillopt.metrics import MapeResult, mape
from chillopt.plant.types import OperationRecord, PlantConfig, PlantOutput, SetpointVector, canonicalize
from chillopt.regressor import (
    FittedRegressor,
    RegressorParams,
    fit_regressor,
    read_model_document,
    write_model_document,
)
from chillopt.timeseries import INTERVALS_PER_DAY, TimeSeries, WeatherRecord, to_utc

logger = get_logger(__name__)

EXTRINSIC_INPUTS = ("dry_bulb_c", "wet_bulb_c", "cooling_demand_kw")
OUTPUTS = ("power_kw", "cooling_kw")
MODEL_KIND = "plant_surrogate"


@dataclass(frozen=True)
class SurrogateParams:
    min_days: int = 60
    regressor: RegressorParams = RegressorParams()

    def __post_init__(self):
        if self.min_days < 0:
            raise ConfigError("min_days must be non-negative", key="min_days")


@dataclass
class SurrogateModel:
    regressor: FittedRegressor
    plant_shape: tuple[int, int, int]
    input_names: List[str]
    domain_min: np.ndarray
    domain_max: np.ndarray
    degenerate_inputs: List[str] = field(default_factory=list)
    train_start: Optional[datetime] = None
    train_end: Optional[datetime] = None
    operating_min: Optional[np.ndarray] = None
    operating_max: Optional[np.ndarray] = None

    @property
    def n_inputs(self) -> int:
        return len(self.input_names)

    @property
    def n_slots(self) -> int:
        return self.n_inputs - len(EXTRINSIC_INPUTS)


@dataclass(frozen=True)
class SurrogateMetrics:
    power_mape: MapeResult
    cooling_mape: MapeResult
    ood_fraction: float
    n_rows: int = 0

    def __post_init__(self):
        if not 0.0 <= self.ood_fraction <= 1.0:
            raise DataError(f"ood_fraction {self.ood_fraction} outside [0, 1]")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "power_mape": self.power_mape.to_dict(),
            "cooling_mape": self.cooling_mape.to_dict(),
            "ood_fraction": self.ood_fraction,
            "n_rows": self.n_rows,
        }


def _plant_shape(setpoints: SetpointVector) -> tuple[int, int, int]:
    return len(setpoints.chiller_on), len(setpoints.pump_on), len(setpoints.tower_on)


def featurize_batch(
    flat_setpoints: np.ndarray,
    plant_shape: tuple[int, int, int],
    weather: WeatherRecord,
    cooling_demand_kw: float,
) -> np.ndarray:
    """Rows of canonicalized slots followed by dry bulb, wet bulb and demand."""
    slots = canonicalize(np.atleast_2d(flat_setpoints), *plant_shape)
    extrinsic = np.tile([weather.dry_bulb_c, weather.wet_bulb_c, cooling_demand_kw], (len(slots), 1))
    return np.hstack([slots, extrinsic])


def featurize(setpoints: SetpointVector, weather: WeatherRecord, cooling_demand_kw: float) -> np.ndarray:
    return featurize_batch(setpoints.flatten(), _plant_shape(setpoints), weather, cooling_demand_kw)[0]


def _history_arrays(history: TimeSeries[OperationRecord]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(features, targets, record indices) for present records."""
    rows, targets, index = [], [], []
    for i, record in enumerate(history.records):
        if record is None:
            continue
        rows.append(featurize(record.setpoints, record.weather, record.demand_kw))
        targets.append((record.output.power_kw, record.output.cooling_kw))
        index.append(i)
    if not rows:
        raise DataError("empty input")
    return np.vstack(rows), np.asarray(targets, dtype=float), np.asarray(index)


def _input_names(history: TimeSeries[OperationRecord]) -> tuple[List[str], tuple[int, int, int]]:
    sample = next(record for record in history.records if record is not None)
    shape = _plant_shape(sample.setpoints)
    return PlantConfig.uniform(*shape).slot_names() + list(EXTRINSIC_INPUTS), shape


def _operating_range(slots: np.ndarray, config: PlantConfig) -> tuple[np.ndarray, np.ndarray]:
    """Per-slot range of the values on devices actually ran at, pooled over devices of a kind.

    Off devices read 0 after canonicalization and are ignored; a kind never
    seen running keeps the full device range. Switch slots span [0, 1].
    """
    lower, upper, _ = config.slot_bounds()
    layout = config.slot_layout()
    for kind in ("chw_supply_setpoint_c", "pump_speed_frac", "tower_fan_frac"):
        values = slots[:, layout[kind]]
        running = values[values > 0]
        if running.size:
            lower[layout[kind]], upper[layout[kind]] = running.min(), running.max()
    return lower, upper


def train_surrogate(
    history: TimeSeries[OperationRecord],
    hyperparams: SurrogateParams = SurrogateParams(),
    sample_weight: Optional[np.ndarray] = None,
) -> SurrogateModel:
    """Fit the two-output regressor on every present record of the history.

    ``sample_weight`` holds one weight per record of ``history`` (absent
    records included) and lets callers rebalance mixed datasets.
    """
    n_days = len(history) / INTERVALS_PER_DAY
    if n_days < hyperparams.min_days:
        raise DataError(f"insufficient data: {n_days:.1f} days of records, need at least {hyperparams.min_days}")
    x, y, index = _history_arrays(history)
    weights = None
    if sample_weight is not None:
        sample_weight = np.asarray(sample_weight, dtype=float)
        if sample_weight.shape != (len(history),):
            raise DataError("sample_weight needs one entry per history record")
        weights = sample_weight[index]

    names, shape = _input_names(history)
    operating_min, operating_max = _operating_range(x[:, : len(names) - len(EXTRINSIC_INPUTS)], PlantConfig.uniform(*shape))
    regressor = fit_regressor(x, y, hyperparams.regressor, sample_weight=weights, label="surrogate")
    degenerate = [name for name, flag in zip(names, regressor.x_scaler.degenerate) if flag]
    if degenerate:
        logger.warning(f"Surrogate inputs constant in training data: {', '.join(degenerate)}")
    return SurrogateModel(
        regressor=regressor,
        plant_shape=shape,
        input_names=names,
        domain_min=x.min(axis=0),
        domain_max=x.max(axis=0),
        degenerate_inputs=degenerate,
        train_start=history.start,
        train_end=history.end,
        operating_min=operating_min,
        operating_max=operating_max,
    )


def predict_rows(model: SurrogateModel, features: np.ndarray) -> np.ndarray:
    """Raw feature rows -> (n, 2) floored [power_kw, cooling_kw]."""
    features = np.atleast_2d(features)
    if features.shape[1] != model.n_inputs:
        raise ModelError(f"dimension mismatch: surrogate expects {model.n_inputs} inputs, got {features.shape[1]}")
    return np.maximum(model.regressor.predict(features), 0.0)


def predict_batch(
    model: SurrogateModel, flat_setpoints: np.ndarray, weather: WeatherRecord, cooling_demand_kw: float
) -> np.ndarray:
    flat_setpoints = np.atleast_2d(flat_setpoints)
    if flat_setpoints.shape[1] != model.n_slots:
        raise ModelError(f"dimension mismatch: surrogate expects {model.n_slots} setpoint slots, got {flat_setpoints.shape[1]}")
    return predict_rows(model, featurize_batch(flat_setpoints, model.plant_shape, weather, cooling_demand_kw))


def predict(
    model: SurrogateModel, setpoints: SetpointVector, weather: WeatherRecord, cooling_demand_kw: float
) -> PlantOutput:
    if _plant_shape(setpoints) != model.plant_shape:
        raise ModelError(f"dimension mismatch: setpoints shaped {_plant_shape(setpoints)}, surrogate {model.plant_shape}")
    power, cooling = predict_batch(model, setpoints.flatten(), weather, cooling_demand_kw)[0]
    return PlantOutput(power_kw=float(power), cooling_kw=float(cooling))


def out_of_domain(model: SurrogateModel, features: np.ndarray) -> np.ndarray:
    """Row mask: any input outside the training min/max box."""
    features = np.atleast_2d(features)
    return ((features < model.domain_min) | (features > model.domain_max)).any(axis=1)


def operating_box(model: SurrogateModel, margin: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Slot bounds around the operation the surrogate was trained on.

    The continuous slots widen by ``margin`` times their full device range
    on each side and are clipped to that range; switch slots stay [0, 1].
    """
    if margin < 0:
        raise ConfigError("margin must be non-negative", key="margin")
    lower, upper, _ = PlantConfig.uniform(*model.plant_shape).slot_bounds()
    if model.operating_min is None or model.operating_max is None:
        return lower, upper
    widen = margin * (upper - lower)
    return (
        np.clip(model.operating_min - widen, lower, upper),
        np.clip(model.operating_max + widen, lower, upper),
    )


def _mape_or_absent(actual: TimeSeries[float], forecast: TimeSeries[float], seed: int) -> MapeResult:
    """MAPE, or a NaN result when no actual is nonzero (an idle plant has nothing to score)."""
    try:
        return mape(actual, forecast, seed=seed)
    except DataError as e:
        if "no comparable points" not in str(e):
            raise
        logger.warning("No nonzero actuals to score; reporting MAPE as absent")
        return MapeResult(mape_pct=float("nan"), ci_halfwidth_pct=float("nan"), excluded_points=len(actual))


def evaluate_surrogate(model: SurrogateModel, test: TimeSeries[OperationRecord], seed: int = 0) -> SurrogateMetrics:
    x, y, index = _history_arrays(test)
    predicted = predict_rows(model, x)

    def _series(values: np.ndarray) -> TimeSeries[float]:
        full = np.full(len(test), np.nan)
        full[index] = values
        return TimeSeries.from_values(test.start, full)

    power_mape = _mape_or_absent(_series(y[:, 0]), _series(predicted[:, 0]), seed)
    cooling_mape = _mape_or_absent(_series(y[:, 1]), _series(predicted[:, 1]), seed)
    ood = float(out_of_domain(model, x).mean())
    return SurrogateMetrics(power_mape=power_mape, cooling_mape=cooling_mape, ood_fraction=ood, n_rows=len(x))


def save_model(model: SurrogateModel, path: str | os.PathLike) -> None:
    write_model_document(
        path,
        MODEL_KIND,
        {
            "plant_shape": list(model.plant_shape),
            "input_names": model.input_names,
            "domain_min": model.domain_min.tolist(),
            "domain_max": model.domain_max.tolist(),
            "degenerate_inputs": model.degenerate_inputs,
            "operating_min": None if model.operating_min is None else model.operating_min.tolist(),
            "operating_max": None if model.operating_max is None else model.operating_max.tolist(),
            "train_start": None if model.train_start is None else model.train_start.isoformat(),
            "train_end": None if model.train_end is None else model.train_end.isoformat(),
            "regressor": model.regressor.to_dict(),
        },
    )


def _optional_array(values: Optional[List[float]]) -> Optional[np.ndarray]:
    return None if values is None else np.array(values, dtype=float)


def load_model(path: str | os.PathLike) -> SurrogateModel:
    document = read_model_document(path, MODEL_KIND)
    regressor = FittedRegressor.from_dict(document["regressor"])
    names = list(document["input_names"])
    if regressor.n_inputs != len(names) or len(document["domain_min"]) != len(names):
        raise ModelError("dimension mismatch between stored inputs and weights")
    return SurrogateModel(
        regressor=regressor,
        plant_shape=tuple(document["plant_shape"]),
        input_names=names,
        domain_min=np.array(document["domain_min"], dtype=float),
        domain_max=np.array(document["domain_max"], dtype=float),
        degenerate_inputs=list(document.get("degenerate_inputs", [])),
        train_start=None if document.get("train_start") is None else to_utc(document["train_start"]),
        train_end=None if document.get("train_end") is None else to_utc(document["train_end"]),
        operating_min=_optional_array(document.get("operating_min")),
        operating_max=_optional_array(document.get("operating_max")),
    )
