"""
Profile-level optimization, algorithm stability study, grid-search oracle
and recommendation export.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from chillopt.errors import DataError, OptimizationError
from chillopt.logger import get_logger
from chillopt.optimizer.ga import GAConfig
from chillopt.optimizer.problem import (
    DEFAULT_PENALTY_WEIGHT,
    DEFAULT_SHORTFALL_TOLERANCE,
    OptProblem,
    OptResult,
    build_result,
    fitness_batch,
    plant_problem,
    repair,
)
from chillopt.optimizer.protocol import Landscape, PlantOracle, SurrogateLandscape
from chillopt.optimizer.pso import PSOConfig
from chillopt.optimizer.registry import get_optimizer
from chillopt.plant.policy import legacy_policy, staged_chiller_count
from chillopt.plant.types import CHW_RANGE_C, PlantConfig
from chillopt.surrogate import SurrogateModel
from chillopt.timeseries import TimeSeries, WeatherRecord, format_timestamp, write_frame

logger = get_logger(__name__)

GRID_PUMP_SPEEDS = np.round(np.arange(0.3, 1.0001, 0.1), 2)
GRID_FAN_SPEEDS = np.round(np.arange(0.2, 1.0001, 0.1), 2)
GRID_CHW_SETPOINTS = (5.0, 7.0, 9.0, 11.0)


def interval_landscape(
    surrogate: Optional[SurrogateModel], plant: PlantConfig, weather: WeatherRecord, cooling_kw: float
) -> Landscape:
    """The surrogate under this interval's conditions, or the plant itself when no surrogate is given."""
    if surrogate is None:
        return PlantOracle(plant, weather, cooling_kw)
    return SurrogateLandscape(surrogate, weather, cooling_kw)


def optimize_profile(
    surrogate: Optional[SurrogateModel],
    plant: PlantConfig,
    weather_series: TimeSeries[WeatherRecord],
    cooling_profile: TimeSeries[float],
    config: GAConfig | PSOConfig = GAConfig(),
    algorithm: str = "ga",
    warm_start: bool = False,
    seed_legacy: bool = True,
    shortfall_tolerance: float = DEFAULT_SHORTFALL_TOLERANCE,
    penalty_weight: float = DEFAULT_PENALTY_WEIGHT,
) -> List[OptResult]:
    """One independent optimization per interval of the profile.

    With ``seed_legacy`` the legacy setpoints for each target join the
    initial population; with ``warm_start`` so does the previous
    interval's best.
    """
    if not weather_series.is_aligned_with(cooling_profile):
        raise DataError("misaligned series: weather and cooling profile")
    optimizer = get_optimizer(algorithm)
    results: List[OptResult] = []
    previous: Optional[np.ndarray] = None
    for index, (conditions, target) in enumerate(zip(weather_series.records, cooling_profile.records)):
        if conditions is None or target is None:
            raise DataError(f"interval {index} has no weather or cooling target")
        problem = plant_problem(
            interval_landscape(surrogate, plant, conditions, target),
            plant,
            target,
            shortfall_tolerance=shortfall_tolerance,
            penalty_weight=penalty_weight,
        )
        seeds = []
        if seed_legacy:
            seeds.append(legacy_policy(plant, conditions, target).flatten())
        if warm_start and previous is not None:
            seeds.append(previous)
        result = optimizer.run(problem, config, initial=np.vstack(seeds) if seeds else None)
        if not result.feasible:
            logger.warning(
                f"Interval {index} infeasible: predicted cooling {result.predicted.cooling_kw:.1f} kW "
                f"for target {target:.1f} kW"
            )
        logger.debug(f"Interval {index}: target {target:.1f} kW, predicted power {result.predicted.power_kw:.1f} kW")
        results.append(result)
        previous = result.best_vector
    return results


# stability -----------------------------------------------------------------


@dataclass
class AlgorithmSummary:
    mean_fitness: float
    std_fitness: float
    cv: float
    mean_evaluations_to_5pct: float

    def to_dict(self) -> Dict[str, float]:
        return {
            "mean_fitness": self.mean_fitness,
            "std_fitness": self.std_fitness,
            "cv": self.cv,
            "mean_evaluations_to_5pct": self.mean_evaluations_to_5pct,
        }


@dataclass
class StabilityReport:
    rows: List[Dict[str, Any]] = field(default_factory=list)
    summary: Dict[str, AlgorithmSummary] = field(default_factory=dict)
    evaluation_budget: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "evaluation_budget": self.evaluation_budget,
            "summary": {name: item.to_dict() for name, item in self.summary.items()},
            "rows": self.rows,
        }


def evaluations_to_within(result: OptResult, fraction: float = 0.05) -> int:
    """Evaluations spent before the trace first came within ``fraction`` of the run's own final best."""
    final = result.trace[-1]
    threshold = final + fraction * abs(final)
    for value, spent in zip(result.trace, result.evaluation_trace):
        if value <= threshold:
            return spent
    return result.evaluations


def _summarize(results: Sequence[OptResult]) -> AlgorithmSummary:
    values = np.array([r.fitness for r in results])
    mean = float(values.mean())
    std = float(values.std(ddof=1)) if len(values) > 1 else 0.0
    return AlgorithmSummary(
        mean_fitness=mean,
        std_fitness=std,
        cv=std / abs(mean) if abs(mean) > 0 else 0.0,
        mean_evaluations_to_5pct=float(np.mean([evaluations_to_within(r) for r in results])),
    )


def equal_budget_pso(ga: GAConfig, pso: PSOConfig) -> PSOConfig:
    """PSO config whose evaluation count matches the GA's as closely as whole iterations allow."""
    iterations = max(0, round(ga.evaluation_budget() / pso.swarm_size) - 1)
    return replace(pso, iterations=iterations)


def stability_report(
    problem: OptProblem,
    ga: GAConfig = GAConfig(),
    pso: PSOConfig = PSOConfig(),
    n_seeds: int = 20,
    equal_budget: bool = True,
) -> StabilityReport:
    """Run both algorithms over consecutive seeds and compare the spread of their best fitness."""
    if n_seeds < 10:
        raise OptimizationError(f"stability study needs at least 10 seeds, got {n_seeds}")
    if equal_budget:
        pso = equal_budget_pso(ga, pso)
    report = StabilityReport(evaluation_budget=ga.evaluation_budget())
    runs: Dict[str, List[OptResult]] = {"ga": [], "pso": []}
    for offset in range(n_seeds):
        for name, base in (("ga", ga), ("pso", pso)):
            result = get_optimizer(name).run(problem, replace(base, seed=base.seed + offset))
            runs[name].append(result)
            report.rows.append(
                {
                    "algorithm": name,
                    "seed": result.seed,
                    "best_fitness": result.fitness,
                    "feasible": result.feasible,
                    "evaluations": result.evaluations,
                    "evaluations_to_5pct": evaluations_to_within(result),
                }
            )
    report.summary = {name: _summarize(results) for name, results in runs.items()}
    for name, summary in report.summary.items():
        logger.info(
            f"{name}: mean best {summary.mean_fitness:.3f}, cv {summary.cv:.4f}, "
            f"evaluations to 5% {summary.mean_evaluations_to_5pct:.0f}"
        )
    return report


# grid search ---------------------------------------------------------------


def grid_candidates(plant: PlantConfig, target_cooling_kw: float) -> np.ndarray:
    """Coarse staged grid: lowest-index devices on, one shared speed per device kind."""
    layout = plant.slot_layout()
    lowest = max(1, staged_chiller_count(replace(plant, stage_threshold=1.0), target_cooling_kw))
    chiller_counts = range(lowest, plant.n_chillers + 1)
    pump_counts = sorted({1, plant.n_pumps})
    tower_counts = sorted({1, plant.n_towers})
    rows = []
    for n, pumps, towers, speed, fan, chw in itertools.product(
        chiller_counts, pump_counts, tower_counts, GRID_PUMP_SPEEDS, GRID_FAN_SPEEDS, GRID_CHW_SETPOINTS
    ):
        row = np.zeros(plant.n_slots)
        row[layout["chiller_on"]] = np.arange(plant.n_chillers) < n
        row[layout["chw_supply_setpoint_c"]] = chw
        row[layout["pump_speed_frac"]] = speed
        row[layout["pump_on"]] = np.arange(plant.n_pumps) < pumps
        row[layout["tower_fan_frac"]] = fan
        row[layout["tower_on"]] = np.arange(plant.n_towers) < towers
        rows.append(row)
    if target_cooling_kw <= 0:
        rows.append(np.concatenate([
            np.zeros(plant.n_chillers),
            np.full(plant.n_chillers, CHW_RANGE_C[0]),
            np.full(plant.n_pumps, GRID_PUMP_SPEEDS[0]),
            np.zeros(plant.n_pumps),
            np.full(plant.n_towers, GRID_FAN_SPEEDS[0]),
            np.zeros(plant.n_towers),
        ]))
    return np.vstack(rows)


def grid_search(problem: OptProblem, plant: Optional[PlantConfig] = None) -> OptResult:
    """Brute-force oracle over the coarse grid; the reference for optimizer accuracy checks."""
    plant = plant or problem.space.plant
    if plant is None:
        raise OptimizationError("grid search needs a plant search space")
    candidates = repair(problem, grid_candidates(plant, problem.target_cooling_kw))
    scores, outputs = fitness_batch(problem, candidates)
    best = int(np.argmin(scores))
    return build_result(
        problem, candidates[best], float(scores[best]), outputs[best], len(candidates), [float(scores[best])], [len(candidates)], "grid", 0
    )


# export --------------------------------------------------------------------


def recommendations_frame(results: Sequence[OptResult], timestamps: Sequence, plant: PlantConfig) -> pd.DataFrame:
    if len(results) != len(timestamps):
        raise DataError("one timestamp per optimization result is required")
    names = plant.slot_names()
    rows = []
    for instant, result in zip(timestamps, results):
        setpoints = result.best_setpoints
        if setpoints is None:
            raise OptimizationError("recommendations need plant setpoints")
        row: Dict[str, Any] = {"timestamp": format_timestamp(instant)}
        row.update(zip(names, setpoints.flatten()))
        row["predicted_power_kw"] = result.predicted.power_kw
        row["predicted_cooling_kw"] = result.predicted.cooling_kw
        row["feasible"] = result.feasible
        rows.append(row)
    columns = ["timestamp", *names, "predicted_power_kw", "predicted_cooling_kw", "feasible"]
    return pd.DataFrame(rows, columns=columns)


def export_recommendations(
    results: Sequence[OptResult], timestamps: Sequence, path: str | Path, plant: PlantConfig
) -> None:
    write_frame(recommendations_frame(results, timestamps, plant), path)


def total_predicted_energy_kwh(results: Sequence[OptResult], step_minutes: int = 15) -> float:
    return float(sum(r.predicted.power_kw for r in results) * step_minutes / 60.0)
