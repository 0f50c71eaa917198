"""
Setpoint search problems: bounds, repair and the penalized fitness.

Candidates are rows in the flattened slot space of a SetpointVector.
Fitness is predicted power plus a linear penalty on cooling shortfall, so
lower is better and shortfall is never profitable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from chillopt.errors import OptimizationError
from chillopt.optimizer.protocol import Landscape
from chillopt.plant.types import PlantConfig, PlantOutput, SetpointVector

DEFAULT_SHORTFALL_TOLERANCE = 0.02
DEFAULT_PENALTY_WEIGHT = 10.0


@dataclass(frozen=True, eq=False)
class SearchSpace:
    lower: np.ndarray
    upper: np.ndarray
    discrete: np.ndarray
    plant: Optional[PlantConfig] = None

    def __post_init__(self):
        for name in ("lower", "upper"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        object.__setattr__(self, "discrete", np.asarray(self.discrete, dtype=bool))
        if not (self.lower.shape == self.upper.shape == self.discrete.shape) or self.lower.ndim != 1:
            raise OptimizationError("bounds and discrete mask must be 1-d arrays of equal length")
        if (self.lower > self.upper).any():
            raise OptimizationError("every lower bound must not exceed its upper bound")
        if self.plant is not None and self.plant.n_slots != len(self.lower):
            raise OptimizationError("search space does not match the plant's slot count")

    @classmethod
    def for_plant(cls, config: PlantConfig) -> "SearchSpace":
        lower, upper, discrete = config.slot_bounds()
        return cls(lower, upper, discrete, plant=config)

    @classmethod
    def box(cls, lower, upper) -> "SearchSpace":
        lower = np.asarray(lower, dtype=float)
        return cls(lower, upper, np.zeros(len(lower), dtype=bool))

    def narrowed(self, lower, upper) -> "SearchSpace":
        """The same space with its continuous slots intersected with [lower, upper]."""
        lower = np.where(self.discrete, self.lower, np.maximum(self.lower, np.asarray(lower, dtype=float)))
        upper = np.where(self.discrete, self.upper, np.minimum(self.upper, np.asarray(upper, dtype=float)))
        if (lower > upper).any():
            raise OptimizationError("narrowed bounds do not overlap the search space")
        return SearchSpace(lower, upper, self.discrete, plant=self.plant)

    @property
    def dimension(self) -> int:
        return len(self.lower)

    @property
    def span(self) -> np.ndarray:
        return self.upper - self.lower

    def contains(self, candidates: np.ndarray) -> np.ndarray:
        rows = np.atleast_2d(candidates)
        inside = ((rows >= self.lower - 1e-9) & (rows <= self.upper + 1e-9)).all(axis=1)
        bits = rows[:, self.discrete]
        return inside & np.isin(bits, (0.0, 1.0)).all(axis=1)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        rows = rng.uniform(self.lower, self.upper, size=(n, self.dimension))
        rows[:, self.discrete] = rng.random((n, int(self.discrete.sum()))) < 0.5
        return rows


@dataclass(frozen=True, eq=False)
class OptProblem:
    landscape: Landscape
    space: SearchSpace
    target_cooling_kw: float
    shortfall_tolerance: float = DEFAULT_SHORTFALL_TOLERANCE
    penalty_weight: float = DEFAULT_PENALTY_WEIGHT
    capacity_repair: bool = True

    def __post_init__(self):
        if self.target_cooling_kw < 0:
            raise OptimizationError("target cooling must be non-negative")
        if self.penalty_weight <= 1.0:
            raise OptimizationError("penalty_weight must exceed 1 so shortfall is never profitable")
        if not 0.0 <= self.shortfall_tolerance < 1.0:
            raise OptimizationError("shortfall_tolerance must be in [0, 1)")


def plant_problem(
    landscape: Landscape,
    config: PlantConfig,
    target_cooling_kw: float,
    shortfall_tolerance: float = DEFAULT_SHORTFALL_TOLERANCE,
    penalty_weight: float = DEFAULT_PENALTY_WEIGHT,
    space: Optional[SearchSpace] = None,
) -> OptProblem:
    if space is not None and space.plant != config:
        raise OptimizationError("search space belongs to a different plant")
    return OptProblem(
        landscape=landscape,
        space=space or SearchSpace.for_plant(config),
        target_cooling_kw=target_cooling_kw,
        shortfall_tolerance=shortfall_tolerance,
        penalty_weight=penalty_weight,
    )


@dataclass
class OptResult:
    best_vector: np.ndarray
    best_setpoints: Optional[SetpointVector]
    predicted: PlantOutput
    fitness: float
    feasible: bool
    evaluations: int
    trace: List[float] = field(default_factory=list)
    evaluation_trace: List[int] = field(default_factory=list)
    algorithm: str = ""
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "seed": self.seed,
            "fitness": self.fitness,
            "feasible": self.feasible,
            "evaluations": self.evaluations,
            "predicted_power_kw": self.predicted.power_kw,
            "predicted_cooling_kw": self.predicted.cooling_kw,
            "best_vector": self.best_vector.tolist(),
        }


def reflect(candidates: np.ndarray, space: SearchSpace) -> np.ndarray:
    """Mirror values that left the box back inside it, then clip."""
    rows = np.array(candidates, dtype=float, copy=True)
    span = np.where(space.span > 0, space.span, 1.0)
    offset = np.mod(rows - space.lower, 2.0 * span)
    mirrored = np.where(offset > span, 2.0 * span - offset, offset)
    rows = np.where(space.span > 0, space.lower + mirrored, space.lower)
    return np.clip(rows, space.lower, space.upper)


def repair(problem: OptProblem, candidates: np.ndarray) -> np.ndarray:
    """Bring rows into bounds, binarize discrete slots and enforce the plant invariants.

    Under load at least one chiller, pump and tower run, and the on-chiller
    nameplate capacity covers the target (lowest-index chillers switched on
    first). Among identical devices the running ones are then moved to the
    lowest indices, highest setpoint first, so equivalent configurations share one
    encoding.
    """
    space = problem.space
    rows = np.clip(np.atleast_2d(np.array(candidates, dtype=float)), space.lower, space.upper)
    rows[:, space.discrete] = rows[:, space.discrete] >= 0.5
    plant = space.plant
    if plant is None or problem.target_cooling_kw <= 0:
        return rows

    layout = plant.slot_layout()
    for name in ("chiller_on", "pump_on", "tower_on"):
        block = layout[name]
        idle = ~rows[:, block].astype(bool).any(axis=1)
        rows[idle, block.start] = 1.0

    if problem.capacity_repair:
        capacities = plant.capacities()
        chiller = layout["chiller_on"]
        capacity = rows[:, chiller] @ capacities
        for i in range(plant.n_chillers):
            short = (capacity < problem.target_cooling_kw) & (rows[:, chiller.start + i] < 0.5)
            rows[short, chiller.start + i] = 1.0
            capacity = capacity + short * capacities[i]
    return pack_devices(plant, rows)


def _identical_groups(specs) -> List[List[int]]:
    groups: dict = {}
    for i, spec in enumerate(specs):
        groups.setdefault(spec, []).append(i)
    return [indices for indices in groups.values() if len(indices) > 1]


def pack_devices(plant: PlantConfig, rows: np.ndarray) -> np.ndarray:
    """Reorder each group of identical devices: on before off, then by setpoint, highest first."""
    rows = np.array(np.atleast_2d(rows), dtype=float, copy=True)
    layout = plant.slot_layout()
    for specs, switch, value in (
        (plant.chillers, "chiller_on", "chw_supply_setpoint_c"),
        (plant.pumps, "pump_on", "pump_speed_frac"),
        (plant.towers, "tower_on", "tower_fan_frac"),
    ):
        for group in _identical_groups(specs):
            bits = rows[:, layout[switch].start + np.array(group)]
            values = rows[:, layout[value].start + np.array(group)]
            order = np.argsort(-(bits * 1000.0 + values), axis=1, kind="stable")
            rows[:, layout[switch].start + np.array(group)] = np.take_along_axis(bits, order, axis=1)
            rows[:, layout[value].start + np.array(group)] = np.take_along_axis(values, order, axis=1)
    return rows


def penalized(problem: OptProblem, outputs: np.ndarray) -> np.ndarray:
    shortfall = np.maximum(0.0, problem.target_cooling_kw - outputs[:, 1])
    return outputs[:, 0] + problem.penalty_weight * shortfall


def fitness_batch(problem: OptProblem, candidates: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(fitness, outputs) for in-bounds rows; rows are evaluated in index order."""
    rows = np.atleast_2d(candidates)
    if rows.shape[1] != problem.space.dimension:
        raise OptimizationError(f"candidate has {rows.shape[1]} slots, problem has {problem.space.dimension}")
    if not problem.space.contains(rows).all():
        raise OptimizationError("candidate out of bounds; repair before evaluating")
    outputs = np.asarray(problem.landscape.evaluate(rows), dtype=float)
    return penalized(problem, outputs), outputs


def fitness(problem: OptProblem, candidate: SetpointVector | np.ndarray) -> float:
    """Predicted power plus penalty_weight times the cooling shortfall."""
    row = candidate.flatten() if isinstance(candidate, SetpointVector) else np.asarray(candidate, dtype=float)
    values, _ = fitness_batch(problem, row)
    return float(values[0])


def is_feasible(problem: OptProblem, cooling_kw: float) -> bool:
    return cooling_kw >= (1.0 - problem.shortfall_tolerance) * problem.target_cooling_kw - 1e-9


def build_result(
    problem: OptProblem,
    vector: np.ndarray,
    value: float,
    outputs: np.ndarray,
    evaluations: int,
    trace: List[float],
    evaluation_trace: List[int],
    algorithm: str,
    seed: int,
) -> OptResult:
    plant = problem.space.plant
    return OptResult(
        best_vector=np.array(vector, dtype=float),
        best_setpoints=None if plant is None else SetpointVector.from_flat(vector, plant),
        predicted=PlantOutput(power_kw=max(float(outputs[0]), 0.0), cooling_kw=max(float(outputs[1]), 0.0)),
        fitness=float(value),
        feasible=is_feasible(problem, float(outputs[1])),
        evaluations=evaluations,
        trace=trace,
        evaluation_trace=evaluation_trace,
        algorithm=algorithm,
        seed=seed,
    )
