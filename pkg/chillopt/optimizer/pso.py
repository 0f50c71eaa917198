"""Global-best particle swarm with sigmoid-threshold relaxation of boolean slots."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from chillopt.errors import OptimizationError
from chillopt.logger import get_logger
from chillopt.optimizer.problem import OptProblem, OptResult, build_result, fitness_batch, repair
from chillopt.rng import derive_rng

logger = get_logger(__name__)

# boolean slots move in logit space; sigmoid(z) >= 0.5 means on
LOGIT_BOUND = 4.0


@dataclass(frozen=True)
class PSOConfig:
    swarm_size: int = 64
    iterations: int = 200
    inertia: float = 0.72
    cognitive: float = 1.49
    social: float = 1.49
    velocity_clamp: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.swarm_size < 1 or self.iterations < 0:
            raise OptimizationError("swarm_size must be positive and iterations non-negative")
        if min(self.inertia, self.cognitive, self.social, self.velocity_clamp) <= 0:
            raise OptimizationError("PSO coefficients must be positive")

    def evaluation_budget(self) -> int:
        return self.swarm_size * (self.iterations + 1)


def _relaxed_bounds(problem: OptProblem) -> tuple[np.ndarray, np.ndarray]:
    space = problem.space
    lower = np.where(space.discrete, -LOGIT_BOUND, space.lower)
    upper = np.where(space.discrete, LOGIT_BOUND, space.upper)
    return lower, upper


def _decode(problem: OptProblem, positions: np.ndarray) -> np.ndarray:
    discrete = problem.space.discrete
    decoded = positions.copy()
    decoded[:, discrete] = 1.0 / (1.0 + np.exp(-positions[:, discrete])) >= 0.5
    return repair(problem, decoded)


def _encode(problem: OptProblem, rows: np.ndarray) -> np.ndarray:
    encoded = np.array(rows, dtype=float, copy=True)
    discrete = problem.space.discrete
    encoded[:, discrete] = np.where(encoded[:, discrete] >= 0.5, 1.0, -1.0)
    return encoded


def pso_optimize(problem: OptProblem, config: PSOConfig = PSOConfig(), initial: Optional[np.ndarray] = None) -> OptResult:
    rng = derive_rng(config.seed, "pso")
    lower, upper = _relaxed_bounds(problem)
    span = upper - lower
    v_max = config.velocity_clamp * span

    positions = rng.uniform(lower, upper, size=(config.swarm_size, len(lower)))
    if initial is not None:
        seeds = _encode(problem, np.atleast_2d(initial)[: config.swarm_size])
        positions[: len(seeds)] = seeds
    velocities = rng.uniform(-v_max, v_max, size=positions.shape)

    candidates = _decode(problem, positions)
    scores, outputs = fitness_batch(problem, candidates)
    evaluations = len(positions)

    personal, personal_scores = positions.copy(), scores.copy()
    leader = int(np.argmin(scores))
    best_vector, best_score, best_output = candidates[leader].copy(), float(scores[leader]), outputs[leader].copy()
    global_best = positions[leader].copy()
    trace = [best_score]
    evaluation_trace = [evaluations]

    for _ in range(config.iterations):
        r1 = rng.random(positions.shape)
        r2 = rng.random(positions.shape)
        velocities = (
            config.inertia * velocities
            + config.cognitive * r1 * (personal - positions)
            + config.social * r2 * (global_best - positions)
        )
        velocities = np.clip(velocities, -v_max, v_max)
        positions = np.clip(positions + velocities, lower, upper)

        candidates = _decode(problem, positions)
        scores, outputs = fitness_batch(problem, candidates)
        evaluations += len(positions)

        improved = scores < personal_scores
        personal[improved] = positions[improved]
        personal_scores[improved] = scores[improved]
        leader = int(np.argmin(scores))
        if scores[leader] < best_score:
            best_vector, best_score, best_output = candidates[leader].copy(), float(scores[leader]), outputs[leader].copy()
            global_best = positions[leader].copy()
        trace.append(best_score)
        evaluation_trace.append(evaluations)

    result = build_result(problem, best_vector, best_score, best_output, evaluations, trace, evaluation_trace, "pso", config.seed)
    logger.debug(f"PSO seed {config.seed}: best fitness {best_score:.4f} after {evaluations} evaluations")
    return result
