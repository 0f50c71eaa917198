"""Genetic algorithm over mixed continuous/boolean setpoint slots."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from chillopt.errors import OptimizationError
from chillopt.logger import get_logger
from chillopt.optimizer.problem import OptProblem, OptResult, build_result, fitness_batch, reflect, repair
from chillopt.rng import derive_rng

logger = get_logger(__name__)


@dataclass(frozen=True)
class GAConfig:
    population: int = 64
    generations: int = 200
    tournament_size: int = 3
    crossover_rate: float = 0.9
    # None means 1 / dimension
    mutation_rate: Optional[float] = None
    mutation_scale: float = 0.1
    # the mutation step shrinks geometrically to this fraction of mutation_scale by the last generation
    mutation_decay: float = 0.01
    elitism: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.population < 2 or self.population % 2:
            raise OptimizationError("population must be even and at least 2")
        if not 0 <= self.elitism < self.population:
            raise OptimizationError("elitism must be smaller than the population")
        if self.generations < 0 or self.tournament_size < 1:
            raise OptimizationError("generations must be >= 0 and tournament_size >= 1")
        if not 0.0 <= self.crossover_rate <= 1.0:
            raise OptimizationError("crossover_rate must be in [0, 1]")
        if self.mutation_rate is not None and not 0.0 <= self.mutation_rate <= 1.0:
            raise OptimizationError("mutation_rate must be in [0, 1]")
        if self.mutation_scale <= 0 or not 0.0 < self.mutation_decay <= 1.0:
            raise OptimizationError("mutation_scale must be positive and mutation_decay in (0, 1]")

    def evaluation_budget(self) -> int:
        return self.population + self.generations * (self.population - self.elitism)


def _tournament(rng: np.random.Generator, fitness: np.ndarray, n: int, size: int) -> np.ndarray:
    contenders = rng.integers(0, len(fitness), size=(n, size))
    winners = np.argmin(fitness[contenders], axis=1)
    return contenders[np.arange(n), winners]


def _crossover(rng: np.random.Generator, parents: np.ndarray, rate: float) -> np.ndarray:
    """Uniform crossover on consecutive parent pairs."""
    first, second = parents[0::2], parents[1::2]
    mask = rng.random(first.shape) < 0.5
    mate = rng.random(len(first)) < rate
    mask &= mate[:, None]
    children = np.empty_like(parents)
    children[0::2] = np.where(mask, second, first)
    children[1::2] = np.where(mask, first, second)
    return children


def _mutate(
    rng: np.random.Generator, children: np.ndarray, problem: OptProblem, rate: float, scale: float
) -> np.ndarray:
    space = problem.space
    hits = rng.random(children.shape) < rate
    noise = rng.normal(0.0, 1.0, size=children.shape) * scale * space.span
    continuous = ~space.discrete
    mutated = children.copy()
    mutated[:, continuous] += np.where(hits[:, continuous], noise[:, continuous], 0.0)
    mutated = reflect(mutated, space)
    # bit flip on boolean slots
    flips = hits[:, space.discrete]
    mutated[:, space.discrete] = np.where(flips, 1.0 - children[:, space.discrete], children[:, space.discrete])
    return mutated


def ga_optimize(problem: OptProblem, config: GAConfig = GAConfig(), initial: Optional[np.ndarray] = None) -> OptResult:
    """Tournament selection, uniform crossover, Gaussian/bit-flip mutation and elitism.

    ``initial`` rows (a warm start) replace the first members of the random
    initial population. The best-ever candidate is returned and the trace
    is the best fitness after each generation.
    """
    rng = derive_rng(config.seed, "ga")
    space = problem.space
    rate = config.mutation_rate if config.mutation_rate is not None else 1.0 / space.dimension
    population = space.sample(rng, config.population)
    if initial is not None:
        seeds = np.atleast_2d(initial)[: config.population]
        population[: len(seeds)] = seeds
    population = repair(problem, population)
    scores, outputs = fitness_batch(problem, population)
    evaluations = len(population)

    best = int(np.argmin(scores))
    best_vector, best_score, best_output = population[best].copy(), float(scores[best]), outputs[best].copy()
    trace = [best_score]
    evaluation_trace = [evaluations]

    n_children = config.population - config.elitism
    n_bred = n_children + (n_children % 2)
    for generation in range(config.generations):
        progress = generation / max(config.generations - 1, 1)
        scale = config.mutation_scale * config.mutation_decay**progress

        order = np.argsort(scores, kind="stable")
        elite = order[: config.elitism]
        parents = population[_tournament(rng, scores, n_bred, config.tournament_size)]
        children = _crossover(rng, parents, config.crossover_rate)
        children = _mutate(rng, children, problem, rate, scale)[:n_children]
        children = repair(problem, children)
        child_scores, child_outputs = fitness_batch(problem, children)
        evaluations += len(children)

        population = np.vstack([population[elite], children])
        scores = np.concatenate([scores[elite], child_scores])
        outputs = np.vstack([outputs[elite], child_outputs])

        leader = int(np.argmin(scores))
        if scores[leader] < best_score:
            best_vector, best_score, best_output = population[leader].copy(), float(scores[leader]), outputs[leader].copy()
        trace.append(best_score)
        evaluation_trace.append(evaluations)

    result = build_result(problem, best_vector, best_score, best_output, evaluations, trace, evaluation_trace, "ga", config.seed)
    logger.debug(f"GA seed {config.seed}: best fitness {best_score:.4f} after {evaluations} evaluations")
    return result
