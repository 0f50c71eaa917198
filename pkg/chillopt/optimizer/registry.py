"""Optimizer registry."""

from __future__ import annotations

from typing import Any, Dict, List, Mapping, Optional

import numpy as np

from chillopt.config import build_dataclass, closest_key
from chillopt.errors import ConfigError
from chillopt.optimizer.ga import GAConfig, ga_optimize
from chillopt.optimizer.problem import OptProblem, OptResult
from chillopt.optimizer.protocol import Optimizer
from chillopt.optimizer.pso import PSOConfig, pso_optimize


class GeneticOptimizer:
    name = "ga"
    config_type = GAConfig

    def run(self, problem: OptProblem, config: GAConfig, initial: Optional[np.ndarray] = None) -> OptResult:
        return ga_optimize(problem, config, initial=initial)


class SwarmOptimizer:
    name = "pso"
    config_type = PSOConfig

    def run(self, problem: OptProblem, config: PSOConfig, initial: Optional[np.ndarray] = None) -> OptResult:
        return pso_optimize(problem, config, initial=initial)


_OPTIMIZERS: Dict[str, Optimizer] = {
    "ga": GeneticOptimizer(),
    "pso": SwarmOptimizer(),
}


def list_optimizers() -> List[str]:
    return sorted(_OPTIMIZERS)


def get_optimizer(name: str) -> Optimizer:
    try:
        return _OPTIMIZERS[name]
    except KeyError:
        raise ConfigError(
            f"unknown optimizer '{name}'", key="algorithm", suggestion=closest_key(name, _OPTIMIZERS)
        ) from None


def optimizer_config(name: str, data: Optional[Mapping[str, Any]] = None, seed: Optional[int] = None) -> Any:
    """Typed config for the named optimizer; an explicit seed overrides the document's."""
    optimizer = get_optimizer(name)
    values = dict(data or {})
    if seed is not None:
        values["seed"] = seed
    return build_dataclass(optimizer.config_type, values, section=name)
