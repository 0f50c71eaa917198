from chillopt.optimizer.ga import GAConfig, ga_optimize
from chillopt.optimizer.problem import (
    OptProblem,
    OptResult,
    SearchSpace,
    fitness,
    pack_devices,
    plant_problem,
    repair,
)
from chillopt.optimizer.protocol import Landscape, Optimizer, PlantOracle, SurrogateLandscape
from chillopt.optimizer.pso import PSOConfig, pso_optimize
from chillopt.optimizer.registry import get_optimizer, list_optimizers, optimizer_config
from chillopt.optimizer.runner import (
    StabilityReport,
    export_recommendations,
    grid_search,
    optimize_profile,
    stability_report,
)

__all__ = [
    "GAConfig",
    "Landscape",
    "OptProblem",
    "OptResult",
    "Optimizer",
    "PSOConfig",
    "PlantOracle",
    "SearchSpace",
    "StabilityReport",
    "SurrogateLandscape",
    "export_recommendations",
    "fitness",
    "ga_optimize",
    "get_optimizer",
    "grid_search",
    "list_optimizers",
    "optimize_profile",
    "optimizer_config",
    "pack_devices",
    "plant_problem",
    "pso_optimize",
    "repair",
    "stability_report",
]
