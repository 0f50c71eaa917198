from chillopt.plant.devices import chiller_power, fan_power, pump_power, tower_outlet_temp
from chillopt.plant.history import (
    DemandModel,
    demand_series,
    generate_history,
    load_plant_config,
    read_history,
    save_plant_config,
    simulate_operation,
    write_history,
)
from chillopt.plant.policy import legacy_policy, random_policy
from chillopt.plant.simulator import plant_step, step_breakdown
from chillopt.plant.types import (
    ChillerSpec,
    OperationRecord,
    PlantConfig,
    PlantOutput,
    PumpSpec,
    SetpointVector,
    TowerSpec,
)
from chillopt.plant.weather import WeatherProfile, synth_weather

__all__ = [
    "ChillerSpec",
    "DemandModel",
    "OperationRecord",
    "PlantConfig",
    "PlantOutput",
    "PumpSpec",
    "SetpointVector",
    "TowerSpec",
    "WeatherProfile",
    "chiller_power",
    "demand_series",
    "fan_power",
    "generate_history",
    "legacy_policy",
    "load_plant_config",
    "plant_step",
    "pump_power",
    "random_policy",
    "read_history",
    "save_plant_config",
    "simulate_operation",
    "step_breakdown",
    "synth_weather",
    "tower_outlet_temp",
    "write_history",
]
