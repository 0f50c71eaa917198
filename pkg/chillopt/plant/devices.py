"""Device curves of the synthetic plant: cube-law pumps and fans, part-load chillers, towers."""

from __future__ import annotations

from chillopt.errors import DataError
from chillopt.plant.types import PlantConfig


def _check_fraction(name: str, value: float) -> None:
    if not 0.0 <= value <= 1.0:
        raise DataError(f"{name} {value} outside [0, 1]")


def pump_power(rated_power_kw: float, speed_frac: float) -> float:
    """Affinity law: power scales with the cube of speed."""
    _check_fraction("pump speed", speed_frac)
    return rated_power_kw * speed_frac**3


def fan_power(rated_fan_kw: float, fan_frac: float) -> float:
    _check_fraction("fan speed", fan_frac)
    return rated_fan_kw * fan_frac**3


def cop_effective(config: PlantConfig, plr: float, lift_c: float, chiller: int = 0) -> float:
    spec = config.chillers[chiller]
    a, b, c = spec.part_load_coeffs
    cop = spec.design_cop * (a + b * plr + c * plr * plr) * (config.design_lift_c / lift_c)
    return min(cop, config.cop_clamp * spec.design_cop)


def chiller_power(config: PlantConfig, plr: float, lift_c: float, chiller: int = 0) -> float:
    """Electrical input of one chiller at part-load ratio ``plr`` and lift ``lift_c``.

    A zero load draws nothing; callers pass plr in (0, 1] for a loaded chiller.
    """
    if plr > 1.0 + 1e-12:
        raise DataError(f"chiller {chiller + 1} overloaded: plr={plr:.4f}")
    if plr < 0.0:
        raise DataError(f"negative part-load ratio {plr}")
    if lift_c <= 0.0:
        raise DataError(f"lift must be positive, got {lift_c}")
    if plr == 0.0:
        return 0.0
    plr = min(plr, 1.0)
    spec = config.chillers[chiller]
    cop = cop_effective(config, plr, lift_c, chiller)
    if cop <= 0.0:
        raise DataError(f"non-positive COP for chiller {chiller + 1} at plr={plr:.4f}")
    return plr * spec.rated_cooling_kw / cop


def tower_outlet_temp(
    config: PlantConfig,
    condenser_inlet_c: float,
    wet_bulb_c: float,
    fan_frac: float,
    tower: int = 0,
) -> float:
    """Leaving condenser-water temperature; approach shrinks linearly with fan speed."""
    if condenser_inlet_c <= wet_bulb_c:
        raise DataError(
            f"thermodynamics violated: condenser inlet {condenser_inlet_c:.2f} C not above wet bulb {wet_bulb_c:.2f} C"
        )
    _check_fraction("fan speed", fan_frac)
    design_approach = config.towers[tower].design_approach_c
    approach = max(design_approach * (1.0 - config.fan_approach_factor * fan_frac), config.approach_floor_c)
    return wet_bulb_c + approach
