import pytest

from chillopt.forecaster import ForecasterParams
from chillopt.plant.history import generate_history
from chillopt.plant.types import PlantConfig
from chillopt.regressor import RegressorParams
from chillopt.surrogate import SurrogateParams
from chillopt.timeseries import WeatherRecord

# Small networks and few epochs keep the training tests quick
FAST_REGRESSOR = RegressorParams(hidden=16, learning_rate=5e-3, batch_size=256, max_epochs=40, patience=5)
FAST_FORECASTER = ForecasterParams(lag_window=8, min_days=20, regressor=FAST_REGRESSOR)
FAST_SURROGATE = SurrogateParams(min_days=20, regressor=FAST_REGRESSOR)

HISTORY_SEED = 3
HISTORY_DAYS = 45


@pytest.fixture(scope="session")
def plant():
    return PlantConfig()


@pytest.fixture(scope="session")
def small_plant():
    return PlantConfig.uniform(n_chillers=2, n_pumps=2, n_towers=2)


@pytest.fixture(scope="session")
def history(plant):
    """Legacy-operated history of the default plant, shared by the model tests."""
    return generate_history(plant, seed=HISTORY_SEED, n_days=HISTORY_DAYS)


@pytest.fixture(scope="session")
def warm_weather():
    return WeatherRecord(dry_bulb_c=30.0, rel_humidity_pct=60.0)


@pytest.fixture(scope="session")
def fast_forecaster_params():
    return FAST_FORECASTER


@pytest.fixture(scope="session")
def fast_surrogate_params():
    return FAST_SURROGATE
