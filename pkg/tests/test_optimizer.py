"""
Tests for the optimizer package: problem construction and repair, GA and
PSO search, the registry, the stability study, the grid-search oracle and
recommendation export.
"""

import numpy as np
import pandas as pd
import pytest

from chillopt.logger import configure_logging, get_logger

test_config = {"log_level": "INFO", "log_file": "test.log"}
configure_logging(test_config)
logger = get_logger(__name__)

from chillopt.errors import ConfigError, DataError, OptimizationError
from chillopt.optimizer import (
    GAConfig,
    Optimizer,
    OptProblem,
    PlantOracle,
    PSOConfig,
    SearchSpace,
    export_recommendations,
    fitness,
    ga_optimize,
    get_optimizer,
    grid_search,
    list_optimizers,
    optimize_profile,
    optimizer_config,
    pack_devices,
    plant_problem,
    pso_optimize,
    repair,
    stability_report,
)
from chillopt.optimizer.problem import fitness_batch, is_feasible
from chillopt.optimizer.runner import (
    equal_budget_pso,
    evaluations_to_within,
    grid_candidates,
    interval_landscape,
    recommendations_frame,
    total_predicted_energy_kwh,
)
from chillopt.plant.policy import legacy_policy
from chillopt.plant.simulator import plant_step
from chillopt.plant.types import ChillerSpec, PlantConfig, PumpSpec, SetpointVector, TowerSpec
from chillopt.plant.weather import synth_weather
from chillopt.rng import derive_rng
from chillopt.timeseries import TimeSeries


class BowlLandscape:
    """Quadratic bowl with no cooling output; its minimum is ``centre``."""

    def __init__(self, centre):
        self.centre = np.asarray(centre, dtype=float)

    def evaluate(self, candidates):
        rows = np.atleast_2d(candidates)
        power = ((rows - self.centre) ** 2).sum(axis=1)
        return np.column_stack([power, np.zeros(len(rows))])


class FixedLandscape:
    def __init__(self, power_kw, cooling_kw):
        self.output = (power_kw, cooling_kw)

    def evaluate(self, candidates):
        return np.tile(self.output, (len(np.atleast_2d(candidates)), 1))


def _bowl_problem(dimension: int = 4) -> OptProblem:
    centre = np.linspace(0.2, 0.8, dimension)
    return OptProblem(
        landscape=BowlLandscape(centre),
        space=SearchSpace.box(np.zeros(dimension), np.ones(dimension)),
        target_cooling_kw=0.0,
    )


SMALL_GA = GAConfig(population=32, generations=60)
SMALL_PSO = PSOConfig(swarm_size=32, iterations=60)


class TestProblem:
    def test_penalty_weight_must_exceed_one(self):
        with pytest.raises(OptimizationError, match="penalty_weight"):
            OptProblem(FixedLandscape(0, 0), SearchSpace.box([0.0], [1.0]), 10.0, penalty_weight=1.0)

    def test_negative_target(self):
        with pytest.raises(OptimizationError, match="non-negative"):
            OptProblem(FixedLandscape(0, 0), SearchSpace.box([0.0], [1.0]), -1.0)

    def test_fitness_adds_weighted_shortfall(self):
        problem = OptProblem(FixedLandscape(100.0, 400.0), SearchSpace.box([0.0], [1.0]), 500.0)
        assert fitness(problem, np.array([0.5])) == pytest.approx(100.0 + 10.0 * 100.0)

    def test_no_penalty_when_target_is_met(self):
        problem = OptProblem(FixedLandscape(100.0, 600.0), SearchSpace.box([0.0], [1.0]), 500.0)
        assert fitness(problem, np.array([0.5])) == pytest.approx(100.0)

    def test_feasibility_tolerance(self):
        problem = OptProblem(FixedLandscape(0, 0), SearchSpace.box([0.0], [1.0]), 500.0)
        assert is_feasible(problem, 490.0)
        assert not is_feasible(problem, 489.0)

    def test_out_of_bounds_candidates_are_rejected(self):
        problem = _bowl_problem()
        with pytest.raises(OptimizationError, match="out of bounds"):
            fitness_batch(problem, np.array([[0.5, 0.5, 0.5, 1.5]]))

    def test_search_space_must_match_the_plant(self, plant, small_plant):
        lower, upper, discrete = small_plant.slot_bounds()
        with pytest.raises(OptimizationError, match="slot count"):
            SearchSpace(lower, upper, discrete, plant=plant)

    def test_narrowed_space_keeps_the_switches(self, small_plant):
        lower, upper, _ = small_plant.slot_bounds()
        lower[2:4], upper[2:4] = 8.0, 9.0
        lower[0:2] = 0.5
        space = SearchSpace.for_plant(small_plant).narrowed(lower, upper)
        assert space.lower[2:4].tolist() == [8.0, 8.0]
        assert space.upper[2:4].tolist() == [9.0, 9.0]
        assert space.lower[0:2].tolist() == [0.0, 0.0]
        assert space.plant == small_plant

    def test_narrowing_outside_the_space(self, small_plant):
        lower, upper, _ = small_plant.slot_bounds()
        lower[2:4], upper[2:4] = 12.0, 13.0
        with pytest.raises(OptimizationError, match="do not overlap"):
            SearchSpace.for_plant(small_plant).narrowed(lower, upper)

    def test_problem_rejects_another_plants_space(self, plant, small_plant, warm_weather):
        with pytest.raises(OptimizationError, match="different plant"):
            plant_problem(
                PlantOracle(small_plant, warm_weather, 900.0), small_plant, 900.0, space=SearchSpace.for_plant(plant)
            )


class TestRepair:
    def test_under_load_the_plant_can_serve_the_target(self, plant, warm_weather):
        problem = plant_problem(PlantOracle(plant, warm_weather, 2500.0), plant, 2500.0)
        rows = repair(problem, problem.space.sample(derive_rng(0, "repair-test"), 50))
        layout = plant.slot_layout()
        assert problem.space.contains(rows).all()
        assert (rows[:, layout["chiller_on"]] @ plant.capacities() >= 2500.0).all()
        assert (rows[:, layout["pump_on"]].sum(axis=1) >= 1).all()
        assert (rows[:, layout["tower_on"]].sum(axis=1) >= 1).all()

    def test_lowest_index_chillers_are_added_first(self, small_plant, warm_weather):
        problem = plant_problem(PlantOracle(small_plant, warm_weather, 900.0), small_plant, 900.0)
        row = np.zeros(small_plant.n_slots)
        row[2:4] = 7.0
        repaired = repair(problem, row)[0]
        assert repaired[:2].tolist() == [1.0, 0.0]

    def test_zero_target_leaves_devices_off(self, small_plant, warm_weather):
        problem = plant_problem(PlantOracle(small_plant, warm_weather, 0.0), small_plant, 0.0)
        row = np.zeros(small_plant.n_slots)
        row[2:4] = 7.0
        assert repair(problem, row)[0][[0, 1, 6, 7, 10, 11]].sum() == 0.0

    def test_discrete_slots_are_binarized(self, small_plant, warm_weather):
        problem = plant_problem(PlantOracle(small_plant, warm_weather, 500.0), small_plant, 500.0)
        row = np.full(small_plant.n_slots, 0.7)
        row[2:4] = 7.0
        repaired = repair(problem, row)[0]
        assert set(repaired[small_plant.slot_layout()["pump_on"]]) <= {0.0, 1.0}

    def test_repair_respects_a_narrowed_space(self, small_plant, warm_weather):
        lower, upper, _ = small_plant.slot_bounds()
        lower[2:4], upper[2:4] = 8.0, 9.0
        space = SearchSpace.for_plant(small_plant).narrowed(lower, upper)
        problem = plant_problem(PlantOracle(small_plant, warm_weather, 900.0), small_plant, 900.0, space=space)
        rows = repair(problem, SearchSpace.for_plant(small_plant).sample(derive_rng(0, "narrow-test"), 40))
        assert space.contains(rows).all()
        assert ((rows[:, 2:4] >= 8.0) & (rows[:, 2:4] <= 9.0)).all()

    def test_identical_devices_are_packed(self, small_plant, warm_weather):
        problem = plant_problem(PlantOracle(small_plant, warm_weather, 500.0), small_plant, 500.0)
        row = np.array([0.0, 1.0, 6.0, 9.0, 0.3, 0.8, 0.0, 1.0, 0.4, 0.9, 1.0, 1.0])
        repaired = repair(problem, row)[0]
        assert repaired.tolist() == [1.0, 0.0, 9.0, 6.0, 0.8, 0.3, 1.0, 0.0, 0.9, 0.4, 1.0, 1.0]

    def test_legacy_setpoints_survive_repair(self, plant, warm_weather):
        problem = plant_problem(PlantOracle(plant, warm_weather, 2500.0), plant, 2500.0)
        legacy = legacy_policy(plant, warm_weather, 2500.0)
        assert SetpointVector.from_flat(repair(problem, legacy.flatten())[0], plant) == legacy

    def test_different_devices_keep_their_places(self):
        mixed = PlantConfig(
            chillers=(ChillerSpec(), ChillerSpec(rated_cooling_kw=500.0)),
            pumps=(PumpSpec(),) * 2,
            towers=(TowerSpec(),) * 2,
        )
        row = np.array([0.0, 1.0, 7.0, 7.0, 0.9, 0.0, 1.0, 0.0, 0.9, 0.0, 1.0, 0.0])
        packed = pack_devices(mixed, row)[0]
        assert packed[:2].tolist() == [0.0, 1.0]


class TestGeneticAlgorithm:
    def test_population_must_be_even(self):
        with pytest.raises(OptimizationError, match="even"):
            GAConfig(population=31)

    def test_finds_the_bottom_of_a_bowl(self):
        result = ga_optimize(_bowl_problem(), SMALL_GA)
        assert result.fitness < 0.01
        assert result.algorithm == "ga"

    def test_best_fitness_trace_never_increases(self):
        result = ga_optimize(_bowl_problem(), SMALL_GA)
        assert len(result.trace) == SMALL_GA.generations + 1
        assert all(later <= earlier for earlier, later in zip(result.trace, result.trace[1:]))
        assert result.trace[-1] == result.fitness

    def test_evaluation_budget(self):
        result = ga_optimize(_bowl_problem(), SMALL_GA)
        assert result.evaluations == SMALL_GA.evaluation_budget() == 32 + 60 * 30

    def test_same_seed_same_result(self):
        first = ga_optimize(_bowl_problem(), SMALL_GA)
        second = ga_optimize(_bowl_problem(), SMALL_GA)
        assert np.array_equal(first.best_vector, second.best_vector)
        assert first.trace == second.trace

    def test_initial_rows_are_kept_when_best(self):
        problem = _bowl_problem()
        centre = problem.landscape.centre
        result = ga_optimize(problem, GAConfig(population=8, generations=2), initial=centre[None, :])
        assert result.fitness == 0.0
        assert np.array_equal(result.best_vector, centre)


class TestParticleSwarm:
    def test_finds_the_bottom_of_a_bowl(self):
        result = pso_optimize(_bowl_problem(), SMALL_PSO)
        assert result.fitness < 0.01
        assert result.algorithm == "pso"

    def test_evaluation_budget(self):
        result = pso_optimize(_bowl_problem(), SMALL_PSO)
        assert result.evaluations == SMALL_PSO.evaluation_budget() == 32 * 61

    def test_best_ever_is_returned(self):
        result = pso_optimize(_bowl_problem(), SMALL_PSO)
        assert result.fitness == min(result.trace)

    def test_discrete_slots_decode_to_bits(self, small_plant, warm_weather):
        problem = plant_problem(PlantOracle(small_plant, warm_weather, 1200.0), small_plant, 1200.0)
        result = pso_optimize(problem, PSOConfig(swarm_size=8, iterations=3))
        assert problem.space.contains(result.best_vector).all()
        assert result.best_setpoints.n_chillers_on == 2


class TestRegistry:
    def test_available_optimizers(self):
        assert list_optimizers() == ["ga", "pso"]

    def test_optimizers_follow_the_protocol(self):
        for name in list_optimizers():
            assert isinstance(get_optimizer(name), Optimizer)

    def test_unknown_optimizer_suggests_closest(self):
        with pytest.raises(ConfigError, match="did you mean 'pso'") as info:
            get_optimizer("psoo")
        assert info.value.key == "algorithm"

    def test_explicit_seed_overrides_document(self):
        config = optimizer_config("pso", {"swarm_size": 10, "seed": 1}, seed=3)
        assert config == PSOConfig(swarm_size=10, seed=3)

    def test_unknown_config_key(self):
        with pytest.raises(ConfigError, match="unknown config key 'ga.populaton'"):
            optimizer_config("ga", {"populaton": 10})


class TestStability:
    def test_equal_budget_iterations(self):
        assert equal_budget_pso(GAConfig(), PSOConfig()).iterations == 194
        matched = equal_budget_pso(SMALL_GA, SMALL_PSO)
        assert abs(matched.evaluation_budget() - SMALL_GA.evaluation_budget()) <= SMALL_PSO.swarm_size

    def test_needs_ten_seeds(self):
        with pytest.raises(OptimizationError, match="at least 10 seeds"):
            stability_report(_bowl_problem(), SMALL_GA, SMALL_PSO, n_seeds=9)

    def test_report_rows_and_summary(self):
        ga = GAConfig(population=8, generations=5)
        pso = PSOConfig(swarm_size=8, iterations=5)
        report = stability_report(_bowl_problem(), ga, pso, n_seeds=10)
        assert len(report.rows) == 20
        assert {row["algorithm"] for row in report.rows} == {"ga", "pso"}
        assert sorted({row["seed"] for row in report.rows}) == list(range(10))
        assert set(report.summary) == {"ga", "pso"}
        assert report.summary["ga"].cv >= 0.0
        assert report.evaluation_budget == ga.evaluation_budget()
        assert set(report.to_dict()) == {"evaluation_budget", "summary", "rows"}

    def test_evaluations_to_within_five_percent(self):
        result = ga_optimize(_bowl_problem(), SMALL_GA)
        spent = evaluations_to_within(result)
        assert SMALL_GA.population <= spent <= result.evaluations


class TestGridSearch:
    def test_candidates_start_at_the_smallest_sufficient_count(self, plant):
        rows = grid_candidates(plant, 2500.0)
        counts = rows[:, plant.slot_layout()["chiller_on"]].sum(axis=1)
        assert counts.min() == 3
        assert counts.max() == plant.n_chillers

    def test_zero_target_includes_everything_off(self, small_plant):
        rows = grid_candidates(small_plant, 0.0)
        assert (rows[:, small_plant.slot_layout()["chiller_on"]].sum(axis=1) == 0).any()

    def test_grid_best_beats_legacy(self, small_plant, warm_weather):
        problem = plant_problem(PlantOracle(small_plant, warm_weather, 1200.0), small_plant, 1200.0)
        result = grid_search(problem)
        legacy = plant_step(small_plant, warm_weather, legacy_policy(small_plant, warm_weather, 1200.0), 1200.0)
        assert result.algorithm == "grid"
        assert result.feasible
        assert result.predicted.power_kw <= legacy.power_kw

    def test_needs_a_plant(self):
        with pytest.raises(OptimizationError, match="plant search space"):
            grid_search(_bowl_problem())


class TestProfiles:
    def setup_method(self):
        self.plant = PlantConfig.uniform(n_chillers=2, n_pumps=2, n_towers=2)
        self.weather = synth_weather(seed=0, n_days=1).slice(48, 52)
        self.profile = TimeSeries.from_values(self.weather.start, [600.0, 900.0, 1200.0, 1500.0])
        self.config = GAConfig(population=16, generations=10)

    def test_one_result_per_interval(self):
        results = optimize_profile(None, self.plant, self.weather, self.profile, self.config)
        assert len(results) == 4
        assert all(result.feasible for result in results)

    def test_never_worse_than_legacy_on_the_plant(self):
        results = optimize_profile(None, self.plant, self.weather, self.profile, self.config, warm_start=True)
        for conditions, target, result in zip(self.weather, self.profile, results):
            legacy = plant_step(self.plant, conditions, legacy_policy(self.plant, conditions, target), target)
            assert result.predicted.power_kw <= legacy.power_kw + 1e-9

    def test_zero_demand_turns_everything_off(self):
        idle = TimeSeries.from_values(self.weather.start, [0.0] * 4)
        results = optimize_profile(None, self.plant, self.weather, idle, self.config)
        for result in results:
            assert result.feasible
            assert result.predicted.power_kw == pytest.approx(0.0, abs=1e-9)
            setpoints = result.best_setpoints
            assert not any(setpoints.chiller_on) and not any(setpoints.pump_on) and not any(setpoints.tower_on)

    def test_pso_profile(self):
        results = optimize_profile(
            None, self.plant, self.weather, self.profile, PSOConfig(swarm_size=8, iterations=4), algorithm="pso"
        )
        assert {result.algorithm for result in results} == {"pso"}

    def test_misaligned_profile(self):
        shifted = TimeSeries.from_values(self.weather.end, [600.0] * 4)
        with pytest.raises(DataError, match="misaligned"):
            optimize_profile(None, self.plant, self.weather, shifted, self.config)

    def test_oracle_landscape_without_surrogate(self):
        assert isinstance(interval_landscape(None, self.plant, self.weather[0], 600.0), PlantOracle)

    def test_recommendations_export(self, tmp_path):
        results = optimize_profile(None, self.plant, self.weather, self.profile, self.config)
        frame = recommendations_frame(results, list(self.weather.timestamps()), self.plant)
        assert list(frame.columns) == [
            "timestamp",
            *self.plant.slot_names(),
            "predicted_power_kw",
            "predicted_cooling_kw",
            "feasible",
        ]
        path = tmp_path / "recommendations.csv"
        export_recommendations(results, list(self.weather.timestamps()), path, self.plant)
        written = pd.read_csv(path)
        assert len(written) == 4
        assert written["timestamp"].iloc[0] == "2018-03-01T12:00:00Z"

    def test_total_energy(self):
        results = optimize_profile(None, self.plant, self.weather, self.profile, self.config)
        expected = sum(result.predicted.power_kw for result in results) / 4.0
        assert total_predicted_energy_kwh(results) == pytest.approx(expected)

    def test_timestamp_count_must_match(self):
        results = optimize_profile(None, self.plant, self.weather, self.profile, self.config)
        with pytest.raises(DataError, match="one timestamp per"):
            recommendations_frame(results, list(self.weather.timestamps())[:2], self.plant)


@pytest.mark.slow
def test_ga_matches_grid_search_on_the_plant(plant, warm_weather):
    problem = plant_problem(PlantOracle(plant, warm_weather, 2500.0), plant, 2500.0)
    seed = legacy_policy(plant, warm_weather, 2500.0).flatten()[None, :]
    best = ga_optimize(problem, GAConfig(), initial=seed)
    reference = grid_search(problem)
    assert best.fitness <= reference.fitness * 1.02


@pytest.fixture(scope="module")
def plant_stability(plant, warm_weather):
    problem = plant_problem(PlantOracle(plant, warm_weather, 2500.0), plant, 2500.0)
    return stability_report(problem, GAConfig(), PSOConfig(), n_seeds=20)


@pytest.mark.slow
def test_ga_is_more_stable_than_pso(plant_stability):
    assert plant_stability.summary["ga"].cv <= plant_stability.summary["pso"].cv


@pytest.mark.slow
def test_pso_settles_in_fewer_evaluations(plant_stability):
    summary = plant_stability.summary
    assert summary["pso"].mean_evaluations_to_5pct < summary["ga"].mean_evaluations_to_5pct
