"""
Tests for the synthetic plant: device curves, the quasi-static simulator,
the legacy staging policy, weather/demand synthesis and history files.
"""

import tempfile
import unittest
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from chillopt.logger import configure_logging, get_logger

test_config = {"log_level": "INFO", "log_file": "test.log"}
configure_logging(test_config)
logger = get_logger(__name__)

from chillopt.errors import ConfigError, DataError
from chillopt.plant.devices import chiller_power, cop_effective, fan_power, pump_power, tower_outlet_temp
from chillopt.plant.history import (
    DemandModel,
    demand_series,
    generate_history,
    load_plant_config,
    meter_readings,
    metered,
    power_of,
    read_history,
    save_plant_config,
    simulate_operation,
    write_history,
)
from chillopt.plant.policy import (
    DailyAdjustment,
    OperatorVariation,
    adjust_setpoints,
    draw_adjustments,
    legacy_policy,
    random_policy,
    staged_chiller_count,
)
from chillopt.plant.simulator import plant_step, step_breakdown
from chillopt.plant.types import ChillerSpec, PlantConfig, SetpointVector, TowerSpec
from chillopt.plant.weather import DRY_BULB_RANGE_C, synth_weather
from chillopt.rng import derive_rng
from chillopt.timeseries import INTERVALS_PER_DAY, WeatherRecord


class TestDevices:
    @pytest.mark.parametrize("fraction", [0.0, 0.3, 0.5, 0.9, 1.0])
    def test_affinity_cube_law(self, fraction):
        assert pump_power(15.0, fraction) == pytest.approx(15.0 * fraction**3)
        assert fan_power(22.0, fraction) == pytest.approx(22.0 * fraction**3)

    def test_speed_outside_unit_interval(self):
        with pytest.raises(DataError, match="outside"):
            pump_power(15.0, 1.2)

    def test_full_load_cop_equals_design_cop(self, plant):
        # a + b + c = 1 makes the part-load factor 1 at plr = 1
        cop = cop_effective(plant, plr=1.0, lift_c=plant.design_lift_c)
        assert cop == pytest.approx(plant.chillers[0].design_cop)

    def test_part_load_sweet_spot(self, plant):
        lift = plant.design_lift_c
        # 0.2 + 1.4 p - 0.6 p^2 peaks at p = 7/6, so efficiency rises through the operating range
        assert cop_effective(plant, 0.5, lift) < cop_effective(plant, 0.9, lift)

    def test_cop_is_clamped_at_low_lift(self, plant):
        spec = plant.chillers[0]
        assert cop_effective(plant, 1.0, 1.0) == pytest.approx(plant.cop_clamp * spec.design_cop)

    def test_coefficients_must_sum_to_one(self):
        with pytest.raises(DataError, match="sum to 1"):
            ChillerSpec(part_load_coeffs=(0.3, 1.4, -0.6))

    def test_chiller_power(self, plant):
        lift = plant.design_lift_c
        assert chiller_power(plant, 0.0, lift) == 0.0
        assert chiller_power(plant, 1.0, lift) == pytest.approx(1000.0 / 5.5)

    def test_overloaded_chiller(self, plant):
        with pytest.raises(DataError, match="overloaded"):
            chiller_power(plant, 1.2, plant.design_lift_c)

    def test_tower_approach_shrinks_with_fan(self, plant):
        outlets = [tower_outlet_temp(plant, 35.0, 24.0, fan) for fan in (0.2, 0.5, 1.0)]
        assert outlets[0] > outlets[1] > outlets[2]
        assert outlets[2] == pytest.approx(24.0 + 5.0 * (1.0 - 0.6))

    def test_tower_approach_floor(self):
        config = PlantConfig.uniform(tower=TowerSpec(design_approach_c=2.0))
        assert tower_outlet_temp(config, 35.0, 24.0, 1.0) == pytest.approx(25.0)

    def test_thermodynamics_violated(self, plant):
        with pytest.raises(DataError, match="thermodynamics violated"):
            tower_outlet_temp(plant, 20.0, 24.0, 0.5)


class TestLegacyPolicy:
    def test_zero_demand_turns_everything_off(self, plant, warm_weather):
        setpoints = legacy_policy(plant, warm_weather, 0.0)
        assert setpoints == SetpointVector.all_off(plant)
        output = plant_step(plant, warm_weather, setpoints, 0.0)
        assert output.power_kw == 0.0
        assert output.cooling_kw == 0.0

    @pytest.mark.parametrize(
        "demand,expected",
        [(1.0, 1), (850.0, 1), (851.0, 2), (1700.0, 2), (1701.0, 3), (4250.0, 5), (9000.0, 5)],
    )
    def test_threshold_staging(self, plant, demand, expected):
        assert staged_chiller_count(plant, demand) == expected

    def test_auxiliaries_follow_chiller_count(self, plant, warm_weather):
        setpoints = legacy_policy(plant, warm_weather, 851.0)
        assert setpoints.n_chillers_on == 2
        assert setpoints.chiller_on[:2] == (True, True)
        assert setpoints.n_pumps_on == 5
        assert setpoints.n_towers_on == 2
        assert set(setpoints.pump_speed_frac[:5]) == {plant.legacy_speed_frac}
        assert set(setpoints.chw_supply_setpoint_c) == {plant.legacy_chw_c}

    def test_negative_demand(self, plant, warm_weather):
        with pytest.raises(DataError, match="non-negative"):
            legacy_policy(plant, warm_weather, -5.0)

    def test_random_policy_runs_something_under_load(self, plant):
        rng = derive_rng(0, "policy-test")
        for _ in range(20):
            setpoints = random_policy(plant, rng, 500.0)
            assert setpoints.n_chillers_on >= 1
            assert setpoints.n_pumps_on >= 1
            assert setpoints.n_towers_on >= 1


class TestSimulator:
    def test_cooling_saturates_at_on_capacity(self, plant, warm_weather):
        setpoints = legacy_policy(plant, warm_weather, 1500.0)
        output = plant_step(plant, warm_weather, setpoints, 6000.0)
        assert output.cooling_kw == pytest.approx(2000.0)

    def test_demand_is_met_within_capacity(self, plant, warm_weather):
        setpoints = legacy_policy(plant, warm_weather, 1500.0)
        output = plant_step(plant, warm_weather, setpoints, 1500.0)
        assert output.cooling_kw == pytest.approx(1500.0)
        assert output.power_kw > 0.0

    def test_no_pumps_means_no_cooling(self, plant, warm_weather):
        setpoints = legacy_policy(plant, warm_weather, 1500.0)
        idle = replace(setpoints, pump_on=(False,) * plant.n_pumps, pump_speed_frac=(0.0,) * plant.n_pumps)
        breakdown = step_breakdown(plant, warm_weather, idle, 1500.0)
        assert breakdown.cooling_kw == 0.0
        assert sum(breakdown.chiller_kw) == 0.0
        # tower fans still draw parasitic power
        assert breakdown.power_kw == pytest.approx(sum(breakdown.fan_kw))
        assert breakdown.power_kw > 0.0

    def test_raising_pump_speed_never_lowers_power(self, plant, warm_weather):
        base = legacy_policy(plant, warm_weather, 2500.0)
        previous = None
        for speed in (0.3, 0.5, 0.7, 0.9, 1.0):
            speeds = tuple(speed if on else 0.0 for on in base.pump_on)
            power = plant_step(plant, warm_weather, replace(base, pump_speed_frac=speeds), 2500.0).power_kw
            if previous is not None:
                assert power >= previous
            previous = power

    def test_raising_fan_speed_without_load_never_lowers_power(self, plant, warm_weather):
        base = legacy_policy(plant, warm_weather, 2500.0)
        previous = None
        for fan in (0.2, 0.4, 0.6, 0.8, 1.0):
            fans = tuple(fan if on else 0.0 for on in base.tower_on)
            power = plant_step(plant, warm_weather, replace(base, tower_fan_frac=fans), 0.0).power_kw
            if previous is not None:
                assert power >= previous
            previous = power

    def test_faster_fans_relieve_loaded_chillers(self, plant, warm_weather):
        base = legacy_policy(plant, warm_weather, 2500.0)
        slow = replace(base, tower_fan_frac=tuple(0.3 if on else 0.0 for on in base.tower_on))
        fast = replace(base, tower_fan_frac=tuple(1.0 if on else 0.0 for on in base.tower_on))
        slow_chillers = sum(step_breakdown(plant, warm_weather, slow, 2500.0).chiller_kw)
        fast_chillers = sum(step_breakdown(plant, warm_weather, fast, 2500.0).chiller_kw)
        assert fast_chillers < slow_chillers

    def test_mismatched_setpoints(self, plant, small_plant, warm_weather):
        setpoints = SetpointVector.all_off(small_plant)
        with pytest.raises(DataError, match="does not match"):
            plant_step(plant, warm_weather, setpoints, 100.0)


class TestSetpointVector:
    def test_slot_layout(self, plant):
        assert plant.n_slots == 2 * (5 + 12 + 4)
        assert len(plant.slot_names()) == plant.n_slots
        assert plant.slot_names()[0] == "chiller_on_1"
        assert plant.slot_names()[-1] == "tower_on_4"

    def test_flat_round_trip(self, plant, warm_weather):
        setpoints = legacy_policy(plant, warm_weather, 3000.0)
        assert SetpointVector.from_flat(setpoints.flatten(), plant) == setpoints

    def test_off_devices_read_back_at_zero_speed(self, small_plant):
        flat = np.array([1, 0, 7.0, 7.0, 0.8, 0.8, 1, 0, 0.5, 0.5, 1, 0], dtype=float)
        setpoints = SetpointVector.from_flat(flat, small_plant)
        assert setpoints.pump_speed_frac == (0.8, 0.0)
        assert setpoints.tower_fan_frac == (0.5, 0.0)

    def test_running_pump_needs_minimum_speed(self, small_plant):
        with pytest.raises(DataError, match="pump speed"):
            SetpointVector(
                chiller_on=(True, False),
                chw_supply_setpoint_c=(7.0, 7.0),
                pump_speed_frac=(0.1, 0.0),
                pump_on=(True, False),
                tower_fan_frac=(0.5, 0.0),
                tower_on=(True, False),
            )

    def test_chilled_water_range(self, small_plant):
        with pytest.raises(DataError, match="chilled-water setpoint"):
            replace(SetpointVector.all_off(small_plant), chw_supply_setpoint_c=(4.0, 7.0))


class TestPlantConfig(unittest.TestCase):
    def test_unknown_key_suggests_closest(self):
        with self.assertRaises(ConfigError) as ctx:
            PlantConfig.from_dict({"stage_treshold": 0.9})
        self.assertEqual(ctx.exception.suggestion, "stage_threshold")
        self.assertIn("did you mean 'stage_threshold'", str(ctx.exception))

    def test_invalid_threshold_is_a_config_error(self):
        with self.assertRaises(ConfigError):
            PlantConfig.from_dict({"stage_threshold": 1.5})

    def test_save_and_load(self):
        config = PlantConfig.uniform(n_chillers=3, n_pumps=4, n_towers=2, legacy_chw_c=8.0)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "plant.json"
            save_plant_config(config, path)
            self.assertEqual(load_plant_config(path), config)


class TestSynthesis:
    def test_weather_is_clamped_and_deterministic(self):
        first = synth_weather(seed=5, n_days=3)
        second = synth_weather(seed=5, n_days=3)
        dry = first.map(lambda r: r.dry_bulb_c).values()
        assert len(first) == 3 * INTERVALS_PER_DAY
        assert np.array_equal(dry, second.map(lambda r: r.dry_bulb_c).values())
        assert dry.min() >= DRY_BULB_RANGE_C[0] and dry.max() <= DRY_BULB_RANGE_C[1]

    def test_offset_warms_the_year(self):
        base = synth_weather(seed=5, n_days=3).map(lambda r: r.dry_bulb_c).values()
        warm = synth_weather(seed=5, n_days=3, offset_c=2.0).map(lambda r: r.dry_bulb_c).values()
        assert warm.mean() > base.mean()

    def test_weather_needs_a_day(self):
        with pytest.raises(DataError, match="at least 1"):
            synth_weather(seed=0, n_days=0)

    def test_demand_is_non_negative(self):
        weather = synth_weather(seed=2, n_days=2)
        demand = demand_series(DemandModel(), weather, seed=2).values()
        assert (demand >= 0.0).all()

    def test_demand_streams_are_independent(self):
        weather = synth_weather(seed=2, n_days=1)
        first = demand_series(DemandModel(), weather, seed=2).values()
        other = demand_series(DemandModel(), weather, seed=2, stream="other").values()
        assert not np.array_equal(first, other)


class TestHistory:
    def test_same_seed_same_history(self, small_plant):
        first = power_of(generate_history(small_plant, seed=9, n_days=2)).values()
        second = power_of(generate_history(small_plant, seed=9, n_days=2)).values()
        assert np.array_equal(first, second)

    def test_history_has_96_records_per_day(self, small_plant):
        assert len(generate_history(small_plant, seed=9, n_days=2)) == 2 * INTERVALS_PER_DAY

    def test_csv_round_trip(self, small_plant, tmp_path):
        history = generate_history(small_plant, seed=9, n_days=1)
        paths = write_history(history, small_plant, tmp_path)
        assert [path.name for path in paths] == ["weather.csv", "energy.csv", "setpoints.csv"]

        restored = read_history(tmp_path, small_plant)
        assert restored.start == history.start
        assert len(restored) == len(history)
        for original, loaded in zip(history, restored):
            assert loaded.output.power_kw == pytest.approx(original.output.power_kw, abs=1e-5)
            assert loaded.setpoints == original.setpoints
            assert loaded.demand_kw == pytest.approx(original.demand_kw, abs=1e-5)

    def test_legacy_history_meets_demand_within_capacity(self, history, plant):
        for record in history.records[: 2 * INTERVALS_PER_DAY]:
            expected = min(record.demand_kw, plant.total_capacity_kw())
            assert record.output.cooling_kw == pytest.approx(expected)

    def test_weather_record_kept_on_history(self, history):
        assert isinstance(history[0].weather, WeatherRecord)


class TestOperatorVariation:
    def test_idle_plant_stays_idle(self, plant, warm_weather):
        idle = legacy_policy(plant, warm_weather, 0.0)
        adjustment = DailyAdjustment(chw_offset_c=0.5, pump_delta=1, tower_delta=1)
        assert adjust_setpoints(plant, idle, adjustment) == idle

    def test_counts_stay_within_the_plant(self, plant, warm_weather):
        full = legacy_policy(plant, warm_weather, 4500.0)
        more = adjust_setpoints(plant, full, DailyAdjustment(pump_delta=1, tower_delta=1))
        assert more.n_pumps_on == plant.n_pumps
        assert more.n_towers_on == plant.n_towers
        light = legacy_policy(plant, warm_weather, 300.0)
        fewer = adjust_setpoints(plant, light, DailyAdjustment(pump_delta=-1, tower_delta=-1))
        assert fewer.n_pumps_on == 2
        assert fewer.n_towers_on == 1

    def test_offsets_move_the_hand_set_parameters(self, plant, warm_weather):
        staged = legacy_policy(plant, warm_weather, 1200.0)
        adjusted = adjust_setpoints(
            plant, staged, DailyAdjustment(chw_offset_c=-0.4, pump_speed_offset=0.05, fan_speed_offset=-0.05)
        )
        assert adjusted.chw_supply_setpoint_c == pytest.approx((plant.legacy_chw_c - 0.4,) * plant.n_chillers)
        assert adjusted.pump_speed_frac[0] == pytest.approx(plant.legacy_speed_frac + 0.05)
        assert adjusted.tower_fan_frac[0] == pytest.approx(plant.legacy_speed_frac - 0.05)
        assert adjusted.chiller_on == staged.chiller_on

    def test_draws_stay_inside_the_variation(self):
        variation = OperatorVariation(chw_c=0.5, speed_frac=0.05, extra_pumps=1, extra_towers=2)
        adjustments = draw_adjustments(variation, 200, derive_rng(0, "operator-test"))
        assert len(adjustments) == 200
        assert all(abs(a.chw_offset_c) <= 0.5 for a in adjustments)
        assert {a.pump_delta for a in adjustments} == {-1, 0, 1}
        assert {a.tower_delta for a in adjustments} == {-2, -1, 0, 1, 2}

    def test_negative_variation_is_rejected(self):
        with pytest.raises(ConfigError, match="non-negative"):
            OperatorVariation(extra_pumps=-1)

    def test_history_with_variation_is_deterministic(self, small_plant):
        variation = OperatorVariation()
        first = generate_history(small_plant, seed=9, n_days=3, variation=variation)
        second = generate_history(small_plant, seed=9, n_days=3, variation=variation)
        assert [r.setpoints for r in first] == [r.setpoints for r in second]
        plain = generate_history(small_plant, seed=9, n_days=3)
        assert [r.setpoints for r in first] != [r.setpoints for r in plain]

    def test_one_adjustment_per_day_is_required(self, small_plant):
        weather = synth_weather(9, 2)
        demand = demand_series(DemandModel(), weather, 9)
        with pytest.raises(DataError, match="one adjustment per day"):
            simulate_operation(small_plant, weather, demand, adjustments=[DailyAdjustment()])


class TestMeterNoise:
    def test_zero_noise_reads_true_power(self):
        power = np.array([0.0, 120.0, 800.0])
        assert np.array_equal(meter_readings(power, 0.0, derive_rng(0, "meter-test")), power)

    def test_readings_are_never_negative(self):
        readings = meter_readings(np.full(1000, 10.0), 0.45, derive_rng(0, "meter-test"))
        assert (readings >= 0.0).all()
        assert readings.std() > 0.0

    def test_negative_noise_is_rejected(self):
        with pytest.raises(ConfigError, match="non-negative"):
            meter_readings(np.ones(3), -0.1, derive_rng(0, "meter-test"))

    def test_noise_touches_power_only(self, small_plant):
        clean = generate_history(small_plant, seed=9, n_days=2)
        noisy = generate_history(small_plant, seed=9, n_days=2, meter_noise_frac=0.03)
        assert [r.output.cooling_kw for r in noisy] == [r.output.cooling_kw for r in clean]
        assert [r.setpoints for r in noisy] == [r.setpoints for r in clean]
        true_power = power_of(clean).values()
        running = true_power > 0
        ratio = power_of(noisy).values()[running] / true_power[running]
        assert abs(ratio.mean() - 1.0) < 0.01
        assert 0.02 < ratio.std() < 0.04

    def test_metered_is_seeded(self, small_plant):
        clean = generate_history(small_plant, seed=9, n_days=1)
        first = power_of(metered(clean, 0.03, seed=1)).values()
        assert np.array_equal(first, power_of(metered(clean, 0.03, seed=1)).values())
        assert not np.array_equal(first, power_of(metered(clean, 0.03, seed=2)).values())
