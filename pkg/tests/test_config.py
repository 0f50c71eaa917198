"""
Tests for the config layer: key suggestions, layered merging, typed
sections, output directories, seeded streams and run manifests.
"""

from dataclasses import dataclass, field
from typing import Literal, Optional, Tuple

import pytest

from chillopt.logger import configure_logging, get_logger

test_config = {"log_level": "INFO", "log_file": "test.log"}
configure_logging(test_config)
logger = get_logger(__name__)

from chillopt.config import (
    build_dataclass,
    closest_key,
    config_hash,
    dataclass_to_dict,
    ensure_output_dir,
    load_config,
    load_settings,
    merge_layers,
)
from chillopt.errors import ConfigError, DataError
from chillopt.manifest import RunManifest, read_manifest
from chillopt.rng import derive_rng


@dataclass(frozen=True)
class Inner:
    rate: float = 0.5
    steps: int = 10


@dataclass(frozen=True)
class Outer:
    name: str = "plant"
    mode: Literal["fast", "full"] = "fast"
    seed: Optional[int] = None
    weights: Tuple[float, ...] = (1.0,)
    enabled: bool = True
    inner: Inner = field(default_factory=Inner)

    def __post_init__(self):
        if self.inner.steps < 1:
            raise ValueError("inner.steps must be positive")


class TestClosestKey:
    def test_typo_finds_the_key(self):
        assert closest_key("populaton", ["population", "generations"]) == "population"

    def test_nothing_close(self):
        assert closest_key("xyz", ["population", "generations"]) is None

    def test_no_candidates(self):
        assert closest_key("seed", []) is None


class TestMergeLayers:
    def test_later_layers_win(self):
        merged = merge_layers({"a": 1, "b": 2}, {"b": 3})
        assert merged == {"a": 1, "b": 3}

    def test_nested_sections_merge(self):
        merged = merge_layers({"ga": {"population": 64, "generations": 200}}, {"ga": {"generations": 10}})
        assert merged == {"ga": {"population": 64, "generations": 10}}

    def test_none_never_overrides(self):
        assert merge_layers({"seed": 4}, {"seed": None}, None) == {"seed": 4}


class TestBuildDataclass:
    def test_defaults(self):
        assert build_dataclass(Outer, None) == Outer()

    def test_coerces_nested_and_tuples(self):
        built = build_dataclass(Outer, {"seed": "7", "weights": [1, 2], "inner": {"steps": 3}})
        assert built.seed == 7
        assert built.weights == (1.0, 2.0)
        assert built.inner == Inner(steps=3)

    def test_unknown_key_suggests(self):
        with pytest.raises(ConfigError, match="unknown config key 'sed'") as info:
            build_dataclass(Outer, {"sed": 1})
        assert info.value.key == "sed"
        assert info.value.suggestion == "seed"

    def test_nested_unknown_key_is_dotted(self):
        with pytest.raises(ConfigError, match="run.inner.stpes"):
            build_dataclass(Outer, {"inner": {"stpes": 3}}, section="run")

    @pytest.mark.parametrize(
        "data, key",
        [
            ({"seed": 2.5}, "seed"),
            ({"enabled": "yes"}, "enabled"),
            ({"mode": "slow"}, "mode"),
            ({"inner": 3}, "inner"),
            ({"inner": {"rate": True}}, "inner.rate"),
        ],
    )
    def test_type_errors_name_the_key(self, data, key):
        with pytest.raises(ConfigError) as info:
            build_dataclass(Outer, data)
        assert info.value.key == key

    def test_post_init_failures_become_config_errors(self):
        with pytest.raises(ConfigError, match="inner.steps must be positive"):
            build_dataclass(Outer, {"inner": {"steps": 0}})

    def test_to_dict_lists_tuples(self):
        assert dataclass_to_dict(Outer(weights=(1.0, 2.0)))["weights"] == [1.0, 2.0]


class TestConfigFiles:
    def test_json_and_yaml(self, tmp_path):
        json_file = tmp_path / "a.json"
        json_file.write_text('{"days": 3}')
        yaml_file = tmp_path / "a.yaml"
        yaml_file.write_text("days: 3\n")
        assert load_config(json_file) == load_config(yaml_file) == {"days": 3}

    def test_empty_file_is_empty_mapping(self, tmp_path):
        empty = tmp_path / "empty.yaml"
        empty.write_text("")
        assert load_config(empty) == {}

    def test_missing_and_malformed(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "absent.yaml")
        listing = tmp_path / "list.yaml"
        listing.write_text("- 1\n- 2\n")
        with pytest.raises(ConfigError, match="mapping"):
            load_config(listing)

    def test_settings_from_environment(self, tmp_path, monkeypatch):
        settings = tmp_path / "settings.yaml"
        settings.write_text("log_level: DEBUG\n")
        monkeypatch.setenv("CHILLOPT_CONFIG", str(settings))
        assert load_settings() == {"log_level": "DEBUG"}

    def test_hash_tracks_content(self, tmp_path):
        first = tmp_path / "a.yaml"
        first.write_text("days: 3\n")
        second = tmp_path / "b.yaml"
        second.write_text("days: 3\n")
        assert config_hash(first) == config_hash(second)
        second.write_text("days: 4\n")
        assert config_hash(first) != config_hash(second)


class TestOutputDir:
    def test_creates_directory(self, tmp_path):
        out = ensure_output_dir(tmp_path / "nested" / "out", ["result.csv"])
        assert out.is_dir()

    def test_refuses_existing_outputs(self, tmp_path):
        (tmp_path / "result.csv").write_text("x")
        with pytest.raises(ConfigError, match="refusing to overwrite result.csv"):
            ensure_output_dir(tmp_path, ["result.csv", "other.csv"])
        assert ensure_output_dir(tmp_path, ["result.csv"], force=True).samefile(tmp_path)


class TestSeededStreams:
    def test_same_seed_and_label_repeat(self):
        assert derive_rng(3, "weather").random(4).tolist() == derive_rng(3, "weather").random(4).tolist()

    def test_streams_are_independent(self):
        assert derive_rng(3, "weather").random() != derive_rng(3, "demand").random()
        assert derive_rng(3, "weather").random() != derive_rng(4, "weather").random()


class TestManifest:
    def test_round_trip(self, tmp_path):
        config = tmp_path / "run.yaml"
        config.write_text("seed: 2\n")
        manifest = RunManifest.begin("simulate", config_path=str(config), seed=2)
        manifest.settings = {"days": 3}
        manifest.outputs = ["energy.csv"]
        path = manifest.finish(tmp_path)

        loaded = read_manifest(path)
        assert loaded.command == "simulate"
        assert loaded.seed == 2
        assert loaded.config_sha256 == config_hash(config)
        assert loaded.settings == {"days": 3}
        assert loaded.duration_s >= 0.0

    def test_unreadable_manifest(self, tmp_path):
        broken = tmp_path / "manifest.json"
        broken.write_text("{not json")
        with pytest.raises(DataError, match="cannot read manifest"):
            read_manifest(broken)
