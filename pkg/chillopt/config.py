"""
Config loading for chillopt.

Config documents are read with yaml.safe_load, so the JSON files the CLI
documents and YAML files are both accepted. Typed sections are frozen
dataclasses built through build_dataclass, which refuses unknown keys.
"""

from __future__ import annotations

import dataclasses
import hashlib
import os
import types
import typing
from pathlib import Path
from typing import Any, Dict, Iterable, Mapping, Optional, Type, TypeVar

import Levenshtein
import yaml

from chillopt.errors import ConfigError

T = TypeVar("T")

DEFAULT_SETTINGS_FILE = "config.yaml"


def _expand_path(path: str) -> str:
    return os.path.abspath(os.path.expanduser(path))


def load_config(path: str | os.PathLike) -> Dict[str, Any]:
    """Load a JSON or YAML mapping from disk."""
    resolved = _expand_path(str(path))
    if not os.path.exists(resolved):
        raise ConfigError(f"config file not found: {resolved}")
    try:
        with open(resolved, encoding="utf-8") as file:
            data = yaml.safe_load(file)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config file {resolved}: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"config file {resolved} must contain a mapping at top level")
    return data


def load_settings(path: Optional[str] = None) -> Dict[str, Any]:
    """Toolkit settings (log level, log file). Missing default file means defaults."""
    candidate = path or os.getenv("CHILLOPT_CONFIG")
    if candidate:
        return load_config(candidate)
    if os.path.exists(DEFAULT_SETTINGS_FILE):
        return load_config(DEFAULT_SETTINGS_FILE)
    return {}


def config_hash(path: str | os.PathLike) -> str:
    """SHA-256 of the raw config bytes."""
    digest = hashlib.sha256()
    with open(path, "rb") as file:
        digest.update(file.read())
    return digest.hexdigest()


def closest_key(key: str, candidates: Iterable[str]) -> Optional[str]:
    """Nearest candidate by edit distance, or None when nothing is close."""
    best = None
    best_distance = None
    for candidate in candidates:
        distance = Levenshtein.distance(key, candidate)
        if best_distance is None or distance < best_distance:
            best, best_distance = candidate, distance
    if best is None or best_distance is None:
        return None
    if best_distance > max(2, len(key) // 2):
        return None
    return best


def merge_layers(*layers: Optional[Mapping[str, Any]]) -> Dict[str, Any]:
    """Deep-merge mappings; later layers win. None values never override."""
    merged: Dict[str, Any] = {}
    for layer in layers:
        if not layer:
            continue
        for key, value in layer.items():
            if value is None:
                continue
            if isinstance(value, Mapping) and isinstance(merged.get(key), Mapping):
                merged[key] = merge_layers(merged[key], value)
            else:
                merged[key] = value
    return merged


def _coerce(value: Any, hint: Any, key: str) -> Any:
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)

    if hint is Any:
        return value
    if origin is typing.Union or origin is types.UnionType:
        if value is None and type(None) in args:
            return None
        non_null = [arg for arg in args if arg is not type(None)]
        return _coerce(value, non_null[0], key)
    if origin is typing.Literal:
        if value not in args:
            raise ConfigError(f"invalid value {value!r} for '{key}'; expected one of {list(args)}", key=key)
        return value
    if dataclasses.is_dataclass(hint):
        if isinstance(value, hint):
            return value
        if not isinstance(value, Mapping):
            raise ConfigError(f"'{key}' must be a mapping", key=key)
        return build_dataclass(hint, value, section=key)
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"'{key}' must be a list", key=key)
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_coerce(item, args[0], f"{key}[{i}]") for i, item in enumerate(value))
        if len(args) != len(value):
            raise ConfigError(f"'{key}' must have {len(args)} entries", key=key)
        return tuple(_coerce(item, arg, f"{key}[{i}]") for i, (item, arg) in enumerate(zip(args, value)))
    if hint is bool:
        if isinstance(value, bool):
            return value
        raise ConfigError(f"'{key}' must be true or false", key=key)
    if hint in (int, float):
        if isinstance(value, bool):
            raise ConfigError(f"'{key}' must be a number", key=key)
        try:
            coerced = hint(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"'{key}' must be a number", key=key) from exc
        if hint is int and float(value) != coerced:
            raise ConfigError(f"'{key}' must be an integer", key=key)
        return coerced
    if hint is str:
        return str(value)
    return value


def build_dataclass(cls: Type[T], data: Optional[Mapping[str, Any]], section: str = "") -> T:
    """Build a (frozen) config dataclass from a mapping, validating keys and types."""
    data = data or {}
    if not isinstance(data, Mapping):
        raise ConfigError(f"section '{section or cls.__name__}' must be a mapping", key=section)

    hints = typing.get_type_hints(cls)
    field_names = [field.name for field in dataclasses.fields(cls) if field.init]
    kwargs: Dict[str, Any] = {}
    for key, value in data.items():
        dotted = f"{section}.{key}" if section else str(key)
        if key not in field_names:
            raise ConfigError(
                f"unknown config key '{dotted}'",
                key=dotted,
                suggestion=closest_key(str(key), field_names),
            )
        kwargs[key] = _coerce(value, hints[key], dotted)

    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid section '{section or cls.__name__}': {exc}", key=section) from exc


def dataclass_to_dict(instance: Any) -> Dict[str, Any]:
    """JSON-friendly dict of a config dataclass (tuples become lists)."""

    def _plain(value: Any) -> Any:
        if isinstance(value, dict):
            return {key: _plain(item) for key, item in value.items()}
        if isinstance(value, (list, tuple)):
            return [_plain(item) for item in value]
        return value

    return _plain(dataclasses.asdict(instance))


def ensure_output_dir(path: str | os.PathLike, outputs: Iterable[str], force: bool = False) -> Path:
    """Create the output directory; refuse to overwrite existing outputs unless forced."""
    out_dir = Path(_expand_path(str(path)))
    out_dir.mkdir(parents=True, exist_ok=True)
    if not force:
        existing = [name for name in outputs if (out_dir / name).exists()]
        if existing:
            raise ConfigError(
                f"refusing to overwrite {', '.join(existing)} in {out_dir} (use --force)",
                key="out",
            )
    return out_dir
