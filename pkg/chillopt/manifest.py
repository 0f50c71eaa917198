"""Run manifests: one JSON document per CLI invocation, enough to reproduce the run."""

from __future__ import annotations

import json
import os
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

from chillopt import __version__
from chillopt.config import config_hash
from chillopt.errors import DataError

MANIFEST_FILE = "manifest.json"


@dataclass
class RunManifest:
    command: str
    seed: Optional[int] = None
    config_path: Optional[str] = None
    config_sha256: Optional[str] = None
    settings: Dict[str, Any] = field(default_factory=dict)
    inputs: List[str] = field(default_factory=list)
    outputs: List[str] = field(default_factory=list)
    version: str = __version__
    duration_s: float = 0.0
    _started: float = field(default_factory=time.perf_counter, repr=False, compare=False)

    @classmethod
    def begin(cls, command: str, config_path: Optional[str] = None, seed: Optional[int] = None) -> "RunManifest":
        return cls(
            command=command,
            seed=seed,
            config_path=None if config_path is None else os.path.abspath(config_path),
            config_sha256=None if config_path is None else config_hash(config_path),
        )

    def finish(self, out_dir: str | os.PathLike) -> Path:
        self.duration_s = round(time.perf_counter() - self._started, 3)
        path = Path(out_dir) / MANIFEST_FILE
        write_manifest(self, path)
        return path

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data.pop("_started")
        return data


def write_manifest(manifest: RunManifest, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as file:
        json.dump(manifest.to_dict(), file, indent=2, sort_keys=True)
        file.write("\n")


def read_manifest(path: str | os.PathLike) -> RunManifest:
    try:
        with open(path, encoding="utf-8") as file:
            data = json.load(file)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from exc
    known = {name for name in RunManifest.__dataclass_fields__ if not name.startswith("_")}
    return RunManifest(**{key: value for key, value in data.items() if key in known})
