"""Seeded random streams.

Every consumer derives its own numpy Generator from (seed, label...), so
adding a consumer never shifts the numbers another one draws.
"""

from __future__ import annotations

import zlib

import numpy as np


def _label_key(label: str | int) -> int:
    if isinstance(label, int):
        return label
    return zlib.crc32(label.encode("utf-8"))


def derive_rng(seed: int, *labels: str | int) -> np.random.Generator:
    """Independent Generator for a named stream under a root seed."""
    entropy = [int(seed)] + [_label_key(label) for label in labels]
    return np.random.default_rng(np.random.SeedSequence(entropy))
