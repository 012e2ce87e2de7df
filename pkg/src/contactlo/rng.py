"""Seeded random streams split by label.

Every consumer asks for ``stream(seed, label)``; streams with different labels
are independent, and the draws of one stream never depend on how many other
streams were created or in which order.
"""

from __future__ import annotations

import zlib

import numpy as np


def stream(seed: int, label: str) -> np.random.Generator:
    if seed < 0:
        raise ValueError("seed must be a non-negative integer")
    key = zlib.crc32(label.encode("utf-8"))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(key,))))
