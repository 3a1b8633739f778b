"""Seeded 64-bit mixing primitives shared by the hashing-based blocking modules.

Everything here is a pure function of its integer inputs, so any consumer
that fixes a seed gets bit-identical results across runs, platforms, and
thread schedules.
"""
from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1

_PHI = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def splitmix64(x: np.ndarray) -> np.ndarray:
    """Vectorized splitmix64 finalizer over a uint64 array."""
    z = x.astype(np.uint64, copy=True)
    z += np.uint64(_PHI)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


def mix64(x: int) -> int:
    """Scalar splitmix64 on Python ints (wrap-around mod 2**64)."""
    z = (x + _PHI) & MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, tag: int) -> int:
    """Independent 64-bit salt for a (seed, purpose-tag) combination."""
    return mix64((seed & MASK64) ^ tag)


def to_unit(h: np.ndarray) -> np.ndarray:
    """Map uint64 hashes to floats in [0, 1) using the top 53 bits."""
    return (h >> np.uint64(11)) * (2.0 ** -53)


def to_unit_open(h: np.ndarray) -> np.ndarray:
    """Map uint64 hashes to floats in (0, 1]; safe as a log() argument."""
    return ((h >> np.uint64(11)) + np.uint64(1)) * (2.0 ** -53)
