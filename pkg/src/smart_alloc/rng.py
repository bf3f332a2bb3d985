"""Deterministic seed derivation for replicated experiments.

Replication ``r`` of a batch uses the 64-bit seed
``splitmix64(base_seed + (stream << 32) + r + 1)`` where ``splitmix64`` is
the standard finalizer below.  Streams separate draw purposes (0: the
scenario's own runs, 1: the companion runs in the other allocation mode).
Any implementation of this rule reproduces the same seeds; the generators
themselves are numpy ``PCG64``.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1


def splitmix64(value: int) -> int:
    z = (value + 0x9E3779B97F4A7C15) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def derive_seed(base_seed: int, index: int, stream: int = 0) -> int:
    """64-bit seed for replication ``index`` of ``stream``."""
    return splitmix64(((base_seed & _MASK) + (stream << 32) + index + 1) & _MASK)


def generator_for(base_seed: int, index: int, stream: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.PCG64(derive_seed(base_seed, index, stream)))
