"""Seeded random streams.

Every stochastic step draws from its own generator, keyed by the master seed
and a step counter, so results never depend on execution order or thread
count. The key is mixed with SplitMix64::

    stream_seed(seed, t) = splitmix64(seed XOR splitmix64(t))

and the 64-bit result seeds a PCG64 generator.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """SplitMix64 finalizer (Steele, Lea & Flood 2014) on a 64-bit integer."""
    z = (x + 0x9E3779B97F4A7C15) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def stream_seed(seed: int, t: int) -> int:
    return splitmix64((seed & _MASK) ^ splitmix64(t & _MASK))


def stream(seed: int, t: int) -> np.random.Generator:
    """Generator for step ``t`` of the run seeded with ``seed``."""
    return np.random.Generator(np.random.PCG64(stream_seed(seed, t)))
