"""Deterministic, counter-addressable random streams.

Every stochastic routine in the package draws from a stream keyed by the
experiment seed plus a small tuple of integer ids (chain index, replicate
index, ...).  Streams with different keys are statistically independent and
a given key always reproduces the same draw sequence, which makes sampled
artifacts reproducible and lets chains run in parallel without coordination.
"""

from __future__ import annotations

import numpy as np

# Fixed 64-bit mixing constants (splitmix64).
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_MASK = (1 << 64) - 1


def _mix(x: int) -> int:
    x = (x ^ (x >> 30)) * _MIX1 & _MASK
    x = (x ^ (x >> 27)) * _MIX2 & _MASK
    return x ^ (x >> 31)


def stream_key(seed: int, *ids: int) -> int:
    """Collapse (seed, ids...) into a single 64-bit Philox key."""
    h = _mix(seed & _MASK)
    for i in ids:
        h = _mix((h + _GAMMA + (i & _MASK)) & _MASK)
    return h


def stream(seed: int, *ids: int) -> np.random.Generator:
    """Return an independent Generator for the given (seed, ids...) address."""
    return np.random.Generator(np.random.Philox(key=stream_key(seed, *ids)))
