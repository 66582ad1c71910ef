"""Deterministic random-stream derivation.

Every stochastic component draws from a counter-based generator keyed by a
base seed plus an integer path. Streams for different paths are
independent, and results never depend on worker scheduling or evaluation
order.
"""

from __future__ import annotations

import numpy as np

# path roles used when deriving per-sample streams
ROLE_INPUT = 0
ROLE_PREDICT = 1
ROLE_CENTER = 2

_UINT64 = 1 << 64


def _sequence(seed, path):
    if seed is None:
        return np.random.SeedSequence()
    entropy = int(seed) % _UINT64
    return np.random.SeedSequence(entropy, spawn_key=tuple(int(p) for p in path))


def rng_for(seed, *path) -> np.random.Generator:
    """Generator for (seed, path). seed None means fresh OS entropy."""
    return np.random.Generator(np.random.Philox(_sequence(seed, path)))


def derive_seed(seed, *path) -> int:
    """Collapse (seed, path) to a single 63-bit integer, e.g. for transport
    to an external process that takes one scalar seed."""
    if seed is None:
        raise ValueError("cannot derive from seed None")
    state = _sequence(seed, path).generate_state(1, np.uint64)[0]
    return int(state >> np.uint64(1))
