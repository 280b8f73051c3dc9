"""Deterministic random number generation.

All randomness in the package flows through Philox4x64 counter-based
generators, so identical seeds reproduce identical streams on any platform
and any numpy build. Distinct consumers (parameter init, batch shuffling,
synthetic data) derive child generators from a root seed plus a stream tag,
so adding a consumer never perturbs the others.
"""
from __future__ import annotations

import numpy as np

# Fixed per-consumer offsets into the Philox key space.
_STREAM_TAGS = {
    "init": 0x1A,
    "shuffle": 0x2B,
    "data": 0x3C,
    "bench": 0x4D,
    "test": 0x5E,
}


def generator(seed: int, stream: str = "init") -> np.random.Generator:
    """Return a Philox generator for (seed, stream).

    stream must be one of the registered consumer tags; the tag is folded
    into the Philox key so streams are independent for the same seed.
    """
    if stream not in _STREAM_TAGS:
        raise ValueError(f"unknown rng stream {stream!r}; known: {sorted(_STREAM_TAGS)}")
    key = (np.uint64(seed) << np.uint64(8)) ^ np.uint64(_STREAM_TAGS[stream])
    return np.random.Generator(np.random.Philox(key=[key, np.uint64(0)]))


def uniform(rng: np.random.Generator, shape, half_width: float) -> np.ndarray:
    """Uniform draw on [-half_width, +half_width], float64, C order."""
    return rng.uniform(-half_width, half_width, size=shape).astype(np.float64)
