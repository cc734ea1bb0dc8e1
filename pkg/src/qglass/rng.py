"""Deterministic random streams derived from one 64-bit seed.

Streams are addressed by a key path, e.g. ``stream(seed, "sd", restart)``, so a
work unit gets the same numbers no matter which worker or in which order it runs.
"""
import zlib

import numpy as np


def _key(part) -> int:
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError("stream keys must be non-negative")
        return int(part)
    return zlib.crc32(str(part).encode("utf-8"))


def seed_sequence(seed: int, *keys) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=tuple(_key(k) for k in keys))


def stream(seed: int, *keys) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed_sequence(seed, *keys)))


def derive_seed(seed: int, *keys) -> int:
    """A 63-bit integer seed for a sub-task."""
    return int(seed_sequence(seed, *keys).generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
