"""Seed derivation.

Every random stream is keyed by ``(seed, *path)`` through numpy's
``SeedSequence`` spawn keys, so a work item's stream does not depend on the
order in which items are executed.
"""

from __future__ import annotations

import numpy as np

# stream tags, first element of every spawn key
AMPUTE = 1
IMPUTE = 2
SCORE = 3
JACKKNIFE = 4
FOREST = 5
VALIDATE = 6


def seed_sequence(seed: int, *path: int) -> np.random.SeedSequence:
    if seed is None:
        raise ValueError("an explicit integer seed is required")
    return np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))


def rng(seed: int, *path: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed_sequence(seed, *path)))


def int_seed(seed: int, *path: int) -> int:
    """A 31-bit integer seed for consumers that take plain ints."""
    return int(seed_sequence(seed, *path).generate_state(1, np.uint32)[0] >> 1)
