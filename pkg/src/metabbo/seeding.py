"""Deterministic seed derivation."""

from __future__ import annotations

import numpy as np


def hash64(*keys: int) -> int:
    """Mix non-negative integer keys into one 64-bit seed.

    Backed by numpy's SeedSequence, whose hashing is version-stable, so
    derived seeds never depend on worker count, process or platform.
    """
    ss = np.random.SeedSequence([int(k) for k in keys])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def rng_from(*keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in keys]))
