"""Seeded random streams with deterministic substream derivation.

All sampling in the package goes through generators created here so that a
single 64-bit master seed fully determines every draw, including draws made
from parallel workers (each chunk owns its own substream).
"""

from __future__ import annotations

import numpy as np

SQRT_HALF = np.sqrt(0.5)


def master_stream(seed: int) -> np.random.Generator:
    """Generator for single-stream sampling under a master seed."""
    return np.random.default_rng(np.random.SeedSequence(seed))


def substream(seed: int, index: int) -> np.random.Generator:
    """Independent substream `index` derived from the master seed.

    Substreams are keyed, not spawned sequentially, so chunk i always sees
    the same stream regardless of how many workers are running.
    """
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def complex_normal(rng: np.random.Generator, size) -> np.ndarray:
    """CN(0,1) draws: variance 1/2 per real component, unit total variance."""
    return (rng.standard_normal(size) + 1j * rng.standard_normal(size)) * SQRT_HALF
