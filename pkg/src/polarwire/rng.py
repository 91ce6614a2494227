"""Deterministic random-stream derivation.

Every random draw in the package comes from a generator built by
:func:`stream`, keyed on ``(master_seed, purpose, index...)``. Streams with
different keys are statistically independent, and a given key always yields
the same sequence, so trials can run in any order or in parallel.
"""

from __future__ import annotations

import zlib

import numpy as np

SEED_MASK = (1 << 64) - 1


def purpose_key(purpose: str) -> int:
    return zlib.crc32(purpose.encode("utf-8"))


def stream(master_seed: int, purpose: str, *index: int) -> np.random.Generator:
    """Return the generator for ``(master_seed, purpose, *index)``."""
    key = (purpose_key(purpose),) + tuple(int(i) for i in index)
    seq = np.random.SeedSequence(entropy=int(master_seed) & SEED_MASK, spawn_key=key)
    return np.random.Generator(np.random.PCG64(seq))


def derive_seed(master_seed: int, purpose: str, *index: int) -> int:
    """A 64-bit child seed, e.g. to hand to a RuleSet."""
    return int(stream(master_seed, purpose, *index).integers(0, 1 << 63))
