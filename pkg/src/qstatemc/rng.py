"""Seeded random streams.

Every stream is a Philox counter-based generator keyed by a ``SeedSequence``
with entropy ``seed`` and spawn key ``(stream,)``, so independent chains or
batches get disjoint streams that depend only on ``(seed, stream)``.
"""

from __future__ import annotations

import numpy as np

GENERATOR_NAME = "numpy.random.Philox(SeedSequence(seed, spawn_key=(stream,)))"


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream),))
    return np.random.Generator(np.random.Philox(ss))


def stream_rngs(seed: int, n: int, offset: int = 0) -> list[np.random.Generator]:
    return [make_rng(seed, offset + j) for j in range(n)]


def fresh_seed() -> int:
    """A random 63-bit seed for runs started without one."""
    return int(np.random.SeedSequence().entropy % (2**63))
