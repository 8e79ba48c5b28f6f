"""Seeded random streams.

A ``RandomSource`` names a stream by ``(seed, stream)``; every call to
``generator()`` rebuilds the same PCG64 state from a ``SeedSequence``, so a
source can be passed around freely and replayed. Parallel trials get distinct
streams via ``child(i)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_U64 = (1 << 64) - 1


@dataclass(frozen=True)
class RandomSource:
    seed: int
    stream: int = 0

    def __post_init__(self):
        if not (0 <= self.seed <= _U64 and 0 <= self.stream <= _U64):
            raise ValueError("seed and stream must be unsigned 64-bit integers")

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream,))
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, index: int) -> "RandomSource":
        """Derived stream, distinct for every ``index``."""
        ss = np.random.SeedSequence(entropy=(self.seed, self.stream, int(index)))
        return RandomSource(self.seed, int(ss.generate_state(1, np.uint64)[0]))


def as_generator(rng) -> np.random.Generator:
    """Accept a ``RandomSource``, a ``Generator`` or an int seed."""
    if isinstance(rng, RandomSource):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, (int, np.integer)):
        return RandomSource(int(rng)).generator()
    raise TypeError(f"cannot build a random generator from {type(rng).__name__}")
