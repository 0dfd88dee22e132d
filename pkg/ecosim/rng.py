"""Seeded random streams.

Every consumer of randomness asks for its own stream, keyed by what it is
for. Streams never share state, so the order in which independent work runs
cannot change what any of them draws.
"""
import numpy as np


SEED_MASK = (1 << 64) - 1
BLOCK_SIZE = 4096

BUILD = 0
REQUESTS = 1
EVOLUTION = 2
MIGRATION = 3
ESCAPE = 4
JOIN = 5
BASELINE = 6


class Stream:
    """numpy Generator that hands out scalar draws from pre-drawn blocks.

    Uniforms are drawn `block_size` at a time; scalar `integers` and `random`
    consume them in order. Everything else goes to the underlying Generator."""
    def __init__(self, generator: np.random.Generator, block_size: int = BLOCK_SIZE):
        self.generator = generator
        self.block_size = block_size
        self._block = []
        self._next = 0

    def _uniform(self) -> float:
        if self._next >= len(self._block):
            self._block = self.generator.random(self.block_size).tolist()
            self._next = 0
        u = self._block[self._next]
        self._next += 1
        return u

    def random(self, size=None):
        if size is not None:
            return self.generator.random(size)
        return self._uniform()

    def integers(self, low, high=None, size=None):
        if size is not None:
            return self.generator.integers(low, high, size=size)
        if high is None:
            low, high = 0, low
        return low + min(int(self._uniform() * (high - low)), high - low - 1)

    def __getattr__(self, name):
        if name == 'generator':
            raise AttributeError(name)
        return getattr(self.generator, name)


def stream(seed: int, *key: int) -> Stream:
    sequence = np.random.SeedSequence(entropy=int(seed) & SEED_MASK,
                                      spawn_key=tuple(int(k) for k in key))
    return Stream(np.random.default_rng(sequence))


def randint(rng, low: int, high: int) -> int:
    """Uniform integer in [low, high)."""
    return int(rng.integers(low, high))


def pick(rng, items):
    return items[randint(rng, 0, len(items))]
