"""Counter-based random streams keyed by (seed, stream id)."""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _stream_id(parent: int, label) -> int:
    digest = hashlib.sha256(f"{parent}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


class Rng:
    """Philox generator whose draws depend only on (seed, stream).

    Children made with :meth:`split` get a stream id hashed from the parent
    stream and a label, so the same label always yields the same draws no
    matter how many workers or which order they run in.
    """

    __slots__ = ("seed", "stream", "generator")

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed) & _MASK64
        self.stream = int(stream) & _MASK64
        key = np.array([self.seed, self.stream], dtype=np.uint64)
        self.generator = np.random.Generator(np.random.Philox(key=key))

    def split(self, label) -> "Rng":
        return Rng(self.seed, _stream_id(self.stream, label))

    def __repr__(self):
        return f"Rng(seed={self.seed}, stream={self.stream})"

    # thin pass-throughs for the draws the package uses
    def normal(self, loc=0.0, scale=1.0, size=None):
        return self.generator.normal(loc, scale, size)

    def standard_normal(self, size=None):
        return self.generator.standard_normal(size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.generator.uniform(low, high, size)

    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high, size)

    def random(self, size=None):
        return self.generator.random(size)

    def choice(self, a, size=None, replace=True, p=None):
        return self.generator.choice(a, size=size, replace=replace, p=p)

    def dirichlet(self, alpha, size=None):
        return self.generator.dirichlet(alpha, size)

    def permutation(self, x):
        return self.generator.permutation(x)


def as_rng(rng) -> Rng:
    if isinstance(rng, Rng):
        return rng
    if isinstance(rng, (int, np.integer)):
        return Rng(int(rng))
    raise TypeError(f"expected Rng or int seed, got {type(rng).__name__}")


def as_generator(rng) -> np.random.Generator:
    """numpy Generator behind an Rng, an int seed, or a Generator itself."""
    if isinstance(rng, np.random.Generator):
        return rng
    return as_rng(rng).generator
