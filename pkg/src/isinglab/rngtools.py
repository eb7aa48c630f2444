"""Seed handling and a buffered uniform generator for tight sampling loops."""

from __future__ import annotations

import hashlib

import numpy as np

_MASK63 = (1 << 63) - 1


def stable_index_hash(i: int) -> int:
    """Deterministic 63-bit hash of a worker/chain index (stable across runs)."""
    digest = hashlib.blake2b(str(i).encode("ascii"), digest_size=8).digest()
    return int.from_bytes(digest, "big") & _MASK63


def split_seed(seed: int, index: int) -> int:
    """Seed for worker `index`: master seed XOR a stable hash of the index.

    XOR-hash splitting keeps the streams uncorrelated even for consecutive
    indices; index 0 maps to a distinct value from the master seed itself.
    """
    return (int(seed) ^ stable_index_hash(index)) & _MASK63


class BufferedUniform:
    """Uniform(0,1) scalars drawn in blocks from a numpy Generator.

    Block refills amortize numpy call overhead; the stream is a pure
    function of the seed, so runs are reproducible.
    """

    __slots__ = ("_gen", "_block", "_buf", "_pos")

    def __init__(self, seed_or_gen, block: int = 8192):
        if isinstance(seed_or_gen, np.random.Generator):
            self._gen = seed_or_gen
        else:
            self._gen = np.random.default_rng(seed_or_gen)
        self._block = block
        self._buf = self._gen.random(block)
        self._pos = 0

    def random(self) -> float:
        pos = self._pos
        if pos >= self._block:
            self._buf = self._gen.random(self._block)
            pos = 0
        self._pos = pos + 1
        return self._buf[pos]

    def uniform(self, low: float, high: float) -> float:
        return low + (high - low) * self.random()

    def randint(self, n: int) -> int:
        """Uniform integer in [0, n)."""
        i = int(self.random() * n)
        return n - 1 if i >= n else i

    @property
    def generator(self) -> np.random.Generator:
        """Underlying Generator (do not interleave with buffered draws mid-block)."""
        return self._gen
