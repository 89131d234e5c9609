"""Explicit, seedable, splittable random source.

No global RNG anywhere in the package: every stochastic operation takes
an Rng argument.  Splitting is backed by numpy's SeedSequence spawning,
so child streams are independent and the whole tree is reproducible from
the root seed.
"""
from __future__ import annotations

import numpy as np


class Rng:
    def __init__(self, seed, _seq: np.random.SeedSequence | None = None):
        self.seq = _seq if _seq is not None else np.random.SeedSequence(seed)
        self.gen = np.random.Generator(np.random.PCG64(self.seq))

    def split(self) -> "Rng":
        """Fork an independent child stream without disturbing this one."""
        (child,) = self.seq.spawn(1)
        return Rng(None, _seq=child)

    def normal(self, shape, scale=1.0, dtype=np.float32):
        return self.gen.normal(0.0, scale, size=shape).astype(dtype)

    def uniform(self, shape, low=0.0, high=1.0, dtype=np.float32):
        return self.gen.uniform(low, high, size=shape).astype(dtype)

    def bernoulli_keep(self, shape, keep_prob):
        """Boolean mask with P(True) = keep_prob, for inverted dropout."""
        return self.gen.random(size=shape) < keep_prob

    def permutation(self, n):
        return self.gen.permutation(n)

    def integers(self, low, high, size=None):
        return self.gen.integers(low, high, size=size)
