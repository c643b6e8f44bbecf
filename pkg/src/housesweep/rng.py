"""Seed handling shared by every simulator.

Each replicate owns its own stream derived from ``(master seed, key...)`` so
results do not depend on how replicates are scheduled across threads. The
compiled kernels run xoshiro256** seeded from a 63-bit integer at the start
of every replicate.
"""
from __future__ import annotations

import numpy as np

from ._rand import mix_seeds


def _base(master: int, prefix: tuple) -> int:
    ss = np.random.SeedSequence(entropy=int(master), spawn_key=tuple(int(k) for k in prefix))
    lo, hi = ss.generate_state(2, dtype=np.uint32)
    return int(hi) << 32 | int(lo)


def replicate_seeds(master: int, n: int, *prefix: int) -> np.ndarray:
    """Seeds of replicates ``0..n-1`` of the cell identified by ``prefix``.

    Seed ``i`` does not depend on ``n``.
    """
    return mix_seeds(_base(master, prefix), int(n))


def replicate_seed(master: int, *key: int) -> int:
    """Seed of a single replicate; ``key = (*prefix, index)``."""
    *prefix, i = key if key else (0,)
    return int(mix_seeds(_base(master, tuple(prefix)), 1, offset=int(i))[0])


def kernel_seed(rng) -> int:
    """Draw a kernel seed from ``rng`` (a Generator, an int seed, or None)."""
    if isinstance(rng, np.random.Generator):
        return int(rng.integers(0, 2**63 - 1))
    if rng is None:
        return int(np.random.default_rng().integers(0, 2**63 - 1))
    return replicate_seed(int(rng), 0)


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)
