"""Seeded random streams.

Every stream is a ``numpy.random.Generator`` over the counter-based Philox
bit generator, keyed through ``numpy.random.SeedSequence``. Both algorithms
carry numpy's stream-compatibility guarantee, so a given key reproduces the
same draws across numpy releases, processes and thread counts.
"""

from __future__ import annotations

import numpy as np

# domain tags keep streams for different purposes disjoint
STREAM_MODEL = 1
STREAM_SAMPLES = 2
STREAM_INIT = 3
STREAM_LAMBDA = 4

_MASK64 = (1 << 64) - 1


def _check_key(parts) -> list[int]:
    key = []
    for p in parts:
        p = int(p)
        if p < 0 or p > _MASK64:
            raise ValueError(f"seed component {p} outside unsigned 64-bit range")
        key.append(p)
    return key


def derive_seed(*parts: int) -> int:
    """Stable 64-bit hash of a tuple of non-negative integers."""
    ss = np.random.SeedSequence(_check_key(parts))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def make_rng(*parts: int) -> np.random.Generator:
    """Generator keyed by ``parts`` (a single seed or a composite key)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(_check_key(parts))))
