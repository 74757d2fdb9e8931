"""Named deterministic random streams.

Every stochastic component gets its own stream derived from the experiment
seed plus a stable name, so adding a draw in one module can never shift the
sequence seen by another.
"""

from __future__ import annotations

import zlib

import numpy as np

_MASK64 = (1 << 64) - 1


def substream(seed: int, name: str) -> np.random.Generator:
    """Return an independent generator for (seed, name).

    The name is hashed with crc32 (stable across processes, unlike
    Python's randomized hash()) and mixed into a SeedSequence spawn key.
    """
    crc = zlib.crc32(name.encode("utf-8")) & 0xFFFFFFFF
    ss = np.random.SeedSequence(entropy=seed & _MASK64, spawn_key=(crc,))
    return np.random.default_rng(ss)
