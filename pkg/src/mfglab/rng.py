"""Seeded random streams.

A stream is identified by ``(seed, *tags)``; the same key always yields the
same draws, independent of what else was drawn before.  Entry ``i`` of
:func:`step_normals` depends only on ``(seed, tags, step, i)``, so particle
``i`` sees the same noise whatever the ensemble size and whatever order the
steps are evaluated in.
"""

import zlib

import numpy as np


def _tag_int(tag) -> int:
    if isinstance(tag, (int, np.integer)):
        return int(tag) & 0xFFFFFFFF
    return zlib.crc32(str(tag).encode())


def substream(seed: int, *tags) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *map(_tag_int, tags)])))


def step_normals(seed: int, step: int, n: int, *tags) -> np.ndarray:
    """Standard normals for particles ``0..n-1`` at time step ``step``."""
    return substream(seed, "noise", *tags, step).standard_normal(n)
