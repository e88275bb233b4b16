"""Splittable, order-independent random streams.

Every random draw in the pipeline comes from ``stream(master_seed, tag, *index)``.
The tag is hashed with CRC32 and combined with the integer indices into the
``spawn_key`` of a :class:`numpy.random.SeedSequence`, so two streams with
different (tag, index) tuples are statistically independent and each one can
be rebuilt in isolation.  This is what lets SCMs be generated in parallel
without any dependence on scheduling order.
"""

from __future__ import annotations

import zlib

import numpy as np


def tag_key(tag: str) -> int:
    return zlib.crc32(tag.encode("utf-8"))


def seed_sequence(master_seed: int, tag: str, *index: int) -> np.random.SeedSequence:
    if master_seed < 0:
        raise ValueError("master seed must be non-negative")
    key = (tag_key(tag),) + tuple(int(i) for i in index)
    return np.random.SeedSequence(entropy=int(master_seed), spawn_key=key)


def stream(master_seed: int, tag: str, *index: int) -> np.random.Generator:
    """Return the generator for ``(master_seed, tag, index...)``."""
    return np.random.Generator(np.random.PCG64(seed_sequence(master_seed, tag, *index)))
