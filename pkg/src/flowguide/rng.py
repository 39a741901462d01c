"""Seed splitting.

Every random stream is derived from the single top-level seed by hashing a
key path into a :class:`numpy.random.SeedSequence`::

    stream(seed, "x1", 3)  ->  SeedSequence([seed, crc32("x1"), 3])

String keys are mapped through CRC-32 so the derivation is stable across
processes and platforms. Streams depend only on their key, never on the order
in which they are requested, so results do not depend on worker count.
"""
import zlib

import numpy as np


def _key(k):
    if isinstance(k, str):
        return zlib.crc32(k.encode("utf-8"))
    k = int(k)
    if k < 0:
        raise ValueError("seed keys must be non-negative")
    return k


def stream(seed, *keys):
    return np.random.default_rng(np.random.SeedSequence([_key(seed), *map(_key, keys)]))


def child_seed(seed, *keys):
    """A derived 63-bit integer seed, for APIs that take integer seeds."""
    return int(stream(seed, *keys).integers(0, 2**63 - 1))


def noise_batch(seed, n, dim, stream_name="x1"):
    """Initial noise ``x1 ~ N(0, I)``; row ``i`` depends only on ``(seed, i)``."""
    out = np.empty((n, dim))
    for i in range(n):
        out[i] = stream(seed, stream_name, i).standard_normal(dim)
    return out
