"""Deterministic RNG derivation.

Every random decision in the library is made by a generator derived from
(seed, stream tag, *indices) through numpy's SeedSequence, so parallel and
serial execution orders produce identical corpora, batches and augmentations,
and a run can be reproduced from nothing but its config.
"""

import zlib

import numpy as np

# Stream tags keep independent consumers of the same seed decorrelated.
STREAM_DATA = 1
STREAM_SAMPLER = 2
STREAM_AUGMENT = 3
STREAM_MODEL_INIT = 4
STREAM_HEAD_INIT = 5
STREAM_TRAIN = 6
STREAM_EVAL = 7


def derive_rng(seed, *tags):
    """Generator seeded from (seed, *tags); tags must be ints."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((int(seed), *map(int, tags)))))


def stable_hash(text):
    """Platform-stable 32-bit hash of a string (for ids used as seed tags)."""
    return zlib.crc32(text.encode("utf-8"))
