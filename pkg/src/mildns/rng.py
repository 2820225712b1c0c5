"""Counter-based random streams keyed by (seed, stream, sample)."""

from __future__ import annotations

import zlib

import numpy as np


def substream_id(name: str) -> int:
    """Stable integer id of a named substream."""
    return zlib.crc32(name.encode("utf-8"))


def stream(seed: int, stream_id: int, sample_index: int = 0) -> np.random.Generator:
    """Independent Philox generator for one (stream, sample) pair.

    The generator depends only on its key, so samples can be drawn in any
    order or on any worker and remain reproducible.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream_id), int(sample_index)))
    return np.random.Generator(np.random.Philox(ss))


def named_stream(seed: int, name: str, sample_index: int = 0) -> np.random.Generator:
    return stream(seed, substream_id(name), sample_index)
