"""Counter-based random streams keyed by (seed, purpose, index).

Every consumer derives its generator from a key tuple instead of sharing a
global stream, so results do not depend on how work is chunked or threaded.
"""
from __future__ import annotations

import zlib

import numpy as np

CHUNK = 4096


def stream(seed: int, tag: str, index: int = 0) -> np.random.Generator:
    key = [int(seed) & 0xFFFFFFFFFFFFFFFF, zlib.crc32(tag.encode()), int(index)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))


def standard_normal(seed: int, tag: str, shape: tuple[int, int], start: int = 0) -> np.ndarray:
    """Rows ``start .. start+shape[0]`` of an indexable white-noise table.

    Row ``i`` always comes from chunk ``i // CHUNK`` of the keyed stream, so
    any slicing of the table reproduces the same numbers.
    """
    n, width = shape
    out = np.empty((n, width))
    row = start
    while row < start + n:
        chunk, offset = divmod(row, CHUNK)
        take = min(CHUNK - offset, start + n - row)
        block = stream(seed, tag, chunk).standard_normal((offset + take, width))
        out[row - start:row - start + take] = block[offset:]
        row += take
    return out
