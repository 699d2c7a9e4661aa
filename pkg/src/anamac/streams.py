"""Counter-based random streams.

Every random draw in the package comes from a Philox generator keyed by a
master seed plus a tuple of stream indices (purpose tag, chunk number, ...).
Work is split into chunks of a fixed size that never depends on the number
of workers, so any chunk can be regenerated in isolation and aggregated
results are identical however the chunks are scheduled.
"""

from __future__ import annotations

import zlib

import numpy as np

MASK64 = (1 << 64) - 1


def _tag(purpose: str) -> int:
    return zlib.crc32(purpose.encode("ascii"))


def stream(seed: int, purpose: str = "", *indices: int) -> np.random.Generator:
    """Return an independent generator for ``(seed, purpose, *indices)``."""
    if seed < 0 or seed > MASK64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    entropy = [seed & 0xFFFFFFFF, seed >> 32, _tag(purpose), *[int(i) for i in indices]]
    ss = np.random.SeedSequence(entropy)
    return np.random.Generator(np.random.Philox(ss))


def chunk_bounds(total: int, chunk: int) -> list[tuple[int, int, int]]:
    """Split ``range(total)`` into ``(index, start, stop)`` blocks of size ``chunk``."""
    return [(i, s, min(s + chunk, total)) for i, s in enumerate(range(0, total, chunk))]


def map_chunks(fn, blocks, workers: int = 1):
    """Apply ``fn`` to every block, in block order.

    With ``workers > 1`` the blocks run on a thread pool; results are still
    returned in block order so downstream reductions are unaffected.
    """
    if workers <= 1 or len(blocks) <= 1:
        return [fn(b) for b in blocks]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, blocks))
