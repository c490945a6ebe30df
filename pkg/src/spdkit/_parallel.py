"""Deterministic chunked dispatch for per-sample work.

Work over N samples is cut into fixed-size chunks whose boundaries do not
depend on the worker count; chunk results are combined in ascending chunk
order. Raising SPDKIT_THREADS therefore changes who computes a chunk but never
the bits of the result.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

CHUNK = 64


def worker_count() -> int:
    """Worker cap from the SPDKIT_THREADS environment variable (default 1)."""
    raw = os.environ.get("SPDKIT_THREADS", "")
    try:
        n = int(raw)
    except ValueError:
        return 1
    return max(1, n)


def chunk_slices(n_items: int, chunk: int = CHUNK) -> list[slice]:
    return [slice(i, min(i + chunk, n_items)) for i in range(0, n_items, chunk)]


def map_chunks(fn, n_items: int, chunk: int = CHUNK) -> list:
    """Apply fn to each index slice, results in slice order."""
    slices = chunk_slices(n_items, chunk)
    workers = worker_count()
    if workers <= 1 or len(slices) <= 1:
        return [fn(s) for s in slices]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, slices))
