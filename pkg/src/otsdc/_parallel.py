"""Chunked thread-pool map with output independent of worker count."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

# Fixed chunk size: the split of work never depends on the thread count.
CHUNK_ROWS = 4096


def resolve_threads(threads: int | None) -> int:
    if not threads:
        return os.cpu_count() or 1
    if threads < 0:
        raise ValueError("threads must be >= 0")
    return int(threads)


def chunked_rows(func, n_rows: int, threads: int | None = 1, chunk: int = CHUNK_ROWS):
    """Call ``func(start, stop)`` over fixed row chunks, possibly in threads.

    ``func`` must write its results to disjoint outputs; chunks are pure
    elementwise work so the result is identical for any thread count.
    """
    spans = [(s, min(s + chunk, n_rows)) for s in range(0, n_rows, chunk)]
    workers = resolve_threads(threads)
    if workers == 1 or len(spans) <= 1:
        for s, e in spans:
            func(s, e)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        list(pool.map(lambda se: func(*se), spans))
