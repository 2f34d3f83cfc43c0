"""Deterministic thread-pool mapping for per-view work.

Parallelism only splits independent per-view computations; results are
collected by index, so any worker count produces identical output.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

THREADS_ENV_VAR = "NITEX_THREADS"


def resolve_thread_count(explicit: int | None = None) -> int:
    if explicit is not None:
        return max(1, int(explicit))
    env = os.environ.get(THREADS_ENV_VAR)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


def thread_map(fn, items, threads: int):
    """Map fn over items, preserving order; sequential when threads <= 1."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
