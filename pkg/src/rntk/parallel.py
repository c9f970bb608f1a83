"""Worker-pool helpers shared by gram assembly and experiment loops."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def worker_count() -> int:
    """Worker cap: min(cpu count, RNTK_THREADS if set). Always >= 1."""
    n = os.cpu_count() or 1
    env = os.environ.get("RNTK_THREADS")
    if env is not None:
        try:
            n = min(n, max(1, int(env)))
        except ValueError:
            raise ValueError(f"RNTK_THREADS must be an integer, got {env!r}")
    return max(1, n)


def thread_map(fn, items, max_workers=None):
    """Map fn over items with the capped pool; results keep item order.

    Callers make work items independent and index-addressed, so scheduling
    never affects results. max_workers tightens (never raises) the cap, for
    memory-bound work.
    """
    items = list(items)
    workers = min(worker_count(), max(1, len(items)))
    if max_workers is not None:
        workers = min(workers, max(1, int(max_workers)))
    if workers == 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
