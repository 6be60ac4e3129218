"""Bounded thread pool controlled by ``EXITDIM_THREADS``."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def n_threads() -> int:
    raw = os.environ.get("EXITDIM_THREADS", "")
    try:
        n = int(raw)
    except ValueError:
        n = os.cpu_count() or 1
    return max(1, n)


def map_blocks(fn, items) -> list:
    """``[fn(x) for x in items]``, possibly threaded; order is preserved."""
    items = list(items)
    k = min(n_threads(), len(items))
    if k <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=k) as pool:
        return list(pool.map(fn, items))
