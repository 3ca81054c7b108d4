"""Worker-pool helper honoring the LWOT_THREADS environment variable.

LWOT_THREADS=0 (or unset) means auto; 1 disables threading. Results are
always gathered in input order so callers stay deterministic.
"""

import os
from concurrent.futures import ThreadPoolExecutor


def thread_count() -> int:
    raw = os.environ.get("LWOT_THREADS", "0").strip()
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n <= 0:
        return min(8, os.cpu_count() or 1)
    return n


def parallel_map(fn, items):
    items = list(items)
    n = thread_count()
    if n <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
