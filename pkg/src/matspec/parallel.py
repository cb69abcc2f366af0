"""Deterministic thread-pool map. MATSPEC_THREADS sets the default width."""
import os
from concurrent.futures import ThreadPoolExecutor


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get("MATSPEC_THREADS", "1")))
    except ValueError:
        return 1


def pmap(fn, items, threads=None):
    """Ordered map; results never depend on the number of workers."""
    items = list(items)
    threads = default_threads() if threads is None else max(1, int(threads))
    if threads == 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=min(threads, len(items))) as ex:
        return list(ex.map(fn, items))


def chunks(n, parts):
    """Split range(n) into at most ``parts`` contiguous slices."""
    parts = max(1, min(parts, n))
    bounds = [round(i * n / parts) for i in range(parts + 1)]
    return [slice(bounds[i], bounds[i + 1]) for i in range(parts)]
