import os
from concurrent.futures import ThreadPoolExecutor


def max_workers():
    """Worker cap from ``EMBALANCE_THREADS`` (default: CPU count)."""
    env = os.environ.get("EMBALANCE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def ordered_map(fn, items):
    """``list(map(fn, items))``, possibly threaded; results keep input order."""
    items = list(items)
    workers = min(max_workers(), len(items))
    if workers <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
