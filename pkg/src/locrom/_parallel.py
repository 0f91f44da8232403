import os
from concurrent.futures import ThreadPoolExecutor


def worker_count():
    """Worker cap from ``LOCROM_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("LOCROM_THREADS", "1")))
    except ValueError:
        return 1


def pmap(fn, items):
    """Ordered map; threads only when ``LOCROM_THREADS`` > 1."""
    items = list(items)
    n = min(worker_count(), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))
