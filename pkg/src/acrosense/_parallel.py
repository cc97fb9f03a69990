import os
from concurrent.futures import ThreadPoolExecutor

THREADS_ENV = "ACROSENSE_THREADS"


def max_threads():
    value = os.environ.get(THREADS_ENV)
    if value:
        try:
            return max(1, int(value))
        except ValueError:
            pass
    return os.cpu_count() or 1


def parallel_map(fn, items, threads=None):
    """Ordered map over ``items``; results come back in input order.

    numpy releases the GIL inside BLAS/LAPACK so threads give real speedups
    for the linear algebra heavy tasks this is used for.
    """
    items = list(items)
    n = max_threads() if threads is None else max(1, int(threads))
    if n == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(n, len(items))) as pool:
        return list(pool.map(fn, items))
