"""Thread-count resolution and a pull-based dynamic scheduler."""

import itertools
import os
import threading
from concurrent.futures import ThreadPoolExecutor

ENV_THREADS = "APRKIT_THREADS"


def resolve_threads(threads=None) -> int:
    """Explicit value, else ``$APRKIT_THREADS``, else the hardware thread count."""
    if threads is None:
        env = os.environ.get(ENV_THREADS)
        threads = int(env) if env else (os.cpu_count() or 1)
    threads = int(threads)
    if threads < 1:
        raise ValueError(f"threads must be >= 1, got {threads}")
    return threads


def run_dynamic(n_items, work, threads=None):
    """Run ``work(i)`` for ``i in range(n_items)`` on a pool of workers.

    Workers pull the next item from one shared counter, so long and short work
    units balance at runtime.  ``work`` must write disjoint outputs per item.
    """
    threads = min(resolve_threads(threads), max(n_items, 1))
    if threads == 1:
        for i in range(n_items):
            work(i)
        return
    counter = itertools.count()
    lock = threading.Lock()

    def worker():
        while True:
            with lock:
                i = next(counter)
            if i >= n_items:
                return
            work(i)

    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(worker) for _ in range(threads)]
        for f in futures:
            f.result()
