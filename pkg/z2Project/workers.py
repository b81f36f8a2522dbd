"""Thread-pool runner shared by sweeps, ED grids and noisy trajectories."""
import logging
from concurrent.futures import ThreadPoolExecutor, as_completed

from z2Project import settings

logger = logging.getLogger(__name__)


def map_ordered(fn, items, max_workers=None):
    """Run fn over items concurrently; results come back in input order."""
    items = list(items)
    workers = max(1, min(max_workers or settings.MAX_THREADS, len(items) or 1))
    if workers == 1:
        return [fn(item) for item in items]

    results = [None] * len(items)
    with ThreadPoolExecutor(max_workers=workers) as executor:
        futures = {executor.submit(fn, item): index for index, item in enumerate(items)}
        for future in as_completed(futures):
            results[futures[future]] = future.result()
    return results
