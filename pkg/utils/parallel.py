"""
Worker pool sizing and an order-preserving map over independent jobs.
"""

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable

from dotenv import load_dotenv

from utils.constants import ENV_WORKERS


def resolve_workers(requested: int | None = None) -> int:
    """
    Worker count: explicit request, else FLOCK_WORKERS (a .env file is honoured), else 1.
    """
    if requested is not None:
        return max(1, int(requested))
    load_dotenv()
    raw = os.environ.get(ENV_WORKERS, "").strip()
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        logging.warning("Ignoring non-integer %s=%r; using 1 worker.", ENV_WORKERS, raw)
        return 1


def ordered_map(fn: Callable, jobs: Iterable, workers: int = 1) -> list:
    """
    Apply `fn` to every job, in parallel when workers > 1.

    Results come back in submission order so that outputs stay deterministic.
    """
    jobs = list(jobs)
    if workers <= 1 or len(jobs) <= 1:
        return [fn(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(fn, jobs))
