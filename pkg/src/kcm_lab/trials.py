"""Fan independent trials over a thread pool.

The kernels release the GIL, so threads give real parallelism without pickling.
Every trial gets its own seed from ``derive_seed(master, label, index)`` and
results come back in trial order, so the output never depends on ``jobs``.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .rng import trial_seeds

JOBS_ENV = "KCM_LAB_JOBS"


def resolve_jobs(jobs=None) -> int:
    if jobs is None:
        jobs = os.environ.get(JOBS_ENV, "1")
    jobs = int(jobs)
    if jobs < 1:
        raise ValueError("jobs must be >= 1")
    return jobs


def run_trials(fn, master_seed: int, label: str, n: int, jobs=None, start: int = 0) -> list:
    """``[fn(seed_i) for i in range(start, start + n)]``, possibly in parallel."""
    seeds = trial_seeds(master_seed, label, n, start)
    jobs = resolve_jobs(jobs)
    if jobs == 1 or n <= 1:
        return [fn(s) for s in seeds]
    # warm up on the calling thread so compilation/cache loading happens once
    first = fn(seeds[0])
    with ThreadPoolExecutor(max_workers=jobs) as ex:
        rest = list(ex.map(fn, seeds[1:], chunksize=max(1, (n - 1) // (8 * jobs))))
    return [first] + rest


def stack_field(results, k, dtype=None) -> np.ndarray:
    return np.asarray([r[k] for r in results], dtype=dtype)
