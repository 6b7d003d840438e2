"""Seed-keyed fan-out of simulator calls.

Each proposal carries its own seed key, so the results depend only on the
proposals and never on how they are split across worker processes.
"""

import atexit
import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np

__all__ = ["SimulationError", "parallel_map_simulations", "shutdown_pools", "available_workers"]

_POOLS = {}


class SimulationError(RuntimeError):
    """A simulator call failed; ``index`` is the proposal position."""

    def __init__(self, index, cause):
        super().__init__("simulation %d failed: %r" % (index, cause))
        self.index = index
        self.cause = cause


def _run_chunk(model, start, proposals):
    out = []
    for k, (params, seed) in enumerate(proposals):
        try:
            out.append(np.asarray(model.simulate(params, seed), dtype=float))
        except Exception as exc:  # surfaced with the proposal index
            raise SimulationError(start + k, exc) from exc
    return out


def _pool(workers):
    pool = _POOLS.get(workers)
    if pool is None:
        pool = ProcessPoolExecutor(max_workers=workers)
        _POOLS[workers] = pool
    return pool


def shutdown_pools():
    for pool in _POOLS.values():
        pool.shutdown(cancel_futures=True)
    _POOLS.clear()


atexit.register(shutdown_pools)


def parallel_map_simulations(model, proposals, workers=1, min_chunk=64):
    """Simulate every ``(params, seed)`` pair and return summaries in order.

    Parameters
    ----------
    model : object with ``simulate(params, seed)``
    proposals : list of (dict, seed key)
    workers : int
        Worker processes; 1 runs in the calling process.
    """
    proposals = list(proposals)
    if not proposals:
        return []
    workers = max(1, int(workers))
    if workers == 1 or len(proposals) < 2 * min_chunk:
        return _run_chunk(model, 0, proposals)
    n_chunks = min(4 * workers, max(1, len(proposals) // min_chunk))
    bounds = np.linspace(0, len(proposals), n_chunks + 1).astype(int)
    pool = _pool(workers)
    futures = [pool.submit(_run_chunk, model, int(a), proposals[a:b])
               for a, b in zip(bounds[:-1], bounds[1:])]
    out = []
    for fut in futures:
        out.extend(fut.result())
    return out


def available_workers():
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count()
