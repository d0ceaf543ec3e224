"""Order-preserving map over replications."""
from __future__ import annotations

import multiprocessing as mp
from concurrent.futures import ProcessPoolExecutor


def pmap(fn, items, threads: int = 1, chunksize: int = 1) -> list:
    """``list(map(fn, items))``, optionally across worker processes.

    Results come back in input order, and each item must carry its own seed,
    so the output does not depend on ``threads``.
    """
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    ctx = mp.get_context("fork")
    with ProcessPoolExecutor(max_workers=threads, mp_context=ctx) as ex:
        return list(ex.map(fn, items, chunksize=chunksize))
