"""Inference latency percentiles."""

from __future__ import annotations

import time

import numpy as np

from .errors import ContractError
from .model import EventModel

WARMUP = 10


def random_samples(n_points, count, seed):
    """Time-ordered random point samples in the unit cube."""
    rng = np.random.default_rng(seed)
    out = rng.random((count, n_points, 3)).astype(np.float32)
    for s in out:
        s[:] = s[np.lexsort((np.arange(n_points), s[:, 2]))]
    return out


def bench_latency(config, iters=200, seed=0, pool=16, model=None):
    """Time eval-mode forward passes (grouping included) on single samples.

    Runs ``WARMUP + iters`` passes over a fixed pool of random samples and
    returns the 5th/50th/95th percentile milliseconds of the last ``iters``.
    """
    if iters < 20:
        raise ContractError("need at least 20 timed iterations")
    model = model or EventModel(config)
    model.eval()
    samples = random_samples(config.n_points, pool, seed)
    times = []
    for i in range(WARMUP + iters):
        x = samples[i % pool]
        t0 = time.perf_counter()
        model(x[None], [model.plan(x)])
        times.append((time.perf_counter() - t0) * 1e3)
    p5, p50, p95 = np.percentile(np.array(times[WARMUP:]), [5, 50, 95])
    return {"p5": float(p5), "p50": float(p50), "p95": float(p95), "iters": iters}
