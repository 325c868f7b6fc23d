"""Inference latency and memory measurement."""

from __future__ import annotations

import csv
import time
import tracemalloc
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .model import ModelConfig, frozen, reconstruct

BENCH_FIELDS = ("n_runs", "median_ms", "mean_ms", "min_ms", "max_ms", "peak_memory_mb")


@dataclass
class BenchStats:
    n_runs: int
    median_ms: float
    mean_ms: float
    min_ms: float
    max_ms: float
    peak_memory_mb: float

    def write_csv(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(BENCH_FIELDS)
            w.writerow([asdict(self)[k] for k in BENCH_FIELDS])


def bench(weights: dict, cfg: ModelConfig, x0: np.ndarray, y: np.ndarray, op,
          n_warmup: int = 3, n_runs: int = 20) -> BenchStats:
    """Per-sample wall-clock latency of :func:`reconstruct`, run serially.

    Memory is the peak of Python-tracked allocations (numpy buffers included)
    during one extra inference call, measured separately so tracing does not
    slow the timed runs.
    """
    if n_runs < 1:
        raise ValueError(f"n_runs must be >= 1, got {n_runs}")
    w = frozen(weights)
    for _ in range(max(0, n_warmup)):
        reconstruct(x0, y, op, w, cfg)
    times = []
    for _ in range(n_runs):
        t0 = time.perf_counter()
        reconstruct(x0, y, op, w, cfg)
        times.append((time.perf_counter() - t0) * 1e3)
    tracemalloc.start()
    try:
        tracemalloc.reset_peak()
        base = tracemalloc.get_traced_memory()[0]
        reconstruct(x0, y, op, w, cfg)
        peak = tracemalloc.get_traced_memory()[1] - base
    finally:
        tracemalloc.stop()
    t = np.asarray(times)
    return BenchStats(n_runs, float(np.median(t)), float(np.mean(t)), float(t.min()),
                      float(t.max()), peak / 2 ** 20)
