"""Forward+backward timing of output layers on Zipf-distributed targets."""

from __future__ import annotations

import csv
import statistics
import time
from dataclasses import dataclass

import numpy as np

from .corpus import Vocabulary
from .layers import make_layer
from .linalg import pinned_threads
from .partition import Partition

BENCH_HEADER = ["layer", "k", "d", "batch", "fwd_bwd_seconds", "speedup_vs_full"]


def measure_layer_time(kind: str, d: int, vocab: Vocabulary, batch: int, repeats: int = 7, *,
                       partition: Partition | None = None, n_classes: int | None = None,
                       dtype=np.float32, seed: int = 0, threads: int | None = None,
                       warmup: int = 1) -> float:
    """Median seconds of one forward+backward pass on random hidden states.

    Each repeat draws a fresh batch of targets from the vocabulary's unigram
    distribution, so tail clusters are visited as often as in real text.
    """
    layer = make_layer(kind, d, len(vocab), partition=partition, counts=vocab.counts,
                       n_classes=n_classes, seed=seed, dtype=dtype)
    rng = np.random.default_rng(seed + 1)
    hidden = rng.uniform(0.0, 1.0, size=(batch, d)).astype(dtype)
    probs = vocab.probs
    target_sets = [rng.choice(len(vocab), size=batch, p=probs) for _ in range(warmup + repeats)]
    times = []
    with pinned_threads(threads):
        for i, targets in enumerate(target_sets):
            t0 = time.perf_counter()
            layer.loss_and_grads(hidden, targets)
            dt = time.perf_counter() - t0
            if i >= warmup:
                times.append(dt)
    return statistics.median(times)


@dataclass
class BenchRow:
    layer: str
    k: int
    d: int
    batch: int
    seconds: float
    speedup: float


def run_bench(kinds, d: int, vocab: Vocabulary, batch: int, partition: Partition | None,
              repeats: int = 7, dtype=np.float32, threads: int | None = None, seed: int = 0):
    """Time each layer kind; speedups are relative to the full softmax."""
    kinds = ["full"] + [k for k in kinds if k != "full"]
    secs = {kind: measure_layer_time(kind, d, vocab, batch, repeats, partition=partition,
                                     dtype=dtype, seed=seed, threads=threads)
            for kind in kinds}
    return [BenchRow(kind, len(vocab), d, batch, secs[kind], secs["full"] / secs[kind])
            for kind in kinds]


def write_bench(rows, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(BENCH_HEADER)
        for r in rows:
            w.writerow([r.layer, r.k, r.d, r.batch, f"{r.seconds:.6e}", f"{r.speedup:.4f}"])
