"""Figures written next to the CSV outputs (Agg backend, no display)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .costmodel import CostModelParams, g  # noqa: E402


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_calibration(samples, params: CostModelParams, path):
    """Measured GEMM time against k with the fitted hinge."""
    ks = np.array([s.k for s in samples])
    ts = np.array([s.seconds for s in samples])
    grid = np.geomspace(ks.min(), ks.max(), 200)
    fig, ax = plt.subplots(figsize=(5.5, 4))
    ax.loglog(ks, ts * 1e3, "o", label="measured")
    ax.loglog(grid, [g(params, k, params.B0) * 1e3 for k in grid], "-", label="hinge model")
    ax.axvline(params.k0, color="grey", ls=":", lw=1)
    ax.set_xlabel("k (output columns)")
    ax.set_ylabel("time (ms)")
    ax.set_title(f"B={params.B0:g}  k0={params.k0:g}")
    ax.legend()
    return _finish(fig, path)


def plot_two_cluster(rows, half_kh: int, full_cost: float, path):
    kh = np.array([r[0] for r in rows])
    cost = np.array([r[1] for r in rows])
    fig, ax = plt.subplots(figsize=(5.5, 4))
    ax.semilogx(kh, cost * 1e3, label="model")
    if rows and len(rows[0]) > 2:
        ax.semilogx(kh, np.array([r[2] for r in rows]) * 1e3, ".", label="measured")
    ax.axhline(full_cost * 1e3, color="k", lw=1, label="full softmax")
    ax.axvline(half_kh, color="r", ls=":", label="p_h = 0.5")
    ax.set_xlabel("head size k_h")
    ax.set_ylabel("time (ms)")
    ax.legend()
    return _finish(fig, path)


def plot_cluster_sweep(rows, path):
    J = [r[0] for r in rows]
    cost = np.array([r[1] for r in rows])
    fig, ax = plt.subplots(figsize=(5.5, 4))
    ax.plot(J, cost * 1e3, "o-")
    ax.set_xlabel("number of tail clusters J")
    ax.set_ylabel("optimal modelled time (ms)")
    return _finish(fig, path)


def plot_bench(rows, path):
    fig, ax = plt.subplots(figsize=(5.5, 4))
    ax.bar([r.layer for r in rows], [r.seconds * 1e3 for r in rows])
    ax.set_ylabel("forward+backward (ms)")
    ax.set_title(f"k={rows[0].k} d={rows[0].d} B={rows[0].batch}")
    return _finish(fig, path)


def plot_training(logs, path):
    fig, ax = plt.subplots(figsize=(5.5, 4))
    ax.plot([e.seconds for e in logs], [e.ppl_valid for e in logs], "o-")
    ax.set_xlabel("training time (s)")
    ax.set_ylabel("validation perplexity")
    return _finish(fig, path)
