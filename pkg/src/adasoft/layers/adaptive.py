from __future__ import annotations

import numpy as np

from ..partition import Partition
from .base import OutputLayer, _rng, log_softmax, resolve_dtype, softmax_xent_grad, uniform_init


class AdaptiveSoftmax(OutputLayer):
    """Two-level softmax: a head over the short-list plus one logit per tail
    cluster, and per-cluster softmaxes over a projected hidden state.

    Head columns 0..k_h-1 score the short-list words in frequency order and
    columns k_h..k_h+J-1 score the clusters.  Cluster i (0-based here) owns
    words ``ranges[i]`` and maps the hidden state through ``proj.i``
    (d x d_i, no bias) before its own output matrix ``out.i.W`` (d_i x k_i)
    and bias ``out.i.b``.
    """

    kind = "adaptive"

    def __init__(self, d: int, partition: Partition, seed=0, dtype=None):
        dtype = resolve_dtype(dtype)
        rng = _rng(seed)
        J = partition.J
        dims = partition.cluster_dims or (d,) * J
        if len(dims) != J:
            raise ValueError("partition.cluster_dims must have one entry per tail cluster")
        self.d, self.k = d, partition.k
        self.partition = partition.with_dims(dims) if not partition.cluster_dims else partition
        self.k_h, self.J = partition.k_h, J
        self.ranges = partition.cluster_ranges
        self._cuts = np.array(partition.boundaries, dtype=np.int64)
        p = {"head.W": uniform_init(rng, d, (d, self.k_h + J), dtype),
             "head.b": np.zeros(self.k_h + J, dtype=dtype)}
        for i, ((lo, hi), di) in enumerate(zip(self.ranges, dims)):
            p[f"proj.{i}"] = uniform_init(rng, d, (d, di), dtype)
            p[f"out.{i}.W"] = uniform_init(rng, di, (di, hi - lo), dtype)
            p[f"out.{i}.b"] = np.zeros(hi - lo, dtype=dtype)
        self.params = p

    def describe(self):
        return {"k_h": self.k_h, "tail_sizes": list(self.partition.tail_sizes),
                "cluster_dims": list(self.partition.cluster_dims)}

    def cluster_of(self, targets: np.ndarray) -> np.ndarray:
        """-1 for head words, else the 0-based tail cluster index."""
        return np.searchsorted(self._cuts, targets, side="right") - 1

    def head_logits(self, hidden):
        return hidden @ self.params["head.W"] + self.params["head.b"]

    def cluster_logits(self, hidden, i):
        z = hidden @ self.params[f"proj.{i}"]
        return z, z @ self.params[f"out.{i}.W"] + self.params[f"out.{i}.b"]

    def log_distribution(self, hidden):
        self._check(hidden)
        head = log_softmax(self.head_logits(hidden))
        out = np.empty((hidden.shape[0], self.k), dtype=head.dtype)
        out[:, :self.k_h] = head[:, :self.k_h]
        for i, (lo, hi) in enumerate(self.ranges):
            _, zc = self.cluster_logits(hidden, i)
            out[:, lo:hi] = head[:, self.k_h + i, None] + log_softmax(zc)
        return out

    def _loss_and_grads(self, hidden, targets, need_grads):
        B = len(targets)
        scale = 1.0 / B
        cid = self.cluster_of(targets)
        head_target = np.where(cid < 0, targets, self.k_h + cid)
        zh = self.head_logits(hidden)
        if need_grads:
            logp, dzh = softmax_xent_grad(zh, head_target, scale)
            grads = {"head.W": hidden.T @ dzh, "head.b": dzh.sum(axis=0)}
            dh = dzh @ self.params["head.W"].T
        else:
            logp = log_softmax(zh)[np.arange(B), head_target]
        for i, (lo, hi) in enumerate(self.ranges):
            rows = np.flatnonzero(cid == i)
            if need_grads and rows.size == 0:
                for name in (f"proj.{i}", f"out.{i}.W", f"out.{i}.b"):
                    grads[name] = np.zeros_like(self.params[name])
                continue
            if rows.size == 0:
                continue
            hs = hidden[rows]
            z, zc = self.cluster_logits(hs, i)
            local = targets[rows] - lo
            if not need_grads:
                logp[rows] += log_softmax(zc)[np.arange(rows.size), local]
                continue
            lp, dzc = softmax_xent_grad(zc, local, scale)
            logp[rows] += lp
            W = self.params[f"out.{i}.W"]
            P = self.params[f"proj.{i}"]
            grads[f"out.{i}.W"] = z.T @ dzc
            grads[f"out.{i}.b"] = dzc.sum(axis=0)
            dz = dzc @ W.T
            grads[f"proj.{i}"] = hs.T @ dz
            dh[rows] += dz @ P.T
        if not need_grads:
            return -logp.mean(), logp, None, None
        return -logp.mean(), logp, grads, dh
