from __future__ import annotations

from typing import Sequence

import numpy as np

from ..partition import Partition
from .base import OutputLayer, _rng, log_softmax, resolve_dtype, uniform_init

VARIANTS = ("disjoint", "projected")


class DSoftmax(OutputLayer):
    """Differentiated softmax: one flat softmax over all k words, with each
    frequency band scored from a band-specific view of the hidden state.

    Bands are the head followed by the tail clusters of a partition.

    * ``disjoint``: band s reads its own slice of the hidden vector.  Tail
      band i gets width ``cluster_dims[i]``, the head gets whatever is left
      of d; slices are laid out head first, then tails in frequency order.
    * ``projected``: the head reads the whole hidden vector, tail band i
      reads ``hidden @ proj.i`` with ``proj.i`` of shape d x d_i.
    """

    def __init__(self, d: int, band_sizes: Sequence[int], band_dims: Sequence[int],
                 variant: str = "projected", seed=0, dtype=None):
        if variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")
        dtype = resolve_dtype(dtype)
        rng = _rng(seed)
        sizes = [int(s) for s in band_sizes]
        tail_dims = [int(x) for x in band_dims]
        if len(tail_dims) != len(sizes) - 1:
            raise ValueError("need one dim per tail band")
        self.variant = variant
        self.kind = "dsoftmax" if variant == "disjoint" else "dsoftmax-star"
        self.d, self.k = d, sum(sizes)
        self.sizes = sizes
        self.band_dims = tail_dims
        self.cuts = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        if variant == "disjoint":
            head_width = d - sum(tail_dims)
            if head_width < 1:
                raise ValueError(f"tail widths {tail_dims} leave no room for the head in d={d}")
            widths = [head_width] + tail_dims
            offs = np.concatenate([[0], np.cumsum(widths)]).astype(int)
            self.slices = [slice(offs[s], offs[s + 1]) for s in range(len(sizes))]
            inputs = widths
        else:
            self.slices = None
            inputs = [d] + tail_dims
        p = {}
        for s, (size, width) in enumerate(zip(sizes, inputs)):
            if variant == "projected" and s > 0:
                p[f"proj.{s}"] = uniform_init(rng, d, (d, width), dtype)
            p[f"band.{s}.W"] = uniform_init(rng, width, (width, size), dtype)
            p[f"band.{s}.b"] = np.zeros(size, dtype=dtype)
        self.params = p

    @classmethod
    def from_partition(cls, d: int, partition: Partition, variant: str = "projected",
                       seed=0, dtype=None):
        dims = partition.cluster_dims or (d,) * partition.J
        return cls(d, (partition.k_h,) + partition.tail_sizes, dims, variant, seed, dtype)

    def describe(self):
        return {"band_sizes": self.sizes, "band_dims": self.band_dims, "variant": self.variant}

    def _views(self, hidden):
        views = []
        for s in range(len(self.sizes)):
            if self.variant == "disjoint":
                views.append(hidden[:, self.slices[s]])
            elif s == 0:
                views.append(hidden)
            else:
                views.append(hidden @ self.params[f"proj.{s}"])
        return views

    def logits(self, hidden):
        views = self._views(hidden)
        z = np.concatenate([v @ self.params[f"band.{s}.W"] + self.params[f"band.{s}.b"]
                            for s, v in enumerate(views)], axis=1)
        return views, z

    def log_distribution(self, hidden):
        self._check(hidden)
        return log_softmax(self.logits(hidden)[1])

    def _loss_and_grads(self, hidden, targets, need_grads):
        B = len(targets)
        views, z = self.logits(hidden)
        lsm = log_softmax(z)
        rows = np.arange(B)
        logp = lsm[rows, targets]
        if not need_grads:
            return -logp.mean(), logp, None, None
        dz = np.exp(lsm)
        dz[rows, targets] -= 1.0
        dz /= B
        grads = {}
        dh = np.zeros_like(hidden)
        for s, v in enumerate(views):
            lo, hi = self.cuts[s], self.cuts[s + 1]
            dzs = dz[:, lo:hi]
            W = self.params[f"band.{s}.W"]
            grads[f"band.{s}.W"] = v.T @ dzs
            grads[f"band.{s}.b"] = dzs.sum(axis=0)
            dv = dzs @ W.T
            if self.variant == "disjoint":
                dh[:, self.slices[s]] += dv
            elif s == 0:
                dh += dv
            else:
                P = self.params[f"proj.{s}"]
                grads[f"proj.{s}"] = hidden.T @ dv
                dh += dv @ P.T
        return -logp.mean(), logp, grads, dh
