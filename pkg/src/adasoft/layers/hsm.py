from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .base import OutputLayer, _rng, log_softmax, resolve_dtype, softmax_xent_grad, uniform_init


def sqrt_frequency_classes(counts: Sequence[int], n_classes: int | None = None) -> list[int]:
    """Class boundaries from binning frequency-sorted words by sqrt(count) mass.

    Word i joins the current class until the cumulative share of
    sum(sqrt(count)) passes (c+1)/n_classes.  Returns the cut points
    ``[0, ..., k]`` of the contiguous, non-empty classes.
    """
    counts = np.asarray(counts, dtype=np.float64)
    k = len(counts)
    if n_classes is None:
        n_classes = max(1, round(math.sqrt(k)))
    n_classes = min(n_classes, k)
    roots = np.sqrt(np.maximum(counts, 0.0))
    total = roots.sum()
    if total == 0:
        share = np.arange(1, k + 1) / k
    else:
        share = np.cumsum(roots) / total
    cuts = [0]
    cls = 0
    for i in range(k):
        if share[i] > (cls + 1) / n_classes and cls < n_classes - 1 and i + 1 < k:
            cuts.append(i + 1)
            cls += 1
    cuts.append(k)
    return cuts


class HsmFreq(OutputLayer):
    """Two-level class softmax: p(w|h) = p(class(w)|h) * p(w|class(w), h).

    Classes are contiguous frequency bands; ``class_cuts`` are the
    boundaries ``[0, c_1, ..., k]``.
    """

    kind = "hsm"

    def __init__(self, d: int, class_cuts: Sequence[int], seed=0, dtype=None):
        dtype = resolve_dtype(dtype)
        rng = _rng(seed)
        cuts = [int(c) for c in class_cuts]
        if cuts[0] != 0 or any(b <= a for a, b in zip(cuts, cuts[1:])):
            raise ValueError(f"class cuts must start at 0 and increase strictly: {cuts}")
        self.d, self.k = d, cuts[-1]
        self.cuts = np.array(cuts, dtype=np.int64)
        self.n_classes = len(cuts) - 1
        p = {"class.W": uniform_init(rng, d, (d, self.n_classes), dtype),
             "class.b": np.zeros(self.n_classes, dtype=dtype)}
        for c in range(self.n_classes):
            size = cuts[c + 1] - cuts[c]
            p[f"word.{c}.W"] = uniform_init(rng, d, (d, size), dtype)
            p[f"word.{c}.b"] = np.zeros(size, dtype=dtype)
        self.params = p

    @classmethod
    def from_counts(cls, d: int, counts, n_classes: int | None = None, seed=0, dtype=None):
        return cls(d, sqrt_frequency_classes(counts, n_classes), seed=seed, dtype=dtype)

    def describe(self):
        return {"class_cuts": self.cuts.tolist()}

    def class_of(self, targets):
        return np.searchsorted(self.cuts, targets, side="right") - 1

    def log_distribution(self, hidden):
        self._check(hidden)
        lc = log_softmax(hidden @ self.params["class.W"] + self.params["class.b"])
        out = np.empty((hidden.shape[0], self.k), dtype=lc.dtype)
        for c in range(self.n_classes):
            lo, hi = self.cuts[c], self.cuts[c + 1]
            zw = hidden @ self.params[f"word.{c}.W"] + self.params[f"word.{c}.b"]
            out[:, lo:hi] = lc[:, c, None] + log_softmax(zw)
        return out

    def _loss_and_grads(self, hidden, targets, need_grads):
        B = len(targets)
        scale = 1.0 / B
        cls = self.class_of(targets)
        zc = hidden @ self.params["class.W"] + self.params["class.b"]
        if need_grads:
            logp, dzc = softmax_xent_grad(zc, cls, scale)
            grads = {"class.W": hidden.T @ dzc, "class.b": dzc.sum(axis=0)}
            dh = dzc @ self.params["class.W"].T
        else:
            logp = log_softmax(zc)[np.arange(B), cls]
        for c in range(self.n_classes):
            rows = np.flatnonzero(cls == c)
            W, b = self.params[f"word.{c}.W"], self.params[f"word.{c}.b"]
            if rows.size == 0:
                if need_grads:
                    grads[f"word.{c}.W"] = np.zeros_like(W)
                    grads[f"word.{c}.b"] = np.zeros_like(b)
                continue
            hs = hidden[rows]
            zw = hs @ W + b
            local = targets[rows] - self.cuts[c]
            if not need_grads:
                logp[rows] += log_softmax(zw)[np.arange(rows.size), local]
                continue
            lp, dzw = softmax_xent_grad(zw, local, scale)
            logp[rows] += lp
            grads[f"word.{c}.W"] = hs.T @ dzw
            grads[f"word.{c}.b"] = dzw.sum(axis=0)
            dh[rows] += dzw @ W.T
        if not need_grads:
            return -logp.mean(), logp, None, None
        return -logp.mean(), logp, grads, dh
