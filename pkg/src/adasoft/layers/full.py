from __future__ import annotations

import numpy as np

from .base import OutputLayer, _rng, log_softmax, resolve_dtype, softmax_xent_grad, uniform_init


class FullSoftmax(OutputLayer):
    """Plain softmax over all k words: logits = hidden @ W + b."""

    kind = "full"

    def __init__(self, d: int, k: int, seed=0, dtype=None, bias: bool = True):
        dtype = resolve_dtype(dtype)
        rng = _rng(seed)
        self.d, self.k = d, k
        self.params = {"W": uniform_init(rng, d, (d, k), dtype)}
        if bias:
            self.params["b"] = np.zeros(k, dtype=dtype)

    def describe(self):
        return {"bias": "b" in self.params}

    def logits(self, hidden):
        z = hidden @ self.params["W"]
        if "b" in self.params:
            z += self.params["b"]
        return z

    def log_distribution(self, hidden):
        self._check(hidden)
        return log_softmax(self.logits(hidden))

    def _loss_and_grads(self, hidden, targets, need_grads):
        B = len(targets)
        z = self.logits(hidden)
        if not need_grads:
            logp = log_softmax(z)[np.arange(B), targets]
            return -logp.mean(), logp, None, None
        logp, dz = softmax_xent_grad(z, targets, 1.0 / B)
        grads = {"W": hidden.T @ dz}
        if "b" in self.params:
            grads["b"] = dz.sum(axis=0)
        return -logp.mean(), logp, grads, dz @ self.params["W"].T
