from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..linalg import get_dtype


class LayerInputError(ValueError):
    pass


def log_softmax(z: np.ndarray) -> np.ndarray:
    """Row-wise log-softmax with max subtraction."""
    m = z.max(axis=1, keepdims=True)
    shifted = z - m
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax_xent_grad(z: np.ndarray, targets: np.ndarray, scale: float):
    """Log-probabilities of ``targets`` and d(sum of -logp * scale)/dz."""
    lsm = log_softmax(z)
    rows = np.arange(len(targets))
    logp = lsm[rows, targets]
    dz = np.exp(lsm)
    dz[rows, targets] -= 1.0
    dz *= scale
    return logp, dz


def uniform_init(rng: np.random.Generator, fan_in: int, shape, dtype) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


@dataclass
class LogProbBatch:
    target: np.ndarray
    full: np.ndarray | None = None


class OutputLayer:
    """Common surface of every output layer.

    ``params`` maps names to arrays; gradients come back in a dict with the
    same keys.  Losses are the mean negative log-likelihood over the batch.
    """

    kind = "base"
    params: dict[str, np.ndarray]
    d: int
    k: int

    # -- to implement ---------------------------------------------------
    def _loss_and_grads(self, hidden, targets, need_grads: bool):
        raise NotImplementedError

    def log_distribution(self, hidden: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def describe(self) -> dict:
        return {}

    # -- shared ---------------------------------------------------------
    @property
    def dtype(self):
        return next(iter(self.params.values())).dtype

    def _check(self, hidden, targets=None):
        if hidden.ndim != 2 or hidden.shape[1] != self.d:
            raise LayerInputError(f"hidden must have shape (B, {self.d}), got {hidden.shape}")
        if not np.all(np.isfinite(hidden)):
            raise LayerInputError("hidden contains non-finite values")
        if targets is not None:
            targets = np.asarray(targets, dtype=np.int64)
            if targets.shape != (hidden.shape[0],):
                raise LayerInputError("targets must be a vector with one entry per hidden row")
            if targets.size and (targets.min() < 0 or targets.max() >= self.k):
                raise LayerInputError(f"targets must lie in [0, {self.k})")
        return targets

    def forward(self, hidden, targets, full: bool = False):
        """Mean loss and per-example target log-probabilities."""
        targets = self._check(hidden, targets)
        loss, logp, _, _ = self._loss_and_grads(hidden, targets, need_grads=False)
        return loss, LogProbBatch(logp, self.log_distribution(hidden) if full else None)

    def loss_and_grads(self, hidden, targets):
        """Loss, parameter gradients and hidden gradient in one pass."""
        targets = self._check(hidden, targets)
        loss, _, grads, dh = self._loss_and_grads(hidden, targets, need_grads=True)
        return loss, grads, dh

    def backward(self, hidden, targets):
        _, grads, dh = self.loss_and_grads(hidden, targets)
        return grads, dh

    def log_prob(self, hidden, targets) -> np.ndarray:
        return self.forward(hidden, targets)[1].target

    def zero_grads(self) -> dict[str, np.ndarray]:
        return {name: np.zeros_like(p) for name, p in self.params.items()}


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def resolve_dtype(dtype):
    return np.dtype(dtype or get_dtype()).type
