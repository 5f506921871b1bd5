"""Small neural language models that drive any output layer.

``FeedforwardLM`` computes h_t = sigma(A [P w_{t-N}; ...; P w_{t-1}]);
``ElmanLM`` computes h_t = sigma(A P w_{t-1} + R h_{t-1}) and is trained
with truncated back-propagation through time.  Both hand their hidden
states to an ``OutputLayer``.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .layers import OutputLayer
from .layers.base import _rng, uniform_init
from .linalg import get_dtype

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


def _sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


ACTIVATIONS = {
    "sigmoid": (_sigmoid, lambda h: h * (1.0 - h)),
    "tanh": (np.tanh, lambda h: 1.0 - h * h),
}


def _activation(name):
    try:
        return ACTIVATIONS[name]
    except KeyError:
        raise ValueError(f"unknown nonlinearity {name!r}; expected one of {sorted(ACTIVATIONS)}") from None


class _LanguageModel:
    output: OutputLayer
    params: dict[str, np.ndarray]
    pad_index: int

    def all_params(self) -> dict[str, np.ndarray]:
        merged = dict(self.params)
        merged.update({f"out/{k}": v for k, v in self.output.params.items()})
        return merged

    def _merge(self, grads, out_grads):
        grads.update({f"out/{k}": v for k, v in out_grads.items()})
        return grads


class FeedforwardLM(_LanguageModel):
    model_type = "ff"

    def __init__(self, k: int, output: OutputLayer, window: int = 5, emb_dim: int = 64,
                 sigma: str = "sigmoid", seed=0, dtype=None, pad_index: int = 0):
        if window < 1:
            raise ValueError("window must be >= 1")
        dtype = np.dtype(dtype or get_dtype()).type
        rng = _rng(seed)
        self.k, self.N, self.emb_dim, self.d = k, window, emb_dim, output.d
        self.sigma = sigma
        self._act, self._dact = _activation(sigma)
        self.output = output
        self.pad_index = pad_index
        self.params = {
            "P": uniform_init(rng, emb_dim, (k, emb_dim), dtype),
            "A": uniform_init(rng, window * emb_dim, (window * emb_dim, self.d), dtype),
        }

    def config(self) -> dict:
        return {"type": "ff", "k": self.k, "window": self.N, "emb_dim": self.emb_dim,
                "d": self.d, "sigma": self.sigma, "pad_index": self.pad_index}

    def contexts(self, stream: np.ndarray, positions: np.ndarray) -> np.ndarray:
        """Indices of the N words preceding each position (oldest first, padded)."""
        offs = np.arange(-self.N, 0)
        idx = positions[:, None] + offs[None, :]
        ctx = np.where(idx >= 0, stream[np.maximum(idx, 0)], self.pad_index)
        return ctx

    def hidden(self, contexts: np.ndarray) -> np.ndarray:
        x = self.params["P"][contexts].reshape(len(contexts), -1)
        return self._act(x @ self.params["A"])

    def loss_and_grads(self, contexts, targets):
        B = len(contexts)
        P, A = self.params["P"], self.params["A"]
        x = P[contexts].reshape(B, -1)
        h = self._act(x @ A)
        loss, out_grads, dh = self.output.loss_and_grads(h, targets)
        dpre = dh * self._dact(h)
        gA = x.T @ dpre
        dx = (dpre @ A.T).reshape(B, self.N, self.emb_dim)
        gP = np.zeros_like(P)
        np.add.at(gP, contexts, dx)
        return loss, self._merge({"P": gP, "A": gA}, out_grads)

    def loss(self, contexts, targets) -> float:
        return float(self.output.forward(self.hidden(contexts), targets)[0])

    def stream_hidden(self, stream: np.ndarray, chunk: int = 4096):
        """Hidden states predicting tokens 1..T-1, in chunks: yields (h, targets)."""
        for lo in range(1, len(stream), chunk):
            pos = np.arange(lo, min(lo + chunk, len(stream)))
            yield self.hidden(self.contexts(stream, pos)), stream[pos]


class ElmanLM(_LanguageModel):
    model_type = "elman"

    def __init__(self, k: int, output: OutputLayer, emb_dim: int = 64, sigma: str = "sigmoid",
                 seed=0, dtype=None, pad_index: int = 0):
        dtype = np.dtype(dtype or get_dtype()).type
        rng = _rng(seed)
        self.k, self.emb_dim, self.d = k, emb_dim, output.d
        self.sigma = sigma
        self._act, self._dact = _activation(sigma)
        self.output = output
        self.pad_index = pad_index
        self.params = {
            "P": uniform_init(rng, emb_dim, (k, emb_dim), dtype),
            "A": uniform_init(rng, emb_dim, (emb_dim, self.d), dtype),
            "R": uniform_init(rng, self.d, (self.d, self.d), dtype),
        }

    def config(self) -> dict:
        return {"type": "elman", "k": self.k, "emb_dim": self.emb_dim, "d": self.d,
                "sigma": self.sigma, "pad_index": self.pad_index}

    def initial_state(self, batch: int) -> np.ndarray:
        return np.zeros((batch, self.d), dtype=self.params["A"].dtype)

    def run(self, inputs: np.ndarray, h0: np.ndarray):
        """Hidden states for inputs of shape (B, T); returns array (T, B, d)."""
        P, A, R = self.params["P"], self.params["A"], self.params["R"]
        T = inputs.shape[1]
        hs = np.empty((T,) + h0.shape, dtype=h0.dtype)
        h = h0
        for t in range(T):
            h = self._act(P[inputs[:, t]] @ A + h @ R)
            hs[t] = h
        return hs

    def loss_and_grads(self, inputs, targets, h0=None):
        """Truncated BPTT over one slice; gradients stop at ``h0``.

        Returns (loss, grads, last hidden state).
        """
        B, T = inputs.shape
        if h0 is None:
            h0 = self.initial_state(B)
        P, A, R = self.params["P"], self.params["A"], self.params["R"]
        hs = self.run(inputs, h0)
        flat_h = hs.reshape(T * B, self.d)
        flat_y = targets.T.reshape(-1)
        loss, out_grads, dflat = self.output.loss_and_grads(flat_h, flat_y)
        dhs = dflat.reshape(T, B, self.d)
        gP, gA, gR = np.zeros_like(P), np.zeros_like(A), np.zeros_like(R)
        carry = np.zeros_like(h0)
        for t in range(T - 1, -1, -1):
            dpre = (dhs[t] + carry) * self._dact(hs[t])
            prev = hs[t - 1] if t > 0 else h0
            x = P[inputs[:, t]]
            gA += x.T @ dpre
            gR += prev.T @ dpre
            np.add.at(gP, inputs[:, t], dpre @ A.T)
            carry = dpre @ R.T
        return loss, self._merge({"P": gP, "A": gA, "R": gR}, out_grads), hs[-1]

    def loss(self, inputs, targets, h0=None) -> float:
        B, T = inputs.shape
        hs = self.run(inputs, self.initial_state(B) if h0 is None else h0)
        return float(self.output.forward(hs.reshape(T * B, self.d), targets.T.reshape(-1))[0])

    def stream_hidden(self, stream: np.ndarray, chunk: int = 4096):
        h = self.initial_state(1)
        for lo in range(1, len(stream), chunk):
            hi = min(lo + chunk, len(stream))
            hs = self.run(stream[None, lo - 1:hi - 1], h)
            h = hs[-1]
            yield hs[:, 0, :], stream[lo:hi]


# ---------------------------------------------------------------------------
# optimisation

def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Rescale all gradients in place so their global norm is <= max_norm.

    Returns the norm before clipping.
    """
    norm = math.sqrt(math.fsum(float(np.vdot(g, g)) for g in grads.values()))
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


@dataclass
class AdagradState:
    accumulators: dict[str, np.ndarray] = field(default_factory=dict)


def adagrad_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdagradState,
                 step: float = 0.1, eps: float = 1e-10, weight_decay: float = 0.0) -> None:
    """acc += g^2; theta -= step * g / sqrt(acc + eps), in place."""
    for name, g in grads.items():
        p = params[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient for {name} has shape {g.shape}, parameter {p.shape}")
        if weight_decay:
            g = g + weight_decay * p
        acc = state.accumulators.get(name)
        if acc is None:
            acc = state.accumulators[name] = np.zeros_like(p)
        acc += g * g
        p -= step * g / np.sqrt(acc + eps)


@dataclass
class TrainConfig:
    step: float = 0.1
    eps: float = 1e-10
    clip: float = 1.0
    epochs: int = 5
    batch: int = 128
    unroll: int = 20
    seed: int = 0
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.step <= 0 or self.clip <= 0:
            raise ValueError("step and clip must be positive")
        if self.epochs < 1 or self.batch < 1 or self.unroll < 1:
            raise ValueError("epochs, batch and unroll must be >= 1")


def perplexity(model, stream: np.ndarray, chunk: int = 2048) -> float:
    """exp of the mean negative log-probability of tokens 1..T-1.

    Uses the output layer's full distribution, so it is exact for every layer.
    """
    stream = np.asarray(stream, dtype=np.int64)
    if len(stream) < 2:
        raise ValueError("perplexity needs at least two tokens")
    nll, n = [], 0
    for h, y in model.stream_hidden(stream, chunk):
        logd = model.output.log_distribution(h)
        nll.append(-float(np.sum(logd[np.arange(len(y)), y], dtype=np.float64)))
        n += len(y)
    return math.exp(math.fsum(nll) / n)


def _ff_batches(model: FeedforwardLM, stream, batch):
    """B parallel contiguous shards, one position per shard per step."""
    L = (len(stream) - 1) // batch
    if L < 1:
        raise ValueError(f"stream of {len(stream)} tokens is too short for batch {batch}")
    starts = 1 + np.arange(batch) * L
    for i in range(L):
        pos = starts + i
        yield model.contexts(stream, pos), stream[pos]


def _rnn_batches(stream, batch, unroll):
    L = (len(stream) - 1) // batch
    if L < unroll:
        raise ValueError(f"stream of {len(stream)} tokens is too short for batch {batch} x unroll {unroll}")
    starts = np.arange(batch) * L
    for i in range(0, L - unroll + 1, unroll):
        idx = starts[:, None] + i + np.arange(unroll)[None, :]
        yield stream[idx], stream[idx + 1]


@dataclass
class EpochLog:
    epoch: int
    step: int
    loss: float
    ppl_valid: float
    seconds: float


def train(model, train_stream: np.ndarray, valid_stream: np.ndarray | None, config: TrainConfig,
          log_path=None, on_epoch: Callable[[EpochLog], None] | None = None) -> list[EpochLog]:
    """Adagrad with global-norm clipping; one log entry per epoch.

    ``seconds`` is cumulative training wall time (validation excluded).
    """
    train_stream = np.asarray(train_stream, dtype=np.int64)
    params = model.all_params()
    state = AdagradState()
    logs: list[EpochLog] = []
    steps, elapsed = 0, 0.0
    writer = None
    fh = None
    if log_path is not None:
        fh = open(log_path, "w", newline="")
        writer = csv.writer(fh)
        writer.writerow(["epoch", "step", "loss", "ppl_valid", "seconds"])
    try:
        for epoch in range(1, config.epochs + 1):
            t0 = time.perf_counter()
            total, count = 0.0, 0
            h = None
            if isinstance(model, ElmanLM):
                batches = _rnn_batches(train_stream, config.batch, config.unroll)
            else:
                batches = _ff_batches(model, train_stream, config.batch)
            for x, y in batches:
                if isinstance(model, ElmanLM):
                    loss, grads, h = model.loss_and_grads(x, y, h)
                else:
                    loss, grads = model.loss_and_grads(x, y)
                if not math.isfinite(loss):
                    raise TrainingDiverged(f"loss became {loss} at epoch {epoch}, step {steps + 1}")
                clip_gradients(grads, config.clip)
                adagrad_step(params, grads, state, config.step, config.eps, config.weight_decay)
                total += float(loss)
                count += 1
                steps += 1
            elapsed += time.perf_counter() - t0
            ppl = perplexity(model, valid_stream) if valid_stream is not None else float("nan")
            entry = EpochLog(epoch, steps, total / max(count, 1), ppl, elapsed)
            logs.append(entry)
            log.info("epoch %d: loss %.4f valid ppl %.3f (%.1fs)", epoch, entry.loss, ppl, elapsed)
            if writer is not None:
                writer.writerow([epoch, steps, repr(entry.loss), repr(ppl), f"{elapsed:.3f}"])
                fh.flush()
            if on_epoch is not None:
                on_epoch(entry)
    finally:
        if fh is not None:
            fh.close()
    return logs


def config_dict(config: TrainConfig) -> dict:
    return asdict(config)
