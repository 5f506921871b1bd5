"""Synthetic vocabularies and corpora with known statistics."""

from __future__ import annotations

import math

import numpy as np

from .corpus import Vocabulary


def zipf_counts(k: int, exponent: float = 1.0, scale: float = 1e9) -> np.ndarray:
    """Integer counts round(scale * r^-exponent), r = 1..k, floored at 1."""
    r = np.arange(1, k + 1, dtype=np.float64)
    return np.maximum(1, np.round(scale * r ** -exponent)).astype(np.int64)


def zipf_vocabulary(k: int, exponent: float = 1.0, scale: float = 1e9) -> Vocabulary:
    return Vocabulary.from_counts(zipf_counts(k, exponent, scale))


def sample_tokens(vocab: Vocabulary, n: int, seed=0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.choice(len(vocab), size=n, p=vocab.probs)


class BigramChain:
    """Markov chain over k states with a known entropy rate."""

    def __init__(self, transition: np.ndarray):
        T = np.asarray(transition, dtype=np.float64)
        if T.ndim != 2 or T.shape[0] != T.shape[1] or np.any(T < 0):
            raise ValueError("transition must be a square non-negative matrix")
        self.T = T / T.sum(axis=1, keepdims=True)
        self.k = T.shape[0]

    @classmethod
    def random(cls, k: int, concentration: float = 0.2, seed=0) -> "BigramChain":
        rng = np.random.default_rng(seed)
        return cls(rng.dirichlet(np.full(k, concentration), size=k))

    def stationary(self) -> np.ndarray:
        vals, vecs = np.linalg.eig(self.T.T)
        v = np.real(vecs[:, np.argmin(np.abs(vals - 1.0))])
        return v / v.sum()

    def entropy_rate(self) -> float:
        """H = -sum_i pi_i sum_j T_ij ln T_ij, in nats."""
        pi = self.stationary()
        with np.errstate(divide="ignore", invalid="ignore"):
            logs = np.where(self.T > 0, np.log(self.T), 0.0)
        return float(-np.sum(pi[:, None] * self.T * logs))

    def perplexity_bound(self) -> float:
        return math.exp(self.entropy_rate())

    def sample(self, n: int, seed=0) -> np.ndarray:
        rng = np.random.default_rng(seed)
        cdf = np.cumsum(self.T, axis=1)
        out = np.empty(n, dtype=np.int64)
        s = rng.choice(self.k, p=self.stationary())
        u = rng.random(n)
        for t in range(n):
            out[t] = s
            s = min(int(np.searchsorted(cdf[s], u[t], side="right")), self.k - 1)
        return out

    def words(self) -> list[str]:
        return [f"s{i}" for i in range(self.k)]
