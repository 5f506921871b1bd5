"""Vocabulary construction and token streams."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

UNK = "<unk>"


class EmptyCorpusError(ValueError):
    pass


@dataclass(frozen=True)
class Vocabulary:
    """Words sorted by non-increasing count; index = frequency rank."""

    words: tuple[str, ...]
    counts: np.ndarray
    unk_index: int

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        object.__setattr__(self, "counts", counts)
        if len(self.words) != len(counts):
            raise ValueError("words and counts differ in length")
        if len(set(self.words)) != len(self.words):
            raise ValueError("duplicate words in vocabulary")
        if not 0 <= self.unk_index < len(self.words):
            raise ValueError(f"unk_index {self.unk_index} out of range")
        if np.any(counts < 0) or np.any(np.diff(counts) > 0):
            raise ValueError("counts must be non-negative and non-increasing")
        if counts.sum() <= 0:
            raise ValueError("vocabulary has zero total count")
        object.__setattr__(self, "_index", {w: i for i, w in enumerate(self.words)})
        object.__setattr__(self, "_cum", np.concatenate([[0], np.cumsum(counts)]))

    def __len__(self) -> int:
        return len(self.words)

    @property
    def total(self) -> int:
        return int(self._cum[-1])

    @property
    def probs(self) -> np.ndarray:
        return self.counts / self.total

    @property
    def unk(self) -> str:
        return self.words[self.unk_index]

    def index(self, word: str) -> int:
        return self._index.get(word, self.unk_index)

    def mass(self, start: int, stop: int) -> float:
        """Probability of words ``start..stop-1``, computed from integer counts."""
        return int(self._cum[stop] - self._cum[start]) / self.total

    def count_sum(self, start: int, stop: int) -> int:
        return int(self._cum[stop] - self._cum[start])

    @property
    def cumulative_counts(self) -> np.ndarray:
        return self._cum

    @classmethod
    def from_counts(cls, counts: Sequence[int], words: Sequence[str] | None = None) -> "Vocabulary":
        """Build from counts already sorted in non-increasing order.

        Without ``words`` the entries are named ``w0, w1, ...`` and the last
        one doubles as the unknown token.
        """
        counts = np.asarray(counts, dtype=np.int64)
        if words is None:
            words = [f"w{i}" for i in range(len(counts) - 1)] + [UNK]
        words = tuple(words)
        unk = words.index(UNK) if UNK in words else len(words) - 1
        return cls(words, counts, unk)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for w, c in zip(self.words, self.counts):
                f.write(f"{w}\t{int(c)}\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        words, counts = [], []
        with open(path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                try:
                    w, c = line.rsplit("\t", 1)
                    counts.append(int(c))
                except ValueError:
                    raise ValueError(f"{path}:{lineno}: expected 'word<TAB>count'") from None
                words.append(w)
        return cls.from_counts(counts, words)


def tokenize(text: str, lowercase: bool = False) -> list[str]:
    if lowercase:
        text = text.lower()
    return text.split()


def read_tokens(path, lowercase: bool = False, max_tokens: int | None = None) -> list[str]:
    text = Path(path).read_text(encoding="utf-8")
    tokens = tokenize(text, lowercase)
    return tokens if max_tokens is None else tokens[:max_tokens]


def build_vocabulary(tokens: Iterable[str] | str, max_size: int | None = None,
                     min_count: int = 1, lowercase: bool = False) -> Vocabulary:
    """Most frequent words (ties by first occurrence) plus an unknown token.

    Words ranked beyond ``max_size`` or seen fewer than ``min_count`` times
    are folded into the unknown token, which is then placed by its own count.
    """
    if isinstance(tokens, str):
        tokens = tokenize(tokens, lowercase)
    elif lowercase:
        tokens = [t.lower() for t in tokens]
    # Counter preserves first-insertion order, so a stable sort breaks ties by first occurrence
    counter = Counter(tokens)
    if not counter:
        raise EmptyCorpusError("corpus is empty after tokenization")
    unk_count = counter.pop(UNK, 0)
    ranked = sorted(counter.items(), key=lambda kv: -kv[1])
    kept = []
    for word, count in ranked:
        if count < min_count or (max_size is not None and len(kept) >= max_size):
            unk_count += count
        else:
            kept.append((word, count))
    # unk goes after every word with the same count
    pos = len(kept)
    while pos > 0 and kept[pos - 1][1] < unk_count:
        pos -= 1
    kept.insert(pos, (UNK, unk_count))
    words, counts = zip(*kept)
    return Vocabulary(tuple(words), np.array(counts, dtype=np.int64), pos)


def coverage(vocab: Vocabulary, top_fraction: float) -> float:
    """Probability mass of the ceil(top_fraction * k) most frequent words."""
    if not 0 < top_fraction <= 1:
        raise ValueError("top_fraction must lie in (0, 1]")
    n = math.ceil(top_fraction * len(vocab) - 1e-12)
    return vocab.mass(0, n)


def encode(tokens: Iterable[str] | str, vocab: Vocabulary, lowercase: bool = False) -> np.ndarray:
    if isinstance(tokens, str):
        tokens = tokenize(tokens, lowercase)
    elif lowercase:
        tokens = [t.lower() for t in tokens]
    return np.fromiter((vocab.index(t) for t in tokens), dtype=np.int64)


def decode(stream: Iterable[int], vocab: Vocabulary) -> str:
    return " ".join(vocab.words[int(i)] for i in stream)
