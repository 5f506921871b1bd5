"""Cost-optimal split of a frequency-sorted vocabulary into a head and J tail clusters."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from numba import njit

from .corpus import Vocabulary
from .costmodel import CostModelParams, constraint_satisfied, g


class PartitionError(ValueError):
    pass


@dataclass(frozen=True)
class Partition:
    """Head short-list of ``k_h`` words followed by tail clusters of ``tail_sizes`` words.

    Words are identified by frequency rank, so the head is ranks ``0..k_h-1``,
    cluster 1 the next ``tail_sizes[0]`` ranks, and so on.
    """

    k_h: int
    tail_sizes: tuple[int, ...]
    cluster_dims: tuple[int, ...] = ()
    head_prob: float = float("nan")
    tail_probs: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "tail_sizes", tuple(int(s) for s in self.tail_sizes))
        object.__setattr__(self, "cluster_dims", tuple(int(s) for s in self.cluster_dims))
        if self.k_h < 1 or any(s < 1 for s in self.tail_sizes):
            raise PartitionError(f"empty cluster in partition k_h={self.k_h} tails={self.tail_sizes}")
        if self.cluster_dims and len(self.cluster_dims) != self.J:
            raise PartitionError("cluster_dims must have one entry per tail cluster")
        if any(a < b for a, b in zip(self.cluster_dims, self.cluster_dims[1:])):
            raise PartitionError(f"cluster_dims must be non-increasing: {self.cluster_dims}")

    @property
    def J(self) -> int:
        return len(self.tail_sizes)

    @property
    def k(self) -> int:
        return self.k_h + sum(self.tail_sizes)

    @property
    def boundaries(self) -> tuple[int, ...]:
        """Cumulative cut points: (k_h, k_h+k_1, ..., k)."""
        return tuple(int(b) for b in np.cumsum((self.k_h,) + self.tail_sizes))

    @property
    def cluster_ranges(self) -> list[tuple[int, int]]:
        b = self.boundaries
        return [(b[i], b[i + 1]) for i in range(self.J)]

    @property
    def has_probs(self) -> bool:
        return len(self.tail_probs) == self.J and not math.isnan(self.head_prob)

    @classmethod
    def from_sizes(cls, vocab: Vocabulary, k_h: int, tail_sizes: Sequence[int] = (),
                   cluster_dims: Sequence[int] = ()) -> "Partition":
        """Partition with probabilities derived from ``vocab``'s integer counts."""
        tail_sizes = tuple(int(s) for s in tail_sizes)
        if k_h + sum(tail_sizes) != len(vocab):
            raise PartitionError(f"partition covers {k_h + sum(tail_sizes)} words, "
                                 f"vocabulary has {len(vocab)}")
        b = np.cumsum((k_h,) + tail_sizes)
        tails = tuple(vocab.mass(int(b[i]), int(b[i + 1])) for i in range(len(tail_sizes)))
        return cls(k_h, tail_sizes, tuple(cluster_dims), vocab.mass(0, k_h), tails)

    def with_dims(self, cluster_dims: Sequence[int]) -> "Partition":
        return Partition(self.k_h, self.tail_sizes, tuple(cluster_dims), self.head_prob, self.tail_probs)

    def check_vocabulary(self, vocab: Vocabulary) -> None:
        if self.k != len(vocab):
            raise PartitionError(f"partition covers {self.k} words, vocabulary has {len(vocab)}")

    def save(self, path) -> None:
        Path(path).write_text(
            f"k_h={self.k_h}\n"
            f"tail_sizes={','.join(map(str, self.tail_sizes))}\n"
            f"cluster_dims={','.join(map(str, self.cluster_dims))}\n")

    @classmethod
    def load(cls, path, vocab: Vocabulary | None = None) -> "Partition":
        fields = {}
        for line in Path(path).read_text().splitlines():
            if line.strip():
                key, _, val = line.partition("=")
                fields[key.strip()] = val.strip()
        try:
            k_h = int(fields["k_h"])
            tails = [int(x) for x in fields["tail_sizes"].split(",") if x]
            dims = [int(x) for x in fields.get("cluster_dims", "").split(",") if x]
        except (KeyError, ValueError) as exc:
            raise PartitionError(f"{path}: malformed partition file ({exc})") from None
        if vocab is not None:
            return cls.from_sizes(vocab, k_h, tails, dims)
        return cls(k_h, tails, dims)


def _require_probs(part: Partition) -> None:
    if not part.has_probs:
        raise PartitionError("partition has no probabilities; build it with Partition.from_sizes")


def partition_cost(part: Partition, params: CostModelParams, batch: float) -> float:
    """Expected time g(J + k_h, B) + sum_i g(k_i, p_i B) under the max-form model.

    Terms are accumulated with ``math.fsum`` so the value does not depend on
    summation order.
    """
    _require_probs(part)
    terms = [g(params, part.J + part.k_h, batch)]
    for k_i, p_i in zip(part.tail_sizes, part.tail_probs):
        if k_i < 1:
            raise PartitionError("empty cluster")
        # a cluster with zero probability is never evaluated; g needs batch > 0
        terms.append(g(params, k_i, p_i * batch) if p_i > 0 else params.c_m)
    return math.fsum(terms)


def affine_cost(part: Partition, params: CostModelParams, batch: float) -> float:
    """Closed form (J+1)c + lam*B*(J + k_h + sum_i p_i k_i); valid only above the hinge."""
    _require_probs(part)
    if not constraint_satisfied(params, part.J + part.k_h, batch):
        raise PartitionError(f"head term (k={part.J + part.k_h}, B={batch}) is below the hinge")
    for i, (k_i, p_i) in enumerate(zip(part.tail_sizes, part.tail_probs), 1):
        if not constraint_satisfied(params, k_i, p_i * batch):
            raise PartitionError(f"tail cluster {i} (k={k_i}, p={p_i:.3g}) has effective batch "
                                 f"{p_i * batch:.3g}, below the hinge k0*B0={params.k0 * params.B0:g}")
    return affine_objective(part.k_h, part.tail_sizes, part.tail_probs, params, batch)


def affine_objective(k_h: int, tail_sizes: Sequence[int], tail_probs: Sequence[float],
                     params: CostModelParams, batch: float) -> float:
    """The affine expression without the hinge check (used for exchange arguments)."""
    J = len(tail_sizes)
    return (J + 1) * params.c + params.lam * batch * (J + k_h + math.fsum(
        p * k for p, k in zip(tail_probs, tail_sizes)))


# ---------------------------------------------------------------------------
# dynamic programming

@njit(cache=True)
def _g(c, lam, k0, B0, k, b):
    # same operation order as costmodel.g so both round identically
    cm = c + lam * k0 * B0
    x = c + lam * k * b
    return cm if cm >= x else x


@njit(cache=True)
def _cluster_cost(cum, cuts, i, j, total, c, lam, k0, B0, batch):
    s = cuts[i]
    e = cuts[j]
    cnt = cum[e] - cum[s]
    if cnt > 0:
        return _g(c, lam, k0, B0, e - s, (cnt / total) * batch)
    return c + lam * k0 * B0


@njit(cache=True)
def _tables_scan(cum, cuts, total, J, c, lam, k0, B0, batch):
    """F[m, i]: least cost of splitting words cuts[i]..n-1 into m tail clusters.

    nxt[m, i] is the cut index ending the first of those clusters (smallest on ties).
    """
    nc = cuts.shape[0]
    F = np.full((J + 1, nc), np.inf)
    nxt = np.full((J + 1, nc), -1, dtype=np.int64)
    F[0, nc - 1] = 0.0
    for m in range(1, J + 1):
        for i in range(nc - 2, -1, -1):
            best = np.inf
            arg = -1
            for j in range(i + 1, nc):
                t = _cluster_cost(cum, cuts, i, j, total, c, lam, k0, B0, batch)
                # t grows with j and the remainder is >= 0: nothing further can win
                if t >= best:
                    break
                rest = F[m - 1, j]
                if rest < np.inf:
                    v = t + rest
                    if v < best:
                        best = v
                        arg = j
            F[m, i] = best
            nxt[m, i] = arg
    return F, nxt


@njit(cache=True)
def _tables_monotone(cum, cuts, total, J, c, lam, k0, B0, batch):
    """Same tables as ``_tables_scan`` using monotonicity of the optimal cut.

    The cluster cost is a convex non-decreasing function of (size x mass),
    which satisfies the quadrangle inequality, so leftmost minimisers move
    right as the start moves right; divide and conquer over starts.
    """
    nc = cuts.shape[0]
    F = np.full((J + 1, nc), np.inf)
    nxt = np.full((J + 1, nc), -1, dtype=np.int64)
    F[0, nc - 1] = 0.0
    stack = np.empty((4 * nc + 64, 4), dtype=np.int64)
    for m in range(1, J + 1):
        last = nc - 1 - m  # last start index leaving room for m clusters
        if last < 0:
            continue
        top = 0
        stack[0, 0] = 0
        stack[0, 1] = last
        stack[0, 2] = 1
        stack[0, 3] = nc - 1
        top = 1
        while top > 0:
            top -= 1
            lo = stack[top, 0]
            hi = stack[top, 1]
            jlo = stack[top, 2]
            jhi = stack[top, 3]
            if lo > hi:
                continue
            mid = (lo + hi) // 2
            best = np.inf
            arg = -1
            j = max(jlo, mid + 1)
            while j <= jhi:
                rest = F[m - 1, j]
                if rest < np.inf:
                    v = _cluster_cost(cum, cuts, mid, j, total, c, lam, k0, B0, batch) + rest
                    if v < best:
                        best = v
                        arg = j
                j += 1
            F[m, mid] = best
            nxt[m, mid] = arg
            if arg < 0:
                arg = jlo
            stack[top, 0] = lo
            stack[top, 1] = mid - 1
            stack[top, 2] = jlo
            stack[top, 3] = arg
            top += 1
            stack[top, 0] = mid + 1
            stack[top, 1] = hi
            stack[top, 2] = arg
            stack[top, 3] = jhi
            top += 1
    return F, nxt


# above this many cut points the O(k^2) scan gives way to the monotone solver
SCAN_LIMIT = 4000


class _Tables:
    def __init__(self, vocab, J_max, params, batch, stride, method):
        n = len(vocab)
        if J_max < 0:
            raise PartitionError("J must be >= 0")
        if J_max + 1 > n:
            raise PartitionError(f"J={J_max} needs at least {J_max + 1} words, vocabulary has {n}")
        if stride < 1:
            raise PartitionError("stride must be >= 1")
        cuts = np.arange(0, n, stride, dtype=np.int64)
        self.cuts = np.append(cuts, n)
        if method == "auto":
            method = "scan" if len(self.cuts) <= SCAN_LIMIT else "monotone"
        if method not in ("scan", "monotone"):
            raise ValueError(f"unknown DP method {method!r}")
        self.method = method
        solver = _tables_scan if method == "scan" else _tables_monotone
        cum = vocab.cumulative_counts.astype(np.float64)
        self.F, self.nxt = solver(cum, self.cuts, float(vocab.total), J_max, float(params.c),
                                  float(params.lam), float(params.k0), float(params.B0), float(batch))
        self.vocab, self.params, self.batch = vocab, params, batch

    def partition(self, J: int) -> Partition:
        vocab, cuts = self.vocab, self.cuts
        n = len(vocab)
        if J == 0:
            return Partition.from_sizes(vocab, n, ())
        best, best_i = math.inf, -1
        for i in range(1, len(cuts)):
            k_h = int(cuts[i])
            if k_h > n - J:
                break
            rest = self.F[J, i]
            if not math.isfinite(rest):
                continue
            v = g(self.params, J + k_h, self.batch) + rest
            if v < best:
                best, best_i = v, i
        if best_i < 0:
            raise PartitionError(f"no feasible partition with J={J}")
        sizes, i = [], best_i
        for m in range(J, 0, -1):
            j = int(self.nxt[m, i])
            sizes.append(int(cuts[j] - cuts[i]))
            i = j
        return Partition.from_sizes(vocab, int(cuts[best_i]), sizes)


def optimize_fixed_j(vocab: Vocabulary, J: int, params: CostModelParams, batch: float,
                     stride: int = 1, method: str = "auto") -> Partition:
    """Optimal contiguous head + J clusters under ``partition_cost``.

    Cut points are every word boundary when ``stride == 1``, otherwise the
    multiples of ``stride``.  ``method`` picks the full O(J k^2) scan or the
    monotone divide-and-conquer solver; ``"auto"`` scans small problems.
    Ties go to the smaller head, then the lexicographically smaller cuts.
    """
    return _Tables(vocab, J, params, batch, stride, method).partition(J)


@dataclass(frozen=True)
class SweepEntry:
    J: int
    partition: Partition
    cost: float


def sweep_clusters(vocab: Vocabulary, J_max: int, params: CostModelParams, batch: float,
                   stride: int = 1, method: str = "auto") -> tuple[list[SweepEntry], SweepEntry]:
    """Optimal partition and cost for every J in 1..J_max, plus the best entry.

    The tail tables for J_max contain every smaller J, so the DP runs once.
    """
    if J_max < 1:
        raise PartitionError("J_max must be >= 1")
    J_max = min(J_max, len(vocab) - 1)
    tables = _Tables(vocab, J_max, params, batch, stride, method)
    entries = []
    for J in range(1, J_max + 1):
        part = tables.partition(J)
        entries.append(SweepEntry(J, part, partition_cost(part, params, batch)))
    best = min(entries, key=lambda e: (e.cost, e.J))
    return entries, best


def head_size_grid(k: int, points: int = 400) -> np.ndarray:
    """Log-spaced head sizes 1..k-1 (all of them when k-1 <= points)."""
    if k - 1 <= points:
        return np.arange(1, k)
    return np.unique(np.geomspace(1, k - 1, points).round().astype(np.int64))


def two_cluster_curve(vocab: Vocabulary, params: CostModelParams, batch: float,
                      grid: Sequence[int] | None = None):
    """Rows (k_h, cost) of the J=1 cost, and the k_h where the head first holds half the mass."""
    n = len(vocab)
    grid = head_size_grid(n) if grid is None else np.asarray(grid)
    rows = []
    for k_h in grid:
        part = Partition.from_sizes(vocab, int(k_h), (n - int(k_h),))
        rows.append((int(k_h), partition_cost(part, params, batch)))
    cum = vocab.cumulative_counts
    half = int(np.searchsorted(cum, vocab.total / 2, side="left"))
    return rows, max(half, 1)


def two_cluster_scan(vocab: Vocabulary, params: CostModelParams, batch: float) -> Partition:
    """Direct scan over every k_h for J=1 (smallest k_h on ties)."""
    rows, _ = two_cluster_curve(vocab, params, batch, grid=np.arange(1, len(vocab)))
    best_kh = min(rows, key=lambda r: (r[1], r[0]))[0]
    return Partition.from_sizes(vocab, best_kh, (len(vocab) - best_kh,))


def assign_capacities(part: Partition | int, d: int, decay: float = 4.0, d_min: int = 8) -> list[int]:
    """Projected hidden size of tail cluster i (1-based): max(d_min, floor(d / decay**i))."""
    J = part if isinstance(part, int) else part.J
    if not (d >= d_min >= 1):
        raise ValueError(f"need d >= d_min >= 1, got d={d} d_min={d_min}")
    if decay <= 1:
        raise ValueError("decay must be > 1")
    return [max(d_min, math.floor(d / decay ** i)) for i in range(1, J + 1)]


def write_curve(rows, path, header: Sequence[str]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        for r in rows:
            w.writerow([r[0], repr(float(r[1]))] + [repr(float(x)) for x in r[2:]])


def read_curve(path) -> list[tuple]:
    with open(path, newline="") as f:
        reader = csv.reader(f)
        next(reader)
        return [(int(r[0]), *map(float, r[1:])) for r in reader]
