"""Dense matrix helpers: precision switch, checked GEMM and GEMM timing.

Matrices are plain row-major ``numpy.ndarray`` objects. The heavy lifting is
done by the BLAS numpy links against; everything here is about making the
contract explicit (shapes, finiteness, precision, thread count).
"""

from __future__ import annotations

import contextlib
import statistics
import time
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_info, threadpool_limits

_PRECISIONS = {"float64": np.float64, "float32": np.float32}
_dtype = np.float64


class ShapeError(ValueError):
    pass


def get_dtype():
    return _dtype


def set_precision(name: str) -> None:
    """Set the run-level precision: ``"float64"`` (default) or ``"float32"``."""
    global _dtype
    try:
        _dtype = _PRECISIONS[name]
    except KeyError:
        raise ValueError(f"unknown precision {name!r}; expected one of {sorted(_PRECISIONS)}") from None


@contextlib.contextmanager
def precision(name: str):
    previous = _dtype
    set_precision(name)
    try:
        yield _dtype
    finally:
        set_precision(np.dtype(previous).name)


def precision_name(dtype=None) -> str:
    return np.dtype(dtype or _dtype).name


def asmatrix(x, dtype=None) -> np.ndarray:
    a = np.ascontiguousarray(x, dtype=dtype or _dtype)
    if a.ndim != 2:
        raise ShapeError(f"expected a 2-d matrix, got shape {a.shape}")
    return a


def identity(n: int, dtype=None) -> np.ndarray:
    return np.eye(n, dtype=dtype or _dtype)


def gemm(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Return ``a @ b`` after checking that both operands are 2-d and conformable."""
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"gemm expects 2-d operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"gemm inner dimensions differ: {a.shape} x {b.shape}")
    return a @ b


def gemm_reference(a, b) -> list[list[float]]:
    """Triple-loop product in pure Python; slow, independent of BLAS."""
    m, d = len(a), len(a[0])
    k = len(b[0])
    if len(b) != d:
        raise ShapeError(f"gemm inner dimensions differ: ({m}, {d}) x ({len(b)}, {k})")
    out = [[0.0] * k for _ in range(m)]
    for i in range(m):
        row = a[i]
        out_row = out[i]
        for j in range(k):
            s = 0.0
            for t in range(d):
                s += row[t] * b[t][j]
            out_row[j] = s
    return out


def blas_threads() -> int:
    infos = [info for info in threadpool_info() if info.get("user_api") == "blas"]
    return int(infos[0]["num_threads"]) if infos else 1


@contextlib.contextmanager
def pinned_threads(threads: int | None):
    """Pin BLAS/OpenMP worker count for the duration of the block."""
    if threads is None:
        yield blas_threads()
        return
    with threadpool_limits(limits=int(threads)):
        yield int(threads)


@dataclass(frozen=True)
class TimingSample:
    k: int
    batch: int
    seconds: float
    d: int = 0
    repeats: int = 0
    threads: int = 1
    dtype: str = "float32"
    raw: tuple[float, ...] = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        if self.seconds <= 0 or self.k < 1 or self.batch < 1:
            raise ValueError(f"invalid timing sample {self}")


def time_gemm(d: int, k: int, batch: int, repeats: int = 5, *, dtype=np.float32,
              threads: int | None = None, seed: int = 0) -> TimingSample:
    """Median wall time of ``(batch x d) @ (d x k)`` over ``repeats`` calls.

    One untimed warm-up call precedes the measurements.
    """
    if repeats < 3:
        raise ValueError("repeats must be >= 3")
    if min(d, k, batch) < 1:
        raise ValueError(f"dimensions must be positive, got d={d} k={k} batch={batch}")
    rng = np.random.default_rng(seed)
    try:
        a = rng.standard_normal((batch, d), dtype=np.float64).astype(dtype)
        b = rng.standard_normal((d, k), dtype=np.float64).astype(dtype)
        out = np.empty((batch, k), dtype=dtype)
    except MemoryError as exc:
        raise MemoryError(f"cannot allocate GEMM operands for d={d} k={k} batch={batch}") from exc

    clock = time.perf_counter
    with pinned_threads(threads) as nthreads:
        np.matmul(a, b, out=out)
        times = []
        for _ in range(repeats):
            t0 = clock()
            np.matmul(a, b, out=out)
            times.append(clock() - t0)
    # perf_counter can report 0 for sub-resolution calls on some platforms
    seconds = max(statistics.median(times), 1e-9)
    return TimingSample(k=k, batch=batch, seconds=seconds, d=d, repeats=repeats,
                        threads=nthreads, dtype=np.dtype(dtype).name, raw=tuple(times))
