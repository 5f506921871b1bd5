"""Hinge model of GEMM time, g(k, B) = max(c + lam*k0*B0, c + lam*k*B), and its calibration."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .linalg import TimingSample, time_gemm


class CalibrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class CostModelParams:
    c: float
    lam: float
    k0: float
    B0: float

    def __post_init__(self):
        if not (self.c >= 0 and self.lam > 0 and self.k0 >= 1 and self.B0 >= 1):
            raise ValueError(f"invalid cost model parameters: {self}")

    @property
    def c_m(self) -> float:
        return self.c + self.lam * self.k0 * self.B0

    def save(self, path) -> None:
        Path(path).write_text(
            f"c={self.c!r}\nlambda={self.lam!r}\nk0={self.k0!r}\nB0={self.B0!r}\n")

    @classmethod
    def load(cls, path) -> "CostModelParams":
        values = {}
        for line in Path(path).read_text().splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, val = line.partition("=")
            values[key.strip()] = float(val)
        try:
            return cls(values["c"], values["lambda"], values["k0"], values["B0"])
        except KeyError as exc:
            raise ValueError(f"{path}: missing key {exc.args[0]}") from None


def g(params: CostModelParams, k: float, batch: float) -> float:
    if k < 1 or batch <= 0:
        raise ValueError(f"g needs k >= 1 and batch > 0, got k={k} batch={batch}")
    return max(params.c + params.lam * params.k0 * params.B0, params.c + params.lam * k * batch)


def constraint_satisfied(params: CostModelParams, k: float, batch: float) -> bool:
    """True when (k, batch) sits on the affine branch: k*batch >= k0*B0."""
    return k * batch >= params.k0 * params.B0


def predicted_speedup(params: CostModelParams, baseline_k: int, cost: float, batch: float) -> float:
    if cost <= 0:
        raise ValueError("cost must be positive")
    return g(params, baseline_k, batch) / cost


@dataclass
class FitReport:
    params: CostModelParams
    samples: list[TimingSample]
    predicted: np.ndarray
    rel_errors: np.ndarray
    n_constant: int
    n_affine: int
    constant_mean: float
    objective: float
    notes: list[str] = field(default_factory=list)

    @property
    def median_rel_error(self) -> float:
        return float(np.median(np.abs(self.rel_errors)))

    def lines(self) -> list[str]:
        p = self.params
        out = [f"c={p.c:.6g} lambda={p.lam:.6g} k0={p.k0:g} B0={p.B0:g} c_m={p.c_m:.6g}",
               f"constant region: {self.n_constant} samples (mean {self.constant_mean:.6g}s); "
               f"affine region: {self.n_affine} samples",
               f"median |relative error| = {self.median_rel_error:.4f}"]
        for s, pred, err in zip(self.samples, self.predicted, self.rel_errors):
            out.append(f"  k={s.k:>7d} B={s.batch:>5d} measured={s.seconds:.6g}s "
                       f"model={pred:.6g}s rel_err={err:+.4f}")
        out.extend(self.notes)
        return out


def fit_hinge(samples: Sequence[TimingSample], min_points: int = 2) -> FitReport:
    """Fit (c, lam, k0) with B0 pinned to the samples' batch.

    Each measured k is tried as k0.  Samples with k <= k0 form the constant
    region (modelled by their mean), samples with k >= k0 the affine region
    (fitted by least squares).  Residuals are relative to the measured time,
    since the grid spans several decades.  The candidate with the smallest
    total squared residual wins.
    """
    batches = {s.batch for s in samples}
    if len(batches) != 1:
        raise CalibrationError(f"calibration needs a single batch size, got {sorted(batches)}")
    B0 = float(batches.pop())
    ks = np.array([s.k for s in samples], dtype=np.float64)
    ts = np.array([s.seconds for s in samples], dtype=np.float64)
    order = np.argsort(ks, kind="stable")
    ks, ts = ks[order], ts[order]
    samples = [samples[i] for i in order]

    best = None
    for k0 in np.unique(ks):
        const = ks <= k0
        aff = ks >= k0
        if const.sum() < min_points or aff.sum() < min_points or np.unique(ks[aff]).size < 2:
            continue
        # relative residuals: weight each row by 1/t
        w = 1.0 / ts[aff]
        x = ks[aff] * B0
        design = np.column_stack([w, x * w])
        (c, lam), *_ = np.linalg.lstsq(design, np.ones_like(w), rcond=None)
        if c < 0:
            # the constrained optimum then lies on c = 0: refit the slope alone
            c, lam = 0.0, float(np.sum(x * w) / np.sum((x * w) ** 2))
        if lam <= 0:
            continue
        cm = float(np.mean(ts[const]))
        res_const = (ts[const] - cm) / ts[const]
        # the hinge point itself lies in both regions; count it once, on the affine side
        res_const = res_const[ks[const] < k0]
        res_aff = (ts[aff] - (c + lam * x)) / ts[aff]
        obj = float(np.sum(res_const ** 2) + np.sum(res_aff ** 2))
        if best is None or obj < best[0]:
            best = (obj, float(k0), float(c), float(lam), cm, int(const.sum()), int(aff.sum()))
    if best is None:
        raise CalibrationError("degenerate fit: need at least 2 samples on each side of some hinge "
                               "candidate and a positive slope")
    obj, k0, c, lam, cm, n_const, n_aff = best
    params = CostModelParams(c=c, lam=lam, k0=k0, B0=B0)
    pred = np.array([g(params, k, B0) for k in ks])
    report = FitReport(params, list(samples), pred, (pred - ts) / ts, n_const, n_aff, cm, obj)
    gap = abs(params.c_m - cm) / cm
    if gap > 0.2:
        report.notes.append(f"note: constant-region mean {cm:.4g}s differs from c+lam*k0*B0 "
                            f"by {gap:.1%}; the hinge is not sharp on this device")
    return report


def default_k_grid(k_min: int = 8, k_max: int = 65536) -> list[int]:
    """Powers of two from k_min to k_max."""
    lo, hi = int(math.log2(k_min)), int(math.log2(k_max))
    return [2 ** i for i in range(lo, hi + 1)]


def collect_samples(d: int, batch: int, k_grid: Sequence[int], repeats: int = 5, *,
                    dtype=np.float32, threads: int | None = None) -> list[TimingSample]:
    return [time_gemm(d, k, batch, repeats, dtype=dtype, threads=threads) for k in k_grid]


def calibrate(d: int, batch: int, k_grid: Sequence[int] | None = None, repeats: int = 5, *,
              dtype=np.float32, threads: int | None = None) -> FitReport:
    """Time GEMMs on this machine and fit the hinge model."""
    k_grid = sorted(k_grid or default_k_grid())
    if k_grid[0] > 64 or k_grid[-1] < 2048:
        raise CalibrationError("k_grid must include some k <= 64 and some k >= 2048")
    samples = collect_samples(d, batch, k_grid, repeats, dtype=dtype, threads=threads)
    return fit_hinge(samples)


def synthetic_samples(params: CostModelParams, k_grid: Sequence[int], batch: int | None = None,
                      noise: float = 0.0, seed: int = 0) -> list[TimingSample]:
    """Samples drawn from the model itself, optionally with multiplicative noise."""
    batch = int(params.B0 if batch is None else batch)
    rng = np.random.default_rng(seed)
    out = []
    for k in k_grid:
        t = g(params, k, batch)
        if noise:
            t *= 1.0 + noise * rng.standard_normal()
        out.append(TimingSample(k=int(k), batch=batch, seconds=t, repeats=1))
    return out


def write_samples(samples: Sequence[TimingSample], path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["k", "batch", "seconds"])
        for s in samples:
            w.writerow([s.k, s.batch, repr(float(s.seconds))])


def read_samples(path) -> list[TimingSample]:
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        return [TimingSample(k=int(r["k"]), batch=int(r["batch"]), seconds=float(r["seconds"]))
                for r in reader]
