import itertools
import math

import numpy as np
import pytest

from adasoft.corpus import Vocabulary
from adasoft.synthetic import zipf_counts


def zipf_vocab(k, exponent=1.0, scale=1e6):
    return Vocabulary.from_counts(zipf_counts(k, exponent, scale))


def numeric_grad(f, x, eps=1e-5):
    """Central differences of scalar f() with respect to array x (modified in place)."""
    out = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + eps
        up = f()
        x[i] = old - eps
        down = f()
        x[i] = old
        out[i] = (up - down) / (2 * eps)
    return out


def rel_error(a, b):
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    if scale == 0:
        return 0.0
    return float(np.linalg.norm(a - b) / scale)


def straight_cost(sizes, counts, params, batch):
    """Partition cost written out term by term, no shared code with the library."""
    counts = [int(c) for c in counts]
    total = sum(counts)
    k_h, tails = sizes[0], sizes[1:]
    J = len(tails)
    terms = [max(params.c + params.lam * params.k0 * params.B0,
                 params.c + params.lam * (J + k_h) * batch)]
    start = k_h
    for size in tails:
        p = sum(counts[start:start + size]) / total
        if p > 0:
            terms.append(max(params.c + params.lam * params.k0 * params.B0,
                             params.c + params.lam * size * (p * batch)))
        else:
            terms.append(params.c + params.lam * params.k0 * params.B0)
        start += size
    return math.fsum(terms)


def brute_force(counts, J, params, batch):
    """Best (cost, sizes) over every placement of J cut points after the head."""
    k = len(counts)
    best = (math.inf, None)
    for cuts in itertools.combinations(range(1, k), J):
        bounds = (0,) + cuts + (k,)
        sizes = [bounds[i + 1] - bounds[i] for i in range(J + 1)]
        cost = straight_cost(sizes, counts, params, batch)
        if cost < best[0]:
            best = (cost, sizes)
    return best


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def text8_path():
    """Location of the Text8 file, from $ADASOFT_TEXT8 or data/text8 in the repo."""
    import os
    from pathlib import Path

    env = os.environ.get("ADASOFT_TEXT8")
    candidates = [Path(env)] if env else []
    candidates.append(Path(__file__).resolve().parent.parent / "data" / "text8")
    for p in candidates:
        if p.is_file():
            return p
    return None


def layer_gradient_errors(layer, hidden, targets, eps=1e-5):
    """Relative error of every analytic gradient group (and the hidden gradient)
    against central differences of the mean loss."""
    _, grads, dh = layer.loss_and_grads(hidden, targets)

    def loss():
        return layer.forward(hidden, targets)[0]

    errors = {name: rel_error(grads[name], numeric_grad(loss, p, eps))
              for name, p in layer.params.items()}
    errors["hidden"] = rel_error(dh, numeric_grad(loss, hidden, eps))
    return errors


def small_layers(d=8, k=50, seed=0, dtype=np.float64):
    """One instance of every layer kind on a k-word Zipf vocabulary, J=2 where it applies."""
    from adasoft.layers import make_layer
    from adasoft.partition import Partition

    v = zipf_vocab(k)
    part = Partition.from_sizes(v, 10, (15, k - 25), (4, 2))
    return v, part, {kind: make_layer(kind, d, k, partition=part, counts=v.counts, seed=seed,
                                      dtype=dtype)
                     for kind in ("full", "adaptive", "hsm", "dsoftmax", "dsoftmax-star")}


_CRITERIA: list[str] = []


@pytest.fixture
def criterion():
    """report(n, ok, detail): record one PASS/FAIL line for acceptance criterion n, then assert.

    The lines are printed together at the end of the run.
    """
    def report(n, ok, detail):
        line = f"[criterion {n}] {'PASS' if ok else 'FAIL'}: {detail}"
        _CRITERIA.append(line)
        assert ok, line
    return report


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_CRITERIA, key=lambda s: int(s.split()[1].rstrip("]"))):
            terminalreporter.write_line(line)
