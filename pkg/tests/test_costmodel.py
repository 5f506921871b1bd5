import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from adasoft.costmodel import (CalibrationError, CostModelParams, calibrate, constraint_satisfied,
                               default_k_grid, fit_hinge, g, predicted_speedup, read_samples,
                               synthetic_samples, write_samples)
from adasoft.linalg import TimingSample

P = CostModelParams(c=1e-4, lam=1e-8, k0=50, B0=128)


def test_constant_branch():
    assert g(P, 10, 64) == pytest.approx(1.64e-4, rel=1e-12)


def test_affine_branch():
    assert g(P, 1000, 128) == pytest.approx(1.38e-3, rel=1e-12)


def test_hinge_continuity():
    assert g(P, P.k0, P.B0) == P.c_m
    assert g(P, P.k0 + 1e-9, P.B0) == pytest.approx(P.c_m, rel=1e-9)


def test_domain():
    with pytest.raises(ValueError):
        g(P, 0, 10)
    with pytest.raises(ValueError):
        CostModelParams(c=-1, lam=1e-8, k0=1, B0=1)
    with pytest.raises(ValueError):
        CostModelParams(c=0, lam=0, k0=1, B0=1)


params = st.builds(CostModelParams, c=st.floats(0, 1e-2), lam=st.floats(1e-12, 1e-6),
                   k0=st.floats(1, 1e4), B0=st.floats(1, 1024))


@settings(max_examples=200, deadline=None)
@given(params, st.floats(1, 1e6), st.floats(1, 1e4), st.floats(0, 1e3), st.floats(0, 1e3))
def test_lower_bound_and_monotone(p, k, b, dk, db):
    assert g(p, k, b) >= p.c_m
    assert g(p, k + dk, b) >= g(p, k, b)
    assert g(p, k, b + db) >= g(p, k, b)


@settings(max_examples=100, deadline=None)
@given(params, st.floats(1, 1e6), st.floats(1, 1e4))
def test_constraint_predicate(p, k, b):
    assert constraint_satisfied(p, k, b) == (k * b >= p.k0 * p.B0)


def test_predicted_speedup():
    full = g(P, 10000, 128)
    assert predicted_speedup(P, 10000, full, 128) == 1.0
    assert predicted_speedup(P, 10000, full / 2, 128) == 2.0
    with pytest.raises(ValueError):
        predicted_speedup(P, 10000, 0.0, 128)


def test_noiseless_round_trip():
    gen = CostModelParams(c=2e-4, lam=5e-9, k0=64, B0=128)
    fit = fit_hinge(synthetic_samples(gen, default_k_grid())).params
    assert fit.c == pytest.approx(gen.c, rel=1e-12)
    assert fit.lam == pytest.approx(gen.lam, rel=1e-12)
    assert fit.k0 == gen.k0 and fit.B0 == gen.B0


def test_noisy_lambda_recovery():
    gen = CostModelParams(c=2e-4, lam=5e-9, k0=64, B0=128)
    errors = []
    for seed in range(100):
        fit = fit_hinge(synthetic_samples(gen, default_k_grid(), noise=0.05, seed=seed)).params
        errors.append(abs(fit.lam - gen.lam) / gen.lam)
    assert max(errors) < 0.10


def test_report_has_per_sample_errors():
    gen = CostModelParams(c=2e-4, lam=5e-9, k0=64, B0=128)
    rep = fit_hinge(synthetic_samples(gen, default_k_grid()))
    assert len(rep.rel_errors) == len(default_k_grid())
    assert rep.median_rel_error < 1e-12
    assert len(rep.lines()) == 3 + len(default_k_grid())


def test_degenerate_fit():
    samples = [TimingSample(k=8, batch=128, seconds=1e-4), TimingSample(k=16, batch=128, seconds=1e-4)]
    with pytest.raises(CalibrationError):
        fit_hinge(samples)


def test_mixed_batches_rejected():
    samples = [TimingSample(k=8 * 2 ** i, batch=64 + i, seconds=1e-4 * (i + 1)) for i in range(6)]
    with pytest.raises(CalibrationError):
        fit_hinge(samples)


def test_grid_must_span_hinge():
    with pytest.raises(CalibrationError):
        calibrate(16, 4, [128, 256, 512], repeats=3)


def test_samples_csv_round_trip(tmp_path):
    gen = CostModelParams(c=2e-4, lam=5e-9, k0=64, B0=128)
    samples = synthetic_samples(gen, default_k_grid())
    write_samples(samples, tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text().splitlines()[0] == "k,batch,seconds"
    back = read_samples(tmp_path / "s.csv")
    assert [(s.k, s.batch, s.seconds) for s in back] == [(s.k, s.batch, s.seconds) for s in samples]


def test_params_file_round_trip(tmp_path):
    p = CostModelParams(c=1.234e-4, lam=5.678e-9, k0=64, B0=128)
    p.save(tmp_path / "params.txt")
    text = (tmp_path / "params.txt").read_text()
    assert text.startswith("c=") and "\nlambda=" in text
    assert CostModelParams.load(tmp_path / "params.txt") == p


def test_small_real_calibration():
    rep = calibrate(64, 16, [8, 16, 32, 64, 2048, 4096], repeats=3)
    assert rep.params.B0 == 16
    assert np.all(np.isfinite(rep.rel_errors))
