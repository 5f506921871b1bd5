import math

import numpy as np
import pytest

from adasoft.layers import (AdaptiveSoftmax, DSoftmax, FullSoftmax, HsmFreq, LayerInputError,
                            make_layer, sqrt_frequency_classes)
from adasoft.partition import Partition

from conftest import layer_gradient_errors, small_layers, zipf_vocab

KINDS = ("full", "adaptive", "hsm", "dsoftmax", "dsoftmax-star")


def naive_softmax(z):
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def targets_for(rng, k, B):
    return rng.integers(0, k, size=B)


# -- full softmax ----------------------------------------------------------

def test_full_zero_weights_uniform():
    layer = FullSoftmax(3, 4)
    layer.params["W"][...] = 0
    loss, lp = layer.forward(np.ones((2, 3)), np.array([0, 3]), full=True)
    assert loss == pytest.approx(math.log(4), abs=1e-15)
    assert np.allclose(lp.full, -math.log(4), atol=1e-15)


def test_full_bias_logits():
    layer = FullSoftmax(2, 3)
    layer.params["W"][...] = 0
    layer.params["b"][...] = [math.log(2), 0, 0]
    p = np.exp(layer.log_distribution(np.zeros((1, 2))))[0]
    assert np.allclose(p, [0.5, 0.25, 0.25], atol=1e-15)


def test_full_against_naive_oracle(rng):
    layer = FullSoftmax(16, 50, seed=1)
    h = rng.standard_normal((3, 16))
    oracle = naive_softmax(h @ layer.params["W"] + layer.params["b"])
    assert np.max(np.abs(np.exp(layer.log_distribution(h)) - oracle)) < 1e-12


def test_full_logit_gradient_formula(rng):
    layer = FullSoftmax(4, 2)
    layer.params["W"][...] = 0
    h = rng.standard_normal((2, 4))
    _, grads, _ = layer.loss_and_grads(h, np.array([0, 0]))
    # uniform logits: dz = (0.5 - 1, 0.5) / 2 per example
    assert np.allclose(grads["b"], [2 * -0.25, 2 * 0.25])


def test_full_zero_hidden(rng):
    layer = FullSoftmax(5, 7, seed=3)
    layer.params["b"][...] = rng.standard_normal(7)
    t = np.array([1, 4])
    _, grads, _ = layer.loss_and_grads(np.zeros((2, 5)), t)
    assert np.all(grads["W"] == 0)
    p = naive_softmax(layer.params["b"][None, :])[0]
    onehot = np.zeros((2, 7))
    onehot[[0, 1], t] = 1
    assert np.allclose(grads["b"], (p[None, :] - onehot).sum(0) / 2, atol=1e-15)


def test_rejects_non_finite_hidden():
    layer = FullSoftmax(2, 3)
    with pytest.raises(LayerInputError):
        layer.forward(np.array([[np.nan, 0.0]]), np.array([0]))


def test_rejects_bad_targets():
    layer = FullSoftmax(2, 3)
    with pytest.raises(LayerInputError):
        layer.forward(np.zeros((1, 2)), np.array([3]))


# -- gradients ---------------------------------------------------------------

@pytest.mark.parametrize("kind", KINDS)
def test_finite_differences(kind, rng):
    v, part, layers = small_layers(seed=2)
    layer = layers[kind]
    h = rng.standard_normal((4, 8))
    # one target per band so every parameter group sees a gradient
    t = np.array([0, 12, 30, 49])
    for name, err in layer_gradient_errors(layer, h, t).items():
        assert err < 1e-5, (kind, name, err)


@pytest.mark.parametrize("kind", KINDS)
def test_descent_step(kind, rng):
    _, _, layers = small_layers(seed=4)
    layer = layers[kind]
    h = rng.standard_normal((6, 8))
    t = rng.integers(0, 50, size=6)
    before, grads, _ = layer.loss_and_grads(h, t)
    for name, g in grads.items():
        layer.params[name] -= 1e-3 * g
    assert layer.forward(h, t)[0] < before


# -- normalization ---------------------------------------------------------

@pytest.mark.parametrize("kind", KINDS)
def test_normalization_64bit(kind, rng):
    v = zipf_vocab(100)
    part = Partition.from_sizes(v, 20, (30, 50), (8, 4))
    for seed in range(20):
        layer = make_layer(kind, 16, 100, partition=part, counts=v.counts, seed=seed)
        h = rng.standard_normal((5, 16)) * 3
        total = np.exp(layer.log_distribution(h)).sum(axis=1)
        assert np.max(np.abs(total - 1)) < 1e-9


@pytest.mark.parametrize("kind", KINDS)
def test_normalization_32bit(kind, rng):
    v = zipf_vocab(100)
    part = Partition.from_sizes(v, 20, (30, 50), (8, 4))
    layer = make_layer(kind, 16, 100, partition=part, counts=v.counts, seed=0, dtype=np.float32)
    h = rng.standard_normal((5, 16)).astype(np.float32)
    logd = layer.log_distribution(h)
    assert logd.dtype == np.float32
    total = np.exp(logd.astype(np.float64)).sum(axis=1)
    assert np.max(np.abs(total - 1)) < 1e-6


@pytest.mark.parametrize("kind", KINDS)
def test_target_logp_matches_distribution(kind, rng):
    _, _, layers = small_layers(seed=5)
    layer = layers[kind]
    h = rng.standard_normal((7, 8))
    t = rng.integers(0, 50, size=7)
    loss, lp = layer.forward(h, t, full=True)
    assert np.allclose(lp.target, lp.full[np.arange(7), t], atol=1e-12)
    assert loss == pytest.approx(-lp.target.mean(), abs=1e-12)


# -- adaptive softmax ------------------------------------------------------

def adaptive_j0_copy(full: FullSoftmax) -> AdaptiveSoftmax:
    layer = AdaptiveSoftmax(full.d, Partition(full.k, ()))
    layer.params["head.W"][...] = full.params["W"]
    layer.params["head.b"][...] = full.params["b"]
    return layer


def test_adaptive_j0_equals_full(rng):
    full = FullSoftmax(8, 30, seed=1)
    full.params["b"][...] = rng.standard_normal(30)
    ada = adaptive_j0_copy(full)
    h = rng.standard_normal((5, 8))
    t = rng.integers(0, 30, size=5)
    assert np.max(np.abs(full.log_distribution(h) - ada.log_distribution(h))) < 1e-12
    lf, gf, hf = full.loss_and_grads(h, t)
    la, ga, ha = ada.loss_and_grads(h, t)
    assert abs(lf - la) < 1e-12
    assert np.max(np.abs(gf["W"] - ga["head.W"])) < 1e-12
    assert np.max(np.abs(gf["b"] - ga["head.b"])) < 1e-12
    assert np.max(np.abs(hf - ha)) < 1e-12


def test_adaptive_explicit_chain(rng):
    v = zipf_vocab(6)
    part = Partition.from_sizes(v, 3, (3,), (2,))
    layer = AdaptiveSoftmax(4, part, seed=7)
    h = rng.standard_normal((6, 4))
    t = np.arange(6)
    P = layer.params
    head = naive_softmax(h @ P["head.W"] + P["head.b"])
    tail = naive_softmax(h @ P["proj.0"] @ P["out.0.W"] + P["out.0.b"])
    expected = np.concatenate([head[:, :3], head[:, 3:4] * tail], axis=1)
    assert np.max(np.abs(np.exp(layer.log_distribution(h)) - expected)) < 1e-12
    assert np.max(np.abs(np.exp(layer.log_prob(h, t)) - expected[t, t])) < 1e-12


def test_adaptive_head_layout():
    v = zipf_vocab(100)
    layer = AdaptiveSoftmax(16, Partition.from_sizes(v, 20, (30, 50), (8, 4)))
    assert layer.params["head.W"].shape == (16, 22)
    assert layer.params["proj.1"].shape == (16, 4)
    assert layer.params["out.1.W"].shape == (4, 50)
    assert layer.cluster_of(np.array([0, 19, 20, 49, 50, 99])).tolist() == [-1, -1, 0, 0, 1, 1]


def test_adaptive_routing_sparsity(rng):
    _, _, layers = small_layers(seed=0)
    layer = layers["adaptive"]
    h = rng.standard_normal((8, 8))
    _, grads, _ = layer.loss_and_grads(h, rng.integers(0, 10, size=8))
    for i in range(2):
        for name in (f"proj.{i}", f"out.{i}.W", f"out.{i}.b"):
            assert np.all(grads[name] == 0)
    _, grads, _ = layer.loss_and_grads(h, rng.integers(10, 25, size=8))
    assert np.any(grads["out.0.W"] != 0)
    assert np.all(grads["out.1.W"] == 0) and np.all(grads["proj.1"] == 0)


def test_adaptive_partition_mismatch():
    v = zipf_vocab(50)
    part = Partition.from_sizes(v, 10, (40,))
    with pytest.raises(ValueError):
        make_layer("adaptive", 8, 60, partition=part)


def test_uniform_init_and_zero_bias():
    layer = AdaptiveSoftmax(16, Partition(20, (30,), (4,)), seed=0)
    assert np.all(np.abs(layer.params["head.W"]) <= 1 / 4)
    assert np.all(np.abs(layer.params["out.0.W"]) <= 1 / 2)
    assert not layer.params["head.b"].any() and not layer.params["out.0.b"].any()


def test_same_seed_same_weights():
    a = AdaptiveSoftmax(8, Partition(5, (5,)), seed=3)
    b = AdaptiveSoftmax(8, Partition(5, (5,)), seed=3)
    assert all(np.array_equal(a.params[n], b.params[n]) for n in a.params)


# -- HSM ---------------------------------------------------------------------

def test_hsm_two_by_two_chain(rng):
    layer = HsmFreq(3, [0, 2, 4], seed=1)
    P = layer.params
    h = rng.standard_normal((2, 3))
    cls = naive_softmax(h @ P["class.W"] + P["class.b"])
    w0 = naive_softmax(h @ P["word.0.W"] + P["word.0.b"])
    w1 = naive_softmax(h @ P["word.1.W"] + P["word.1.b"])
    expected = np.concatenate([cls[:, :1] * w0, cls[:, 1:] * w1], axis=1)
    assert np.max(np.abs(np.exp(layer.log_distribution(h)) - expected)) < 1e-12


def test_sqrt_binning():
    counts = [100, 100, 25, 25, 4, 4, 1, 1, 1]
    cuts = sqrt_frequency_classes(counts, 3)
    assert cuts[0] == 0 and cuts[-1] == 9 and len(cuts) == 4
    # sqrt mass: 10,10,5,5,2,2,1,1,1 = 37; equal thirds need the first two words in one class
    assert cuts[1] == 2
    assert sqrt_frequency_classes([5] * 100)[-1] == 100
    assert len(sqrt_frequency_classes([5] * 100)) - 1 == 10


def test_hsm_classes_partition_vocab():
    v = zipf_vocab(1000)
    layer = HsmFreq.from_counts(8, v.counts)
    sizes = np.diff(layer.cuts)
    assert sizes.sum() == 1000 and np.all(sizes >= 1)


# -- D-softmax ---------------------------------------------------------------

def test_dsoftmax_star_single_band_is_full(rng):
    full = FullSoftmax(6, 20, seed=2)
    ds = DSoftmax(6, [1, 19], [6], "projected", seed=0)
    W = full.params["W"]
    ds.params["band.0.W"][...] = W[:, :1]
    ds.params["band.1.W"][...] = W[:, 1:]
    ds.params["proj.1"][...] = np.eye(6)
    h = rng.standard_normal((4, 6))
    assert np.max(np.abs(ds.log_distribution(h) - full.log_distribution(h))) < 1e-12


def test_dsoftmax_disjoint_slices():
    ds = DSoftmax(16, [10, 20, 30], [4, 2], "disjoint")
    widths = [s.stop - s.start for s in ds.slices]
    assert widths == [10, 4, 2]
    assert ds.slices[0].start == 0 and ds.slices[2].stop == 16
    with pytest.raises(ValueError):
        DSoftmax(4, [10, 20], [4], "disjoint")


def test_make_layer_errors():
    with pytest.raises(ValueError, match="valid layers"):
        make_layer("sampled", 4, 10)
    with pytest.raises(ValueError):
        make_layer("adaptive", 4, 10)
    with pytest.raises(ValueError):
        make_layer("hsm", 4, 10)
