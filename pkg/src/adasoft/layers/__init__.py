"""Output layers with exact log-probabilities and analytic gradients."""

from .adaptive import AdaptiveSoftmax
from .base import LayerInputError, LogProbBatch, OutputLayer, log_softmax
from .dsoftmax import DSoftmax
from .full import FullSoftmax
from .hsm import HsmFreq, sqrt_frequency_classes

LAYER_KINDS = ("full", "adaptive", "hsm", "dsoftmax", "dsoftmax-star")


def make_layer(kind: str, d: int, k: int, *, partition=None, counts=None, n_classes=None,
               seed=0, dtype=None) -> OutputLayer:
    """Build an output layer by name.

    ``adaptive`` and both D-softmax variants need a partition; ``hsm`` needs
    the frequency-sorted word counts.
    """
    if kind == "full":
        return FullSoftmax(d, k, seed=seed, dtype=dtype)
    if kind in ("adaptive", "dsoftmax", "dsoftmax-star"):
        if partition is None:
            raise ValueError(f"layer {kind!r} needs a partition")
        if partition.k != k:
            raise ValueError(f"partition covers {partition.k} words, vocabulary has {k}")
        if kind == "adaptive":
            return AdaptiveSoftmax(d, partition, seed=seed, dtype=dtype)
        variant = "disjoint" if kind == "dsoftmax" else "projected"
        return DSoftmax.from_partition(d, partition, variant, seed=seed, dtype=dtype)
    if kind == "hsm":
        if counts is None:
            raise ValueError("layer 'hsm' needs word counts")
        return HsmFreq.from_counts(d, counts, n_classes, seed=seed, dtype=dtype)
    raise ValueError(f"unknown layer {kind!r}; valid layers: {', '.join(LAYER_KINDS)}")


__all__ = ["AdaptiveSoftmax", "DSoftmax", "FullSoftmax", "HsmFreq", "LayerInputError",
           "LogProbBatch", "OutputLayer", "LAYER_KINDS", "log_softmax", "make_layer",
           "sqrt_frequency_classes"]
