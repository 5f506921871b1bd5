"""Adaptive softmax toolkit: GEMM cost model, vocabulary partitioner,
output layers and a small language-model harness."""

from .corpus import Vocabulary, build_vocabulary, coverage, decode, encode
from .costmodel import CostModelParams, calibrate, fit_hinge, g, predicted_speedup
from .layers import AdaptiveSoftmax, DSoftmax, FullSoftmax, HsmFreq, make_layer
from .partition import Partition, optimize_fixed_j, partition_cost, sweep_clusters

__version__ = "0.1.0"

__all__ = [
    "AdaptiveSoftmax", "CostModelParams", "DSoftmax", "FullSoftmax", "HsmFreq", "Partition",
    "Vocabulary", "build_vocabulary", "calibrate", "coverage", "decode", "encode", "fit_hinge", "g",
    "make_layer", "optimize_fixed_j", "partition_cost", "predicted_speedup", "sweep_clusters",
]
