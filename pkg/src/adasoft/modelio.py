"""Save and restore a language model, its output layer and vocabulary."""

from __future__ import annotations

from . import checkpoint
from .corpus import Vocabulary
from .layers import AdaptiveSoftmax, DSoftmax, FullSoftmax, HsmFreq, OutputLayer
from .lm import ElmanLM, FeedforwardLM
from .partition import Partition


def layer_meta(layer: OutputLayer) -> dict:
    return {"kind": layer.kind, "d": layer.d, "k": layer.k, **layer.describe()}


def build_layer(meta: dict, dtype=None) -> OutputLayer:
    kind, d, k = meta["kind"], meta["d"], meta["k"]
    if kind == "full":
        return FullSoftmax(d, k, dtype=dtype, bias=meta.get("bias", True))
    if kind == "adaptive":
        part = Partition(meta["k_h"], meta["tail_sizes"], meta["cluster_dims"])
        return AdaptiveSoftmax(d, part, dtype=dtype)
    if kind == "hsm":
        return HsmFreq(d, meta["class_cuts"], dtype=dtype)
    if kind in ("dsoftmax", "dsoftmax-star"):
        return DSoftmax(d, meta["band_sizes"], meta["band_dims"], meta["variant"], dtype=dtype)
    raise checkpoint.CheckpointError(f"unknown layer kind {kind!r} in checkpoint")


def save_model(path, model, vocab: Vocabulary, extra: dict | None = None) -> None:
    meta = {
        "model": model.config(),
        "layer": layer_meta(model.output),
        "vocab": {"words": list(vocab.words), "counts": [int(c) for c in vocab.counts]},
        **(extra or {}),
    }
    checkpoint.save(path, model.all_params(), meta)


def load_model(path):
    """Returns (model, vocabulary, meta)."""
    arrays, meta = checkpoint.load(path)
    dtype = arrays["P"].dtype
    layer = build_layer(meta["layer"], dtype=dtype)
    cfg = meta["model"]
    if cfg["type"] == "ff":
        model = FeedforwardLM(cfg["k"], layer, cfg["window"], cfg["emb_dim"], cfg["sigma"],
                              dtype=dtype, pad_index=cfg["pad_index"])
    elif cfg["type"] == "elman":
        model = ElmanLM(cfg["k"], layer, cfg["emb_dim"], cfg["sigma"], dtype=dtype,
                        pad_index=cfg["pad_index"])
    else:
        raise checkpoint.CheckpointError(f"unknown model type {cfg['type']!r}")
    params = model.all_params()
    if set(params) != set(arrays):
        missing = sorted(set(params) ^ set(arrays))
        raise checkpoint.CheckpointError(f"checkpoint arrays do not match the model: {missing}")
    for name, arr in arrays.items():
        if params[name].shape != arr.shape:
            raise checkpoint.CheckpointError(f"{name}: shape {arr.shape}, expected {params[name].shape}")
        params[name][...] = arr
    vocab = Vocabulary.from_counts(meta["vocab"]["counts"], meta["vocab"]["words"])
    return model, vocab, meta
