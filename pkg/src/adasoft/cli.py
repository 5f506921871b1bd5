"""Command-line entry point: calibrate, partition, train, eval, bench."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import costmodel, linalg, partition as part_mod
from .checkpoint import CheckpointError
from .config import ConfigError, echo_config, load_config
from .corpus import Vocabulary, build_vocabulary, encode, read_tokens, tokenize
from .layers import LAYER_KINDS, make_layer
from .lm import ElmanLM, FeedforwardLM, TrainConfig, TrainingDiverged, perplexity, train
from .modelio import load_model, save_model

log = logging.getLogger("adasoft")


class UsageError(Exception):
    pass


def _echo_args(out_dir: Path, args: argparse.Namespace, extra: dict | None = None) -> None:
    lines = []
    for key, value in sorted(vars(args).items()):
        if key in ("func",):
            continue
        lines.append(f"{key}={value}")
    for key, value in (extra or {}).items():
        lines.append(f"# {key}={value}")
    (out_dir / "config.txt").write_text("\n".join(lines) + "\n")


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _int_list(text: str) -> list[int]:
    try:
        if ":" in text:
            lo, hi = (int(x) for x in text.split(":"))
            return costmodel.default_k_grid(lo, hi)
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'a,b,c' or 'lo:hi', got {text!r}") from None


# ---------------------------------------------------------------------------
# calibrate

def cmd_calibrate(args) -> int:
    out = _out_dir(args.out)
    if args.synthetic:
        try:
            c, lam, k0 = (float(x) for x in args.synthetic.split(","))
        except ValueError:
            raise UsageError("--synthetic expects 'c,lambda,k0'") from None
        gen = costmodel.CostModelParams(c, lam, k0, args.batch)
        samples = costmodel.synthetic_samples(gen, args.k_grid)
    else:
        with linalg.pinned_threads(args.threads or None):
            samples = costmodel.collect_samples(args.dim, args.batch, args.k_grid, args.repeats,
                                                dtype=np.dtype(args.precision).type,
                                                threads=args.threads or None)
    costmodel.write_samples(samples, out / "samples.csv")
    report = costmodel.fit_hinge(samples)
    report.params.save(out / "params.txt")
    (out / "fit_report.txt").write_text("\n".join(report.lines()) + "\n")
    from .plotting import plot_calibration
    plot_calibration(samples, report.params, out / "calibration.png")
    _echo_args(out, args, {"blas_threads": linalg.blas_threads()})
    for line in report.lines()[:3]:
        print(line)
    return 0


# ---------------------------------------------------------------------------
# partition

def _load_vocab(path) -> Vocabulary:
    return Vocabulary.load(path)


def cmd_partition(args) -> int:
    out = _out_dir(args.out)
    vocab = _load_vocab(args.vocab)
    params = costmodel.CostModelParams.load(args.params)
    batch = args.batch
    n = len(vocab)
    rows, half = part_mod.two_cluster_curve(vocab, params, batch)
    part_mod.write_curve(rows, out / "head_curve.csv", ["k_h", "cost_seconds"])
    full_cost = costmodel.g(params, n, batch)
    from .plotting import plot_cluster_sweep, plot_two_cluster
    plot_two_cluster(rows, half, full_cost, out / "head_curve.png")

    if args.clusters == "sweep":
        entries, best = part_mod.sweep_clusters(vocab, args.j_max, params, batch, args.stride,
                                                args.method)
        part_mod.write_curve([(e.J, e.cost) for e in entries], out / "cluster_curve.csv",
                             ["J", "cost_seconds"])
        plot_cluster_sweep([(e.J, e.cost) for e in entries], out / "cluster_curve.png")
        chosen, cost = best.partition, best.cost
    else:
        try:
            J = int(args.clusters)
        except ValueError:
            raise UsageError("--clusters expects an integer or 'sweep'") from None
        chosen = part_mod.optimize_fixed_j(vocab, J, params, batch, args.stride, args.method)
        cost = part_mod.partition_cost(chosen, params, batch)
    dims = part_mod.assign_capacities(chosen, args.dim, args.decay, args.d_min)
    chosen = chosen.with_dims(dims)
    chosen.save(out / "partition.txt")
    speedup = costmodel.predicted_speedup(params, n, cost, batch)
    _echo_args(out, args)
    print(f"k={n} J={chosen.J} k_h={chosen.k_h} tail_sizes={list(chosen.tail_sizes)} "
          f"cluster_dims={dims}")
    print(f"modelled cost={cost:.6g}s full softmax={full_cost:.6g}s predicted speedup={speedup:.3f}")
    return 0


# ---------------------------------------------------------------------------
# train / eval

def _split_corpus(cfg, corpus_path, valid_path):
    """Returns (train_tokens, valid_tokens, note)."""
    lower = cfg["lowercase"]
    if valid_path:
        train_toks = read_tokens(corpus_path, lower)
        valid_toks = read_tokens(valid_path, lower)
        note = f"validation file {valid_path}"
    else:
        text = Path(corpus_path).read_text(encoding="utf-8")
        hold = min(cfg["valid_chars"], len(text) // 10)
        cut = len(text) - hold
        # do not split a word
        while cut < len(text) and not text[cut].isspace():
            cut += 1
        train_toks, valid_toks = tokenize(text[:cut], lower), tokenize(text[cut:], lower)
        note = f"last {len(text) - cut} characters held out for validation"
    if cfg["max_tokens"]:
        train_toks = train_toks[:cfg["max_tokens"]]
    if cfg["valid_tokens"]:
        valid_toks = valid_toks[:cfg["valid_tokens"]]
    if not train_toks:
        raise UsageError("training corpus is empty")
    return train_toks, valid_toks, note


def _make_partition(cfg, vocab, args):
    if args.partition:
        part = part_mod.Partition.load(args.partition, vocab)
    elif args.params:
        params = costmodel.CostModelParams.load(args.params)
        part = part_mod.optimize_fixed_j(vocab, cfg["clusters"], params, cfg["batch"])
    else:
        raise UsageError(f"layer {cfg['layer']!r} needs --partition or --params")
    if not part.cluster_dims:
        part = part.with_dims(part_mod.assign_capacities(part, cfg["d"], cfg["decay"], cfg["d_min"]))
    return part


def build_model(cfg: dict, vocab: Vocabulary, partition=None):
    dtype = np.dtype(cfg["precision"]).type
    k, d, seed = len(vocab), cfg["d"], cfg["seed"]
    rng = np.random.default_rng(seed)
    layer = make_layer(cfg["layer"], d, k, partition=partition, counts=vocab.counts,
                       n_classes=cfg["hsm_classes"] or None, seed=rng, dtype=dtype)
    if cfg["output_init"] == "zero":
        for p in layer.params.values():
            p[...] = 0
    if cfg["model"] == "ff":
        return FeedforwardLM(k, layer, cfg["window"], cfg["emb_dim"], cfg["sigma"], seed=rng,
                             dtype=dtype, pad_index=vocab.unk_index)
    return ElmanLM(k, layer, cfg["emb_dim"], cfg["sigma"], seed=rng, dtype=dtype,
                   pad_index=vocab.unk_index)


def _train_config(cfg) -> TrainConfig:
    return TrainConfig(step=cfg["step"], eps=cfg["eps"], clip=cfg["clip"], epochs=cfg["epochs"],
                       batch=cfg["batch"], unroll=cfg["unroll"], seed=cfg["seed"],
                       weight_decay=cfg["weight_decay"])


def cmd_train(args) -> int:
    overrides = {"layer": args.layer, "epochs": args.epochs, "batch": args.batch, "seed": args.seed,
                 "d": args.d, "model": args.model, "precision": args.precision,
                 "threads": args.threads}
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects key=value, got {item!r}")
        overrides[key.strip()] = value
    cfg = load_config(args.config, overrides)
    out = _out_dir(args.out)
    train_toks, valid_toks, split_note = _split_corpus(cfg, args.corpus, args.valid)
    vocab = build_vocabulary(train_toks, cfg["max_vocab"] or None, cfg["min_count"])
    vocab.save(out / "vocab.txt")
    partition = None
    if cfg["layer"] in ("adaptive", "dsoftmax", "dsoftmax-star"):
        partition = _make_partition(cfg, vocab, args)
        partition.save(out / "partition.txt")
    model = build_model(cfg, vocab, partition)
    train_stream = encode(train_toks, vocab)
    valid_stream = encode(valid_toks, vocab) if len(valid_toks) > 1 else None
    meta = {"seed": cfg["seed"], "config": cfg, "split": split_note}
    echo_config(out, cfg, {"split": split_note, "vocab_size": len(vocab),
                           "train_tokens": len(train_stream),
                           "valid_tokens": 0 if valid_stream is None else len(valid_stream),
                           "blas_threads": cfg["threads"] or linalg.blas_threads()})

    def checkpoint(entry):
        extra = dict(meta, epoch=entry.epoch, ppl_valid=entry.ppl_valid)
        save_model(out / f"checkpoint_epoch{entry.epoch}.ckpt", model, vocab, extra)
        save_model(out / "model.ckpt", model, vocab, extra)

    with linalg.pinned_threads(cfg["threads"] or None):
        logs = train(model, train_stream, valid_stream, _train_config(cfg), out / "log.csv",
                     on_epoch=checkpoint)
    from .plotting import plot_training
    if valid_stream is not None:
        plot_training(logs, out / "training.png")
    last = logs[-1]
    print(f"epochs={len(logs)} steps={last.step} train_loss={last.loss:.4f} "
          f"ppl_valid={last.ppl_valid:.4f} seconds={last.seconds:.1f}")
    return 0


def cmd_eval(args) -> int:
    model, vocab, meta = load_model(args.checkpoint)
    lower = bool(meta.get("config", {}).get("lowercase", False))
    tokens = read_tokens(args.corpus, lower)
    if args.max_tokens:
        tokens = tokens[:args.max_tokens]
    stream = encode(tokens, vocab)
    ppl = perplexity(model, stream)
    print(f"ppl={ppl!r}")
    out = Path(args.out) if args.out else Path(args.checkpoint).with_name("eval.csv")
    new = not out.exists()
    with open(out, "a", newline="") as f:
        w = csv.writer(f)
        if new:
            w.writerow(["checkpoint", "corpus", "tokens", "ppl"])
        w.writerow([str(args.checkpoint), str(args.corpus), len(stream), repr(ppl)])
    return 0


# ---------------------------------------------------------------------------
# bench

def cmd_bench(args) -> int:
    from .bench import run_bench, write_bench
    from .plotting import plot_bench
    from .synthetic import zipf_vocabulary

    kinds = [k.strip() for k in args.layers.split(",") if k.strip()]
    bad = [k for k in kinds if k not in LAYER_KINDS]
    if bad:
        raise UsageError(f"unknown layer(s) {', '.join(bad)}; valid layers: {', '.join(LAYER_KINDS)}")
    out = _out_dir(args.out)
    vocab = zipf_vocabulary(args.vocab_size, args.zipf_exponent)
    dtype = np.dtype(args.precision).type
    partition = None
    if any(k != "full" and k != "hsm" for k in kinds):
        if args.partition:
            partition = part_mod.Partition.load(args.partition, vocab)
        else:
            if args.params:
                params = costmodel.CostModelParams.load(args.params)
            else:
                report = costmodel.calibrate(args.dim, args.batch, costmodel.default_k_grid(8, 16384),
                                             repeats=5, dtype=dtype, threads=args.threads or None)
                params = report.params
                params.save(out / "params.txt")
            if args.clusters == "sweep":
                _, best = part_mod.sweep_clusters(vocab, args.j_max, params, args.batch)
                partition = best.partition
            else:
                partition = part_mod.optimize_fixed_j(vocab, int(args.clusters), params, args.batch)
        if not partition.cluster_dims:
            partition = partition.with_dims(
                part_mod.assign_capacities(partition, args.dim, args.decay, args.d_min))
        partition.save(out / "partition.txt")
    rows = run_bench(kinds, args.dim, vocab, args.batch, partition, args.repeats, dtype,
                     args.threads or None, args.seed)
    write_bench(rows, out / "bench.csv")
    plot_bench(rows, out / "bench.png")
    _echo_args(out, args, {"blas_threads": args.threads or linalg.blas_threads()})
    for r in rows:
        print(f"{r.layer:>14s} k={r.k} d={r.d} B={r.batch} {r.seconds * 1e3:9.3f} ms  "
              f"speedup {r.speedup:.2f}x")
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="adasoft", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("calibrate", help="time GEMMs and fit the hinge cost model")
    c.add_argument("--dim", type=int, default=2048)
    c.add_argument("--batch", type=int, default=128)
    c.add_argument("--k-grid", type=_int_list, default=costmodel.default_k_grid(8, 65536),
                   help="comma list or lo:hi for powers of two (default 8:65536)")
    c.add_argument("--repeats", type=int, default=11)
    c.add_argument("--precision", choices=("float32", "float64"), default="float32")
    c.add_argument("--synthetic", metavar="C,LAMBDA,K0",
                   help="fit noiseless samples generated from these parameters instead of timing")
    c.add_argument("--threads", type=int, default=0)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_calibrate)

    c = sub.add_parser("partition", help="plan head and tail clusters by dynamic programming")
    c.add_argument("--vocab", required=True, help="vocabulary file: word<TAB>count per line")
    c.add_argument("--params", required=True, help="cost-model params file")
    c.add_argument("--clusters", default="2", help="number of tail clusters J, or 'sweep'")
    c.add_argument("--j-max", type=int, default=15)
    c.add_argument("--batch", type=int, default=128)
    c.add_argument("--stride", type=int, default=1)
    c.add_argument("--method", choices=("auto", "scan", "monotone"), default="auto")
    c.add_argument("--dim", type=int, default=512, help="hidden size d for capacity assignment")
    c.add_argument("--decay", type=float, default=4.0)
    c.add_argument("--d-min", type=int, default=8)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_partition)

    c = sub.add_parser("train", help="train a language model")
    c.add_argument("--corpus", required=True)
    c.add_argument("--valid")
    c.add_argument("--layer", choices=LAYER_KINDS)
    c.add_argument("--partition")
    c.add_argument("--params")
    c.add_argument("--config")
    c.add_argument("--model", choices=("ff", "elman"))
    c.add_argument("--epochs", type=int)
    c.add_argument("--batch", type=int)
    c.add_argument("--d", type=int)
    c.add_argument("--seed", type=int)
    c.add_argument("--precision", choices=("float32", "float64"))
    c.add_argument("--threads", type=int)
    c.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_train)

    c = sub.add_parser("eval", help="perplexity of a checkpoint on a corpus")
    c.add_argument("--checkpoint", required=True)
    c.add_argument("--corpus", required=True)
    c.add_argument("--max-tokens", type=int, default=0)
    c.add_argument("--out", help="CSV to append to (default: eval.csv next to the checkpoint)")
    c.set_defaults(func=cmd_eval)

    c = sub.add_parser("bench", help="forward+backward timing of output layers")
    c.add_argument("--layers", default="full,adaptive")
    c.add_argument("--dim", type=int, default=128)
    c.add_argument("--vocab-size", type=int, default=50000)
    c.add_argument("--zipf-exponent", type=float, default=1.0)
    c.add_argument("--batch", type=int, default=64)
    c.add_argument("--params")
    c.add_argument("--partition")
    c.add_argument("--clusters", default="sweep")
    c.add_argument("--j-max", type=int, default=5)
    c.add_argument("--decay", type=float, default=4.0)
    c.add_argument("--d-min", type=int, default=8)
    c.add_argument("--repeats", type=int, default=7)
    c.add_argument("--precision", choices=("float32", "float64"), default="float32")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--threads", type=int, default=0)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        parser.print_usage(sys.stderr)
        print(f"adasoft: error: {exc}", file=sys.stderr)
        return 2
    except (costmodel.CalibrationError, CheckpointError, part_mod.PartitionError,
            TrainingDiverged, ValueError, OSError) as exc:
        print(f"adasoft: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
