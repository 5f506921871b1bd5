"""Flat ``key=value`` run configuration with typed defaults."""

from __future__ import annotations

from pathlib import Path

DEFAULTS: dict[str, object] = {
    # model
    "model": "ff",
    "window": 5,
    "emb_dim": 64,
    "d": 128,
    "sigma": "sigmoid",
    "layer": "full",
    "output_init": "uniform",
    # optimisation
    "step": 0.1,
    "eps": 1e-10,
    "clip": 1.0,
    "epochs": 5,
    "batch": 128,
    "unroll": 20,
    "weight_decay": 0.0,
    "seed": 0,
    "precision": "float64",
    "threads": 0,
    # data
    "max_vocab": 0,
    "min_count": 1,
    "lowercase": False,
    "max_tokens": 0,
    "valid_chars": 5_000_000,
    "valid_tokens": 0,
    # output-layer structure
    "clusters": 2,
    "decay": 4.0,
    "d_min": 8,
    "hsm_classes": 0,
}

CHOICES = {
    "model": ("ff", "elman"),
    "sigma": ("sigmoid", "tanh"),
    "layer": ("full", "adaptive", "hsm", "dsoftmax", "dsoftmax-star"),
    "output_init": ("uniform", "zero"),
    "precision": ("float64", "float32"),
}


class ConfigError(ValueError):
    pass


def _coerce(key: str, value):
    default = DEFAULTS[key]
    if isinstance(value, str):
        value = value.strip()
        if isinstance(default, bool):
            low = value.lower()
            if low not in ("1", "0", "true", "false", "yes", "no"):
                raise ConfigError(f"{key}: expected a boolean, got {value!r}")
            value = low in ("1", "true", "yes")
        elif isinstance(default, int):
            try:
                value = int(value)
            except ValueError:
                raise ConfigError(f"{key}: expected an integer, got {value!r}") from None
        elif isinstance(default, float):
            try:
                value = float(value)
            except ValueError:
                raise ConfigError(f"{key}: expected a number, got {value!r}") from None
    if key in CHOICES and value not in CHOICES[key]:
        raise ConfigError(f"{key}: {value!r} is not one of {', '.join(CHOICES[key])}")
    return value


def parse_lines(lines) -> dict:
    out = {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw.strip()!r}")
        if key not in DEFAULTS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        out[key] = _coerce(key, value)
    return out


def load_config(path=None, overrides: dict | None = None) -> dict:
    """Defaults, then the file, then explicit overrides (None values ignored)."""
    cfg = dict(DEFAULTS)
    if path is not None:
        cfg.update(parse_lines(Path(path).read_text().splitlines()))
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in DEFAULTS:
            raise ConfigError(f"unknown key {key!r}")
        cfg[key] = _coerce(key, value)
    return cfg


def format_config(cfg: dict, extra: dict | None = None) -> str:
    lines = [f"{k}={_fmt(v)}" for k, v in cfg.items()]
    for k, v in (extra or {}).items():
        lines.append(f"# {k}={_fmt(v)}")
    return "\n".join(lines) + "\n"


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def echo_config(out_dir, cfg: dict, extra: dict | None = None) -> Path:
    path = Path(out_dir) / "config.txt"
    path.write_text(format_config(cfg, extra))
    return path
