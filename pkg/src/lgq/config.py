"""Flat ``key = value`` run configuration with typed parsing.

Blank lines and ``#`` comments are ignored. Every key must be known; ``K`` is
required. Lists (``fsq_levels``) are comma separated; booleans are
``true``/``false``.
"""

from __future__ import annotations

import typing
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .trainer import DataConfig, TrainConfig

REQUIRED = ("K",)
DATA_KEYS = {"data_mode": "mode", "n_modes": "n_modes", "sigma": "sigma", "n_samples": "n_samples",
             "data_dim": "data_dim", "noise": "noise"}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)
    export_drift: bool = False
    export_latents: bool = False
    val_fraction: float = 0.0


_RUN_KEYS = ("export_drift", "export_latents", "val_fraction")


def _field_types() -> dict[str, tuple[str, type]]:
    out = {}
    hints = typing.get_type_hints(TrainConfig)
    for f in fields(TrainConfig):
        out[f.name] = ("train", hints[f.name])
    dhints = typing.get_type_hints(DataConfig)
    for key, attr in DATA_KEYS.items():
        out[key] = ("data", dhints[attr])
    rhints = typing.get_type_hints(RunConfig)
    for key in _RUN_KEYS:
        out[key] = ("run", rhints[key])
    return out


KNOWN_KEYS = _field_types()


def _convert(raw: str, typ):
    if typ is bool:
        low = raw.lower()
        if low not in ("true", "false"):
            raise ValueError(f"expected true or false, got {raw!r}")
        return low == "true"
    if typ is int:
        return int(raw)
    if typ is float:
        return float(raw)
    if typ is str:
        return raw.strip("\"'")
    if typing.get_origin(typ) is tuple:
        return tuple(int(v) for v in raw.split(",") if v.strip())
    raise TypeError(f"unsupported config type {typ}")


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    values: dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line.strip()!r}")
        key, raw = (s.strip() for s in body.split("=", 1))
        if key not in KNOWN_KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = _convert(raw, KNOWN_KEYS[key][1])
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from exc
    for key in REQUIRED:
        if key not in values:
            raise ConfigError(f"{source}: missing required key {key!r}")
    train_kw = {k: v for k, v in values.items() if KNOWN_KEYS[k][0] == "train"}
    data_kw = {DATA_KEYS[k]: v for k, v in values.items() if KNOWN_KEYS[k][0] == "data"}
    run_kw = {k: v for k, v in values.items() if KNOWN_KEYS[k][0] == "run"}
    try:
        cfg = RunConfig(TrainConfig(**train_kw), DataConfig(**data_kw), **run_kw)
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    if not 0.0 <= cfg.val_fraction < 1.0:
        raise ConfigError(f"{source}: val_fraction must be in [0, 1)")
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, str(path))


def format_config(cfg: RunConfig) -> str:
    """Render a RunConfig back to the key-value format (all keys explicit)."""
    lines = []
    for f in fields(TrainConfig):
        lines.append((f.name, getattr(cfg.train, f.name)))
    for key, attr in DATA_KEYS.items():
        lines.append((key, getattr(cfg.data, attr)))
    for key in _RUN_KEYS:
        lines.append((key, getattr(cfg, key)))
    out = []
    for k, v in lines:
        if isinstance(v, bool):
            v = "true" if v else "false"
        elif isinstance(v, tuple):
            v = ",".join(str(i) for i in v)
        elif isinstance(v, float):
            v = repr(v)
        out.append(f"{k} = {v}")
    return "\n".join(out) + "\n"


def with_seed(cfg: RunConfig, seed: int | None) -> RunConfig:
    if seed is None:
        return cfg
    return replace(cfg, train=replace(cfg.train, seed=seed))
