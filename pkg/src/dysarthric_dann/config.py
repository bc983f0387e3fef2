"""Line-oriented ``key = value`` run configuration.

One flat namespace covers every :class:`TrainConfig` field and a flattened
view of :class:`ModelConfig` (the conv stack is spelled as parallel
comma-separated lists).  ``preset`` picks the base architecture that the
remaining model keys override.  Blank lines and ``#`` comments are ignored::

    preset = desk
    seed = 3
    learning_rate = 0.001
    conv_channels = 8, 8, 12, 16, 16, 24, 24
"""

from __future__ import annotations

import dataclasses
from pathlib import Path
from typing import Mapping

from .experiment import TrainConfig
from .model import NUM_LAYERS, InvalidConfigError, ModelConfig
from .nn import Conv1dSpec


class ConfigError(ValueError):
    pass


PRESETS = ("paper", "desk")

_TRAIN_TYPES = {f.name: f.type for f in dataclasses.fields(TrainConfig)}
_MODEL_SCALARS = {
    "input_length": "int",
    "pool_window": "int",
    "pool_stride": "int",
    "hidden_dim": "int",
    "num_classes": "int",
    "sigmoid_hidden": "bool",
    "feature_activation": "str",
    "feature_pooling": "str",
    "conv_activation": "str",
    "conv_init": "str",
    "leaky_slope": "float",
}
_MODEL_LISTS = ("conv_channels", "conv_kernels", "conv_strides", "conv_padding", "pool_after_layer")

TRAIN_KEYS = tuple(_TRAIN_TYPES)
MODEL_KEYS = ("preset", *_MODEL_SCALARS, *_MODEL_LISTS)
ALL_KEYS = TRAIN_KEYS + MODEL_KEYS


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        if key not in ALL_KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        values[key] = value
    return values


def load_config(path: str | Path) -> dict[str, str]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text, str(path))


def _bool(key: str, value: str) -> bool:
    v = value.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {value!r}")


def _coerce(key: str, kind: str, value: str):
    try:
        if kind == "int":
            return int(value)
        if kind == "float":
            return float(value)
    except ValueError as exc:
        raise ConfigError(f"{key}: expected {kind}, got {value!r}") from exc
    if kind == "bool":
        return _bool(key, value)
    return value


def _int_list(key: str, value: str) -> list[int]:
    try:
        out = [int(v) for v in value.split(",")]
    except ValueError as exc:
        raise ConfigError(f"{key}: expected comma-separated integers, got {value!r}") from exc
    if len(out) != NUM_LAYERS:
        raise ConfigError(f"{key}: need {NUM_LAYERS} entries, got {len(out)}")
    return out


def train_config(values: Mapping[str, str], base: TrainConfig | None = None) -> TrainConfig:
    kwargs = {k: _coerce(k, _TRAIN_TYPES[k], v) for k, v in values.items() if k in _TRAIN_TYPES}
    try:
        return dataclasses.replace(base or TrainConfig(), **kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def model_config(values: Mapping[str, str]) -> ModelConfig:
    preset = values.get("preset", "paper")
    if preset not in PRESETS:
        raise ConfigError(f"preset: expected one of {PRESETS}, got {preset!r}")
    base = ModelConfig.desk() if preset == "desk" else ModelConfig()
    fields = {k: getattr(base, k) for k in _MODEL_SCALARS}
    fields.update({k: _coerce(k, t, values[k]) for k, t in _MODEL_SCALARS.items() if k in values})

    convs = base.conv_layers
    lists = {
        "conv_channels": [c.out_channels for c in convs],
        "conv_kernels": [c.kernel_size for c in convs],
        "conv_strides": [c.stride for c in convs],
        "conv_padding": [c.padding for c in convs],
    }
    for key in lists:
        if key in values:
            lists[key] = _int_list(key, values[key])
    pool = list(base.pool_after_layer)
    if "pool_after_layer" in values:
        parts = [p.strip() for p in values["pool_after_layer"].split(",")]
        if len(parts) != NUM_LAYERS:
            raise ConfigError(f"pool_after_layer: need {NUM_LAYERS} entries, got {len(parts)}")
        pool = [_bool("pool_after_layer", p) for p in parts]

    specs, prev = [], 1
    try:
        for ch, k, st, pad in zip(*lists.values()):
            specs.append(Conv1dSpec(prev, ch, k, stride=st, padding=pad))
            prev = ch
        return ModelConfig(conv_layers=tuple(specs), pool_after_layer=tuple(pool), **fields)
    except (InvalidConfigError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def dump_config(train: TrainConfig, model: ModelConfig) -> str:
    """Every key written out explicitly, so the file alone reproduces the run."""
    lines = ["# training"]
    lines += [f"{k} = {getattr(train, k)}" for k in TRAIN_KEYS]
    lines += ["", "# model", "preset = paper"]
    lines += [f"{k} = {str(getattr(model, k)).lower() if isinstance(getattr(model, k), bool) else getattr(model, k)}"
              for k in _MODEL_SCALARS]
    convs = model.conv_layers
    lines.append("conv_channels = " + ", ".join(str(c.out_channels) for c in convs))
    lines.append("conv_kernels = " + ", ".join(str(c.kernel_size) for c in convs))
    lines.append("conv_strides = " + ", ".join(str(c.stride) for c in convs))
    lines.append("conv_padding = " + ", ".join(str(c.padding) for c in convs))
    lines.append("pool_after_layer = " + ", ".join(str(p).lower() for p in model.pool_after_layer))
    return "\n".join(lines) + "\n"
