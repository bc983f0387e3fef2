"""Seven-layer raw-waveform CNN, label head, and the GRL domain head.

Parameters live in a plain ``dict[str, np.ndarray]``; every forward pass binds
them into a fresh :class:`~dysarthric_dann.autodiff.Graph`.  Frozen parameters
are bound as constant inputs so no gradient is ever computed for them.
"""

from __future__ import annotations

import copy
import hashlib
import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from . import nn
from .autodiff import Graph, backward
from .nn import Conv1dSpec, GrlSpec


class InvalidConfigError(ValueError):
    pass


class MissingTargetLabelsError(ValueError):
    pass


class EmptyBatchError(ValueError):
    pass


class CheckpointError(ValueError):
    pass


NUM_LAYERS = 7


def _default_convs() -> tuple[Conv1dSpec, ...]:
    channels = [16, 32, 32, 64, 64, 128, 128]
    kernels = [64, 32, 16, 8, 8, 4, 4]
    specs, prev = [], 1
    for ch, k in zip(channels, kernels):
        specs.append(Conv1dSpec(prev, ch, k, stride=2))
        prev = ch
    return tuple(specs)


@dataclass(frozen=True)
class ModelConfig:
    input_length: int = 24000
    conv_layers: tuple[Conv1dSpec, ...] = field(default_factory=_default_convs)
    pool_after_layer: tuple[bool, ...] = (False,) * NUM_LAYERS
    pool_window: int = 2
    pool_stride: int = 2
    hidden_dim: int = 128
    num_classes: int = 10
    # True: features -> dense+sigmoid -> linear 10-way head; False: linear head only
    sigmoid_hidden: bool = True
    # squash applied to the pooled shared features: "sigmoid" bounds them to (0, 1)
    feature_activation: str = "none"
    # "leaky_relu" is composed as relu(x) - slope * relu(-x)
    conv_activation: str = "relu"
    leaky_slope: float = 0.01
    # "mean": global average over time; "flatten": keep every (channel, time) cell
    feature_pooling: str = "mean"
    # conv weight init: "glorot" uniform(+-sqrt(6/(fan_in+fan_out))) or "he" uniform(+-sqrt(6/fan_in))
    conv_init: str = "glorot"

    def __post_init__(self):
        object.__setattr__(self, "conv_layers", tuple(self.conv_layers))
        object.__setattr__(self, "pool_after_layer", tuple(bool(p) for p in self.pool_after_layer))
        self.validate()

    def validate(self) -> None:
        if len(self.conv_layers) != NUM_LAYERS:
            raise InvalidConfigError(f"need exactly {NUM_LAYERS} conv layers, got {len(self.conv_layers)}")
        if len(self.pool_after_layer) != NUM_LAYERS:
            raise InvalidConfigError("pool_after_layer needs one flag per conv layer")
        if self.num_classes != 10:
            raise InvalidConfigError("num_classes is fixed at 10 digits")
        if self.conv_layers[0].in_channels != 1:
            raise InvalidConfigError("first layer takes a mono waveform (1 channel)")
        for prev, spec in zip(self.conv_layers, self.conv_layers[1:]):
            if spec.in_channels != prev.out_channels:
                raise InvalidConfigError(f"channel chain broken at {spec}")
        if self.conv_activation not in ("relu", "leaky_relu"):
            raise InvalidConfigError(f"unknown conv_activation {self.conv_activation!r}")
        if self.feature_activation not in ("none", "sigmoid"):
            raise InvalidConfigError(f"unknown feature_activation {self.feature_activation!r}")
        if self.conv_init not in ("glorot", "he"):
            raise InvalidConfigError(f"unknown conv_init {self.conv_init!r}")
        if self.feature_pooling not in ("mean", "flatten"):
            raise InvalidConfigError(f"unknown feature_pooling {self.feature_pooling!r}")
        if self.hidden_dim < 1:
            raise InvalidConfigError("hidden_dim must be positive")
        lengths = self.time_lengths()
        if lengths[-1] < 1:
            raise InvalidConfigError(f"feature length collapses to {lengths[-1]}")

    def time_lengths(self) -> list[int]:
        """Time length after each conv (+pool) layer."""
        length, out = self.input_length, []
        for spec, pool in zip(self.conv_layers, self.pool_after_layer):
            length = spec.output_length(length) if length >= 1 else 0
            if pool and length >= 1:
                length = (length - self.pool_window) // self.pool_stride + 1 if length >= self.pool_window else 0
            out.append(max(length, 0))
        return out

    @property
    def feature_dim(self) -> int:
        channels = self.conv_layers[-1].out_channels
        return channels * self.time_lengths()[-1] if self.feature_pooling == "flatten" else channels

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        data = dict(data)
        if "conv_layers" in data:
            data["conv_layers"] = tuple(
                c if isinstance(c, Conv1dSpec) else Conv1dSpec(**c) for c in data["conv_layers"]
            )
        return cls(**data)

    def digest(self) -> bytes:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).digest()

    @classmethod
    def desk(cls, input_length: int = 500) -> "ModelConfig":
        """Small preset sized for single-core CPU experiments on the synthetic corpus.

        Conv weights use He-uniform init: Glorot halves the signal at each
        ReLU layer, leaving features nearly constant across inputs.  Shared
        features are the flattened last feature map squashed by a sigmoid.  With a time-averaged, unbounded feature vector a constant
        lambda=1.5 adversary either blows the domain loss up or flattens the
        features to one point before the label head learns anything.
        """
        channels = [8, 8, 12, 16, 16, 24, 24]
        kernels = [12, 8, 6, 5, 3, 3, 3]
        strides = [3, 2, 2, 2, 1, 1, 1]
        specs, prev = [], 1
        for ch, k, st in zip(channels, kernels, strides):
            specs.append(Conv1dSpec(prev, ch, k, stride=st))
            prev = ch
        return cls(
            input_length=input_length,
            conv_layers=tuple(specs),
            hidden_dim=32,
            feature_activation="sigmoid",
            feature_pooling="flatten",
            conv_init="he",
        )


# -- deterministic initialisation -------------------------------------------

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MASK = (1 << 64) - 1


class SplitMix64:
    """SplitMix64 stream, vectorised with wrapping uint64 arithmetic."""

    def __init__(self, seed: int):
        self.state = int(seed) & _MASK

    def next_u64(self, n: int) -> np.ndarray:
        steps = np.arange(1, n + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = np.uint64(self.state) + steps * _GOLDEN
            self.state = (self.state + n * int(_GOLDEN)) & _MASK
            z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
            return z ^ (z >> np.uint64(31))

    def uniform(self, low: float, high: float, shape) -> np.ndarray:
        n = int(np.prod(shape))
        unit = (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)
        return (low + (high - low) * unit).reshape(shape)


def _glorot(rng: SplitMix64, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, shape)


def _he(rng: SplitMix64, shape, fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, shape)


def _init_params(config: ModelConfig, rng: SplitMix64, domain_head: bool) -> dict[str, np.ndarray]:
    params: dict[str, np.ndarray] = {}
    for i, spec in enumerate(config.conv_layers, start=1):
        k = spec.kernel_size
        shape, fan_in, fan_out = (spec.out_channels, spec.in_channels, k), spec.in_channels * k, spec.out_channels * k
        if config.conv_init == "he":
            params[f"conv{i}.weight"] = _he(rng, shape, fan_in)
        else:
            params[f"conv{i}.weight"] = _glorot(rng, shape, fan_in, fan_out)
        params[f"conv{i}.bias"] = np.zeros(spec.out_channels)
    feat = config.feature_dim
    if config.sigmoid_hidden:
        params["label.hidden.weight"] = _glorot(rng, (feat, config.hidden_dim), feat, config.hidden_dim)
        params["label.hidden.bias"] = np.zeros(config.hidden_dim)
        head_in = config.hidden_dim
    else:
        head_in = feat
    params["label.out.weight"] = _glorot(rng, (head_in, config.num_classes), head_in, config.num_classes)
    params["label.out.bias"] = np.zeros(config.num_classes)
    if domain_head:
        params["domain.weight"] = _glorot(rng, (feat, 2), feat, 2)
        params["domain.bias"] = np.zeros(2)
    return params


# -- models -----------------------------------------------------------------


@dataclass
class Batch:
    """Waveforms ``[B, L]`` with optional word labels ``[B]``."""

    x: np.ndarray
    words: np.ndarray | None = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        if self.x.ndim == 1:
            self.x = self.x[None, :]
        if self.words is not None:
            self.words = np.asarray(self.words, dtype=np.int64)

    def __len__(self) -> int:
        return self.x.shape[0]


class BaselineModel:
    """Shared seven-layer extractor plus the 10-way label head."""

    has_domain_head = False

    def __init__(self, config: ModelConfig, params: dict[str, np.ndarray]):
        self.config = config
        self.params = params
        self.trainable: frozenset[str] | None = None  # None means every parameter

    # parameter groups
    def feature_names(self) -> list[str]:
        return [n for n in self.params if n.startswith("conv")]

    def label_names(self) -> list[str]:
        return [n for n in self.params if n.startswith("label.")]

    def domain_names(self) -> list[str]:
        return [n for n in self.params if n.startswith("domain.")]

    def trainable_names(self) -> list[str]:
        return [n for n in self.params if self.trainable is None or n in self.trainable]

    def bind(self, graph: Graph, constant: Iterable[str] = ()) -> dict[str, int]:
        constant = set(constant)
        ids = {}
        for name, arr in self.params.items():
            if name in constant or (self.trainable is not None and name not in self.trainable):
                ids[name] = graph.input(arr, name=name)
            else:
                ids[name] = graph.parameter(arr, name=name)
        return ids

    def extract(self, graph: Graph, ids: dict[str, int], x: np.ndarray) -> int:
        cfg = self.config
        if x.ndim != 2 or x.shape[1] != cfg.input_length:
            raise ValueError(f"expected waveforms [B, {cfg.input_length}], got {x.shape}")
        h = graph.input(x[:, None, :], name="waveform")
        for i, spec in enumerate(cfg.conv_layers, start=1):
            h = nn.conv1d(graph, h, ids[f"conv{i}.weight"], ids[f"conv{i}.bias"], spec, name=f"conv{i}")
            h = self._activate(graph, h)
            if cfg.pool_after_layer[i - 1]:
                h = nn.maxpool1d(graph, h, cfg.pool_window, cfg.pool_stride)
        squash = cfg.feature_activation == "sigmoid"
        name = None if squash else "features"
        if cfg.feature_pooling == "flatten":
            h = graph.reshape(h, (x.shape[0], cfg.feature_dim), name=name)
        else:
            h = graph.mean(h, axis=2, name=name)
        return graph.sigmoid(h, name="features") if squash else h

    def _activate(self, graph: Graph, h: int) -> int:
        if self.config.conv_activation == "relu":
            return graph.relu(h)
        neg = graph.relu(graph.scale(h, -1.0))
        return graph.add(graph.relu(h), graph.scale(neg, -self.config.leaky_slope))

    def label_logits(self, graph: Graph, ids: dict[str, int], features: int) -> int:
        h = features
        if self.config.sigmoid_hidden:
            h = nn.dense(graph, h, ids["label.hidden.weight"], ids["label.hidden.bias"])
            h = graph.sigmoid(h)
        return nn.dense(graph, h, ids["label.out.weight"], ids["label.out.bias"], name="label_logits")

    def logits(self, x: np.ndarray) -> np.ndarray:
        graph = Graph()
        ids = self.bind(graph, constant=self.params)
        return graph.value(self.label_logits(graph, ids, self.extract(graph, ids, np.atleast_2d(x))))

    def predict(self, x: np.ndarray, chunk: int = 64) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        out = [self.logits(x[i : i + chunk]).argmax(axis=1) for i in range(0, len(x), chunk)]
        return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)

    def label_loss(self, batch: Batch) -> tuple[Graph, int]:
        """Graph and node id of the mean word cross-entropy on ``batch``."""
        if len(batch) == 0:
            raise EmptyBatchError("empty batch")
        if batch.words is None:
            raise MissingTargetLabelsError("label loss needs word labels")
        graph = Graph()
        ids = self.bind(graph)
        logits = self.label_logits(graph, ids, self.extract(graph, ids, batch.x))
        return graph, nn.softmax_cross_entropy(graph, logits, batch.words, name="label_loss")

    def gradients(self, graph: Graph, loss: int) -> dict[str, np.ndarray]:
        grads = backward(graph, loss)
        return {graph.nodes[i].name: g for i, g in grads.items()}

    def clone(self) -> "BaselineModel":
        twin = copy.copy(self)
        twin.params = {k: v.copy() for k, v in self.params.items()}
        return twin

    def with_trainable(self, names: Iterable[str] | None) -> "BaselineModel":
        """A view sharing parameter storage but restricting what gets updated."""
        view = copy.copy(self)
        view.trainable = None if names is None else frozenset(names)
        return view

    def checksum(self, names: Iterable[str] | None = None) -> str:
        h = hashlib.sha256()
        for name in names if names is not None else self.params:
            h.update(name.encode())
            h.update(np.ascontiguousarray(self.params[name]).tobytes())
        return h.hexdigest()


@dataclass
class LossBreakdown:
    label_source: float
    label_target: float
    domain_source: float
    domain_target: float
    total: float
    alpha: int = 1
    lam: float = 0.0
    graph: Graph | None = field(default=None, repr=False, compare=False)
    training_node: int | None = field(default=None, repr=False, compare=False)
    objective_node: int | None = field(default=None, repr=False, compare=False)

    def recomputed_total(self) -> float:
        return self.label_source + self.alpha * self.label_target - self.lam * (
            self.domain_source + self.domain_target
        )


class DannModel(BaselineModel):
    """Extractor with a label head and a GRL-fed two-way domain head.

    ``lam > 0`` reverses the domain gradient into the extractor (DANN);
    ``lam < 0`` lets it through scaled by ``-lam`` (MTL).  ``alpha`` switches
    the target-domain word loss on or off.
    """

    has_domain_head = True

    def __init__(self, config: ModelConfig, params: dict[str, np.ndarray], lam: float, alpha: int):
        super().__init__(config, params)
        if alpha not in (0, 1):
            raise ValueError("alpha is a boolean switch (0 or 1)")
        self.lam = float(lam)
        self.alpha = int(alpha)

    def domain_logits(self, graph: Graph, ids: dict[str, int], features: int) -> int:
        reversed_ = nn.grl(graph, features, GrlSpec(self.lam))
        return nn.dense(graph, reversed_, ids["domain.weight"], ids["domain.bias"], name="domain_logits")

    def predict_domain(self, x: np.ndarray) -> np.ndarray:
        graph = Graph()
        ids = self.bind(graph, constant=self.params)
        feats = self.extract(graph, ids, np.atleast_2d(x))
        return graph.value(self.domain_logits(graph, ids, feats)).argmax(axis=1)


def build_baseline(config: ModelConfig, seed: int) -> BaselineModel:
    config.validate()
    return BaselineModel(config, _init_params(config, SplitMix64(seed), domain_head=False))


def build_dann(config: ModelConfig, lam: float, alpha: int, seed: int) -> DannModel:
    config.validate()
    return DannModel(config, _init_params(config, SplitMix64(seed), domain_head=True), lam, alpha)


def _check_batches(model: DannModel, source: Batch, target: Batch | None) -> None:
    if len(source) == 0:
        raise EmptyBatchError("source batch is empty")
    if source.words is None:
        raise MissingTargetLabelsError("source batch needs word labels")
    if target is None or len(target) == 0:
        if model.alpha == 1 or model.lam != 0.0:
            raise EmptyBatchError("target batch required when alpha=1 or lambda != 0")
    elif model.alpha == 1 and target.words is None:
        raise MissingTargetLabelsError("alpha=1 needs target word labels")


def adversarial_loss(model: DannModel, source: Batch, target: Batch | None) -> LossBreakdown:
    """Build the two-domain objective on one source and one target batch.

    The reported ``total`` is ``Ly_s + alpha*Ly_t - lam*(Ld_s + Ld_t)``.  The
    node that gets differentiated (``training_node``) is
    ``Ly_s + alpha*Ly_t + Ld_s + Ld_t`` with the domain terms reached through
    the GRL, so the extractor sees ``-lam`` times the domain gradient while
    the domain head simply minimises its own loss.
    """
    _check_batches(model, source, target)
    has_target = target is not None and len(target) > 0
    graph = Graph()
    ids = model.bind(graph)
    fs = model.extract(graph, ids, source.x)
    lys = nn.softmax_cross_entropy(graph, model.label_logits(graph, ids, fs), source.words, name="Ly_s")
    lyt = None
    if has_target:
        ft = model.extract(graph, ids, target.x)
        if model.alpha == 1:
            lyt = nn.softmax_cross_entropy(graph, model.label_logits(graph, ids, ft), target.words, name="Ly_t")
    lds = nn.domain_cross_entropy(graph, model.domain_logits(graph, ids, fs), np.zeros(len(source), int), name="Ld_s")
    ldt = None
    if has_target:
        ldt = nn.domain_cross_entropy(
            graph, model.domain_logits(graph, ids, ft), np.ones(len(target), int), name="Ld_t"
        )
    label_part = lys if lyt is None else graph.add(lys, lyt)
    domain_part = lds if ldt is None else graph.add(lds, ldt)
    training = graph.add(label_part, domain_part, name="training")

    zero = graph.input(np.asarray(0.0))
    objective = graph.add(
        graph.add(lys, graph.scale(lyt if lyt is not None else zero, model.alpha)),
        graph.scale(domain_part, -model.lam),
        name="E",
    )
    v = lambda i: float(graph.value(i)) if i is not None else 0.0  # noqa: E731
    return LossBreakdown(
        label_source=v(lys),
        label_target=v(lyt),
        domain_source=v(lds),
        domain_target=v(ldt),
        total=v(objective),
        alpha=model.alpha,
        lam=model.lam,
        graph=graph,
        training_node=training,
        objective_node=objective,
    )


def mtl_reference_loss(model: DannModel, source: Batch, target: Batch, coefficient: float) -> tuple[Graph, int]:
    """Multi-task objective built with an ordinary pass-through layer.

    The domain head is trained on features held constant (coefficient 1, as
    the head in :func:`adversarial_loss` is), while the extractor receives
    ``coefficient`` times the domain gradient through a plain identity layer
    into a head held constant.  Node creation order mirrors
    :func:`adversarial_loss` so gradient sums accumulate in the same order.
    """
    _check_batches(model, source, target)
    graph = Graph()
    ids = model.bind(graph)
    fs = model.extract(graph, ids, source.x)
    lys = nn.softmax_cross_entropy(graph, model.label_logits(graph, ids, fs), source.words)
    ft = model.extract(graph, ids, target.x)
    lyt = None
    if model.alpha == 1:
        lyt = nn.softmax_cross_entropy(graph, model.label_logits(graph, ids, ft), target.words)
    frozen = {n: graph.input(model.params[n], name=n) for n in model.domain_names()}
    zeros, ones = np.zeros(len(source), int), np.ones(len(target), int)

    def head(feats, wb):
        return nn.dense(graph, feats, wb["domain.weight"], wb["domain.bias"])

    # pass-through copies (extractor side), created in the same slots the GRLs occupy
    pass_s = head(graph.reshape(fs, graph.value(fs).shape), frozen)
    head_s = head(graph.input(graph.value(fs)), ids)
    lds_b = nn.domain_cross_entropy(graph, pass_s, zeros)
    lds_a = nn.domain_cross_entropy(graph, head_s, zeros)
    pass_t = head(graph.reshape(ft, graph.value(ft).shape), frozen)
    head_t = head(graph.input(graph.value(ft)), ids)
    ldt_b = nn.domain_cross_entropy(graph, pass_t, ones)
    ldt_a = nn.domain_cross_entropy(graph, head_t, ones)
    label_part = lys if lyt is None else graph.add(lys, lyt)
    domain_part = graph.add(
        graph.add(lds_a, ldt_a), graph.scale(graph.add(lds_b, ldt_b), coefficient)
    )
    return graph, graph.add(label_part, domain_part, name="training")


LAST_CONV = f"conv{NUM_LAYERS}"


def freeze_for_adaptation(model: BaselineModel, unfreeze: Iterable[str] = ("last-conv-layer", "label-head")):
    """View of ``model`` where only the requested groups receive updates.

    Groups: ``last-conv-layer``, ``label-head``, ``domain-head``, ``all``.
    """
    names: set[str] = set()
    for group in unfreeze:
        if group == "all":
            return model.with_trainable(None)
        if group == "last-conv-layer":
            names |= {n for n in model.params if n.startswith(LAST_CONV + ".")}
        elif group == "label-head":
            names |= set(model.label_names())
        elif group == "domain-head":
            names |= set(model.domain_names())
        else:
            raise ValueError(f"unknown parameter group {group!r}")
    return model.with_trainable(names)


# -- checkpoint format ------------------------------------------------------
#
# b"DANNCKPT" | u32 version | 32-byte sha256 of the model config |
# u32 block count | blocks: u16 name length, utf-8 name, u8 ndim,
# ndim x u32 dims, float64 little-endian data.  All integers little-endian.

MAGIC = b"DANNCKPT"
VERSION = 1


def save_checkpoint(model: BaselineModel, path: str | Path) -> None:
    parts = [MAGIC, struct.pack("<I", VERSION), model.config.digest(), struct.pack("<I", len(model.params))]
    for name, arr in model.params.items():
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw + struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


def read_checkpoint(path: str | Path) -> tuple[bytes, dict[str, np.ndarray]]:
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise CheckpointError(f"{path}: bad magic")
    try:
        (version,) = struct.unpack_from("<I", data, 8)
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported version {version}")
        digest = data[12:44]
        (count,) = struct.unpack_from("<I", data, 44)
        pos, params = 48, {}
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", data, pos)
            pos += 2
            name = data[pos : pos + nlen].decode("utf-8")
            pos += nlen
            (ndim,) = struct.unpack_from("<B", data, pos)
            pos += 1
            shape = struct.unpack_from(f"<{ndim}I", data, pos)
            pos += 4 * ndim
            n = int(np.prod(shape)) if ndim else 1
            if pos + 8 * n > len(data):
                raise CheckpointError(f"{path}: truncated block {name}")
            params[name] = np.frombuffer(data, dtype="<f8", count=n, offset=pos).astype(np.float64).reshape(shape)
            pos += 8 * n
    except struct.error as exc:
        raise CheckpointError(f"{path}: truncated") from exc
    return digest, params


def load_checkpoint(model: BaselineModel, path: str | Path) -> None:
    """Copy checkpoint values into ``model``'s parameter arrays in place."""
    digest, params = read_checkpoint(path)
    if digest != model.config.digest():
        raise CheckpointError(f"{path}: config digest does not match the model")
    if set(params) != set(model.params):
        raise CheckpointError(f"{path}: parameter names differ from the model")
    for name, arr in params.items():
        if arr.shape != model.params[name].shape:
            raise CheckpointError(f"{path}: shape mismatch for {name}")
        model.params[name][...] = arr
