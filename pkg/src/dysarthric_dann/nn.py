"""Layer and loss builders on top of :mod:`dysarthric_dann.autodiff`.

Each builder takes a graph plus node ids and returns the id of its output
node.  Shapes are validated up front so errors name the layer, not the op.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Graph, ShapeMismatchError


class LabelOutOfRangeError(ValueError):
    pass


@dataclass(frozen=True)
class Conv1dSpec:
    in_channels: int
    out_channels: int
    kernel_size: int
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        for name in ("in_channels", "out_channels", "kernel_size", "stride"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be positive")
        if self.padding < 0:
            raise ValueError("padding must be non-negative")

    def output_length(self, input_length: int) -> int:
        return (input_length + 2 * self.padding - self.kernel_size) // self.stride + 1


@dataclass(frozen=True)
class GrlSpec:
    # lambda > 0 reverses (DANN), lambda < 0 passes a scaled gradient (MTL)
    lam: float


def conv1d(graph: Graph, x: int, weights: int, bias: int, spec: Conv1dSpec, name=None) -> int:
    xs, ws, bs = (graph.value(i).shape for i in (x, weights, bias))
    expected_w = (spec.out_channels, spec.in_channels, spec.kernel_size)
    if len(xs) != 3 or xs[1] != spec.in_channels:
        raise ShapeMismatchError(f"conv1d {name or ''}: input {xs} does not have {spec.in_channels} channels")
    if ws != expected_w or bs != (spec.out_channels,):
        raise ShapeMismatchError(f"conv1d {name or ''}: weights {ws} / bias {bs}, expected {expected_w}")
    if spec.output_length(xs[2]) < 1:
        raise ShapeMismatchError(f"conv1d {name or ''}: input length {xs[2]} too short for {spec}")
    return graph.conv1d(x, weights, bias, stride=spec.stride, padding=spec.padding, name=name)


def maxpool1d(graph: Graph, x: int, window: int, stride: int, name=None) -> int:
    return graph.maxpool1d(x, window, stride, name=name)


def dense(graph: Graph, x: int, weights: int, bias: int, name=None) -> int:
    xs, ws, bs = (graph.value(i).shape for i in (x, weights, bias))
    if len(xs) != 2 or len(ws) != 2 or xs[1] != ws[0] or bs != (ws[1],):
        raise ShapeMismatchError(f"dense {name or ''}: input {xs}, weights {ws}, bias {bs}")
    return graph.bias_add(graph.matmul(x, weights), bias, name=name)


def grl(graph: Graph, x: int, spec: GrlSpec, name=None) -> int:
    return graph.grl(x, spec.lam, name=name)


def _check_labels(labels, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim != 1 or not np.issubdtype(labels.dtype, np.integer):
        labels = labels.astype(np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise LabelOutOfRangeError(f"labels must lie in [0, {num_classes})")
    return labels.astype(np.int64)


def softmax_cross_entropy(graph: Graph, logits: int, labels, name=None) -> int:
    shape = graph.value(logits).shape
    if len(shape) != 2:
        raise ShapeMismatchError(f"softmax_cross_entropy: logits must be [batch, C], got {shape}")
    labels = _check_labels(labels, shape[1])
    if labels.shape[0] != shape[0]:
        raise ShapeMismatchError(f"softmax_cross_entropy: {labels.shape[0]} labels for batch {shape[0]}")
    return graph.softmax_xent(logits, labels, name=name)


def domain_cross_entropy(graph: Graph, logits: int, domains, name=None) -> int:
    """Two-way softmax loss; domain 0 is healthy, 1 is dysarthric."""
    shape = graph.value(logits).shape
    if len(shape) != 2 or shape[1] != 2:
        raise ShapeMismatchError(f"domain_cross_entropy: logits must be [batch, 2], got {shape}")
    return softmax_cross_entropy(graph, logits, domains, name=name)


def binary_cross_entropy(graph: Graph, logits: int, targets, name=None) -> int:
    targets = np.asarray(targets, dtype=np.float64)
    if np.any((targets < 0) | (targets > 1)):
        raise LabelOutOfRangeError("binary targets must lie in [0, 1]")
    return graph.binary_xent(logits, targets.reshape(graph.value(logits).shape), name=name)
