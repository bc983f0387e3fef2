"""Reverse-mode automatic differentiation over dense float64 tensors.

A :class:`Graph` is an append-only list of nodes.  Builder methods evaluate
eagerly (define-by-run) and the whole graph can be re-evaluated with new
input bindings through :func:`forward`, which is what the finite-difference
oracle relies on.

Tensors are plain ``numpy.ndarray`` objects of dtype float64.  Shapes must
match exactly; the only broadcasting allowed is a python scalar times a
tensor (``scale``) and the trailing-axis bias add (``bias_add``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Mapping

import numpy as np


class AutodiffError(Exception):
    pass


class ShapeMismatchError(AutodiffError):
    pass


class UnboundInputError(AutodiffError):
    pass


class NonScalarLossError(AutodiffError):
    pass


class OpKind(str, Enum):
    INPUT = "input"
    PARAMETER = "parameter"
    ADD = "add"
    MUL = "mul"
    MATMUL = "matmul"
    BIAS_ADD = "bias_add"
    CONV1D = "conv1d"
    MAXPOOL1D = "maxpool1d"
    RELU = "relu"
    SIGMOID = "sigmoid"
    SOFTMAX_XENT = "softmax-xent"
    BINARY_XENT = "binary-xent"
    GRL = "grl"
    RESHAPE = "reshape"
    MEAN = "mean"
    SCALE = "scale"


@dataclass(eq=False)
class Node:
    id: int
    op: OpKind
    parents: tuple[int, ...]
    value: np.ndarray | None = None
    grad: np.ndarray | None = None
    attrs: dict[str, Any] = field(default_factory=dict)
    name: str | None = None
    requires_grad: bool = False
    # per-op scratch kept from the last forward pass (softmax probs, argmax, ...)
    cache: dict[str, Any] = field(default_factory=dict, repr=False)

    def describe(self) -> str:
        label = f" '{self.name}'" if self.name else ""
        return f"node {self.id} ({self.op.value}{label})"


def _as_tensor(value) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    return arr


# ---------------------------------------------------------------------------
# op rules: forward(node, *parent_values) -> value, backward(node, g, *pv) -> grads


def _check_same(node: Node, a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ShapeMismatchError(f"{node.describe()}: shapes {a.shape} and {b.shape} differ")


def _add_fwd(node, a, b):
    _check_same(node, a, b)
    return a + b


def _add_bwd(node, g, a, b):
    return g, g


def _mul_fwd(node, a, b):
    _check_same(node, a, b)
    return a * b


def _mul_bwd(node, g, a, b):
    return g * b, g * a


def _matmul_fwd(node, a, b):
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatchError(f"{node.describe()}: cannot multiply {a.shape} by {b.shape}")
    return a @ b


def _matmul_bwd(node, g, a, b):
    return g @ b.T, a.T @ g


def _bias_add_fwd(node, x, b):
    if b.ndim != 1 or x.ndim < 1 or x.shape[-1] != b.shape[0]:
        raise ShapeMismatchError(f"{node.describe()}: bias {b.shape} does not fit {x.shape}")
    return x + b


def _bias_add_bwd(node, g, x, b):
    return g, g.reshape(-1, b.shape[0]).sum(axis=0)


def _conv_out_len(length: int, kernel: int, stride: int, padding: int) -> int:
    return (length + 2 * padding - kernel) // stride + 1


def _conv1d_fwd(node, x, w, b):
    stride, padding = node.attrs["stride"], node.attrs["padding"]
    if x.ndim != 3 or w.ndim != 3 or b.ndim != 1:
        raise ShapeMismatchError(
            f"{node.describe()}: expected x [B,C,L], w [O,C,K], b [O]; got {x.shape}, {w.shape}, {b.shape}"
        )
    batch, in_ch, length = x.shape
    out_ch, w_in, kernel = w.shape
    if w_in != in_ch or b.shape[0] != out_ch:
        raise ShapeMismatchError(f"{node.describe()}: channel mismatch x {x.shape}, w {w.shape}, b {b.shape}")
    out_len = _conv_out_len(length, kernel, stride, padding)
    if out_len < 1:
        raise ShapeMismatchError(f"{node.describe()}: output length {out_len} < 1")
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding)))
    # windows: [B, C, out_len, K] (strided view), gathered into [B, out_len, C*K]
    win = np.lib.stride_tricks.sliding_window_view(x, kernel, axis=2)[:, :, ::stride][:, :, :out_len]
    cols = np.ascontiguousarray(win.transpose(0, 2, 1, 3)).reshape(batch * out_len, in_ch * kernel)
    node.cache["cols"] = cols
    out = cols @ w.reshape(out_ch, in_ch * kernel).T  # one GEMM: [B*out_len, O]
    out += b
    return np.ascontiguousarray(out.reshape(batch, out_len, out_ch).transpose(0, 2, 1))


def _conv1d_bwd(node, g, x, w, b):
    stride, padding = node.attrs["stride"], node.attrs["padding"]
    batch, in_ch, length = x.shape
    out_ch, _, kernel = w.shape
    out_len = g.shape[2]
    cols = node.cache["cols"]
    gt = np.ascontiguousarray(g.transpose(0, 2, 1)).reshape(batch * out_len, out_ch)
    need = node.cache.get("need", (True, True, True))
    gx = gw = gb = None
    if need[1]:
        gw = (gt.T @ cols).reshape(w.shape)
    if need[2]:
        gb = gt.sum(axis=0)
    if need[0]:
        # per-tap input gradients, scattered back tap by tap
        gcols = (gt @ w.reshape(out_ch, in_ch * kernel)).reshape(batch, out_len, in_ch, kernel)
        taps = np.ascontiguousarray(gcols.transpose(3, 0, 2, 1))  # [K, B, C, out_len]
        padded = np.zeros((batch, in_ch, length + 2 * padding))
        span = stride * (out_len - 1) + 1
        for k in range(kernel):
            padded[:, :, k : k + span : stride] += taps[k]
        gx = padded[:, :, padding : padding + length] if padding else padded
    return gx, gw, gb


def _maxpool_fwd(node, x):
    window, stride = node.attrs["window"], node.attrs["stride"]
    if x.ndim < 1 or window > x.shape[-1] or window < 1 or stride < 1:
        raise ShapeMismatchError(f"{node.describe()}: window {window} does not fit input {x.shape}")
    out_len = (x.shape[-1] - window) // stride + 1
    win = np.lib.stride_tricks.sliding_window_view(x, window, axis=-1)[..., ::stride, :][..., :out_len, :]
    arg = win.argmax(axis=-1)  # first maximal index on ties
    node.cache["arg"] = arg
    return np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]


def _maxpool_bwd(node, g, x):
    stride = node.attrs["stride"]
    arg = node.cache["arg"]
    out_len = arg.shape[-1]
    idx = arg + stride * np.arange(out_len)
    gx = np.zeros(x.shape)
    flat_g = gx.reshape(-1, x.shape[-1])
    rows = np.repeat(np.arange(flat_g.shape[0]), out_len)
    np.add.at(flat_g, (rows, idx.reshape(-1)), g.reshape(-1))
    return (gx,)


def _relu_fwd(node, x):
    return np.maximum(x, 0.0)


def _relu_bwd(node, g, x):
    return (g * (x > 0),)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _sigmoid_fwd(node, x):
    return _sigmoid(x)


def _sigmoid_bwd(node, g, x):
    s = node.value
    return (g * s * (1.0 - s),)


def _softmax_xent_fwd(node, logits):
    labels = node.attrs["labels"]
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeMismatchError(f"{node.describe()}: logits {logits.shape} vs labels {labels.shape}")
    shifted = logits - logits.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logz
    node.cache["probs"] = np.exp(logp)
    return np.asarray(-logp[np.arange(len(labels)), labels].mean())


def _softmax_xent_bwd(node, g, logits):
    labels = node.attrs["labels"]
    grad = node.cache["probs"].copy()
    grad[np.arange(len(labels)), labels] -= 1.0
    return (grad * (g / len(labels)),)


def _binary_xent_fwd(node, logits):
    targets = node.attrs["targets"]
    if logits.shape != targets.shape:
        raise ShapeMismatchError(f"{node.describe()}: logits {logits.shape} vs targets {targets.shape}")
    # log(1 + e^z) - t z, evaluated stably
    loss = np.maximum(logits, 0.0) - logits * targets + np.log1p(np.exp(-np.abs(logits)))
    return np.asarray(loss.mean())


def _binary_xent_bwd(node, g, logits):
    targets = node.attrs["targets"]
    return ((_sigmoid(logits) - targets) * (g / logits.size),)


def _grl_fwd(node, x):
    return x.copy()


def _grl_bwd(node, g, x):
    return (g * (-node.attrs["lam"]),)


def _reshape_fwd(node, x):
    shape = node.attrs["shape"]
    if int(np.prod(shape)) != x.size:
        raise ShapeMismatchError(f"{node.describe()}: cannot reshape {x.shape} to {shape}")
    return x.reshape(shape).copy()


def _reshape_bwd(node, g, x):
    return (g.reshape(x.shape),)


def _mean_fwd(node, x):
    axis = node.attrs["axis"]
    if axis is not None and not -x.ndim <= axis < x.ndim:
        raise ShapeMismatchError(f"{node.describe()}: axis {axis} out of range for {x.shape}")
    return np.asarray(x.mean(axis=axis))


def _mean_bwd(node, g, x):
    axis = node.attrs["axis"]
    if axis is None:
        return (np.full(x.shape, g / x.size),)
    return (np.broadcast_to(np.expand_dims(g, axis) / x.shape[axis], x.shape).copy(),)


def _scale_fwd(node, x):
    return x * node.attrs["factor"]


def _scale_bwd(node, g, x):
    return (g * node.attrs["factor"],)


_RULES: dict[OpKind, tuple[Callable, Callable]] = {
    OpKind.ADD: (_add_fwd, _add_bwd),
    OpKind.MUL: (_mul_fwd, _mul_bwd),
    OpKind.MATMUL: (_matmul_fwd, _matmul_bwd),
    OpKind.BIAS_ADD: (_bias_add_fwd, _bias_add_bwd),
    OpKind.CONV1D: (_conv1d_fwd, _conv1d_bwd),
    OpKind.MAXPOOL1D: (_maxpool_fwd, _maxpool_bwd),
    OpKind.RELU: (_relu_fwd, _relu_bwd),
    OpKind.SIGMOID: (_sigmoid_fwd, _sigmoid_bwd),
    OpKind.SOFTMAX_XENT: (_softmax_xent_fwd, _softmax_xent_bwd),
    OpKind.BINARY_XENT: (_binary_xent_fwd, _binary_xent_bwd),
    OpKind.GRL: (_grl_fwd, _grl_bwd),
    OpKind.RESHAPE: (_reshape_fwd, _reshape_bwd),
    OpKind.MEAN: (_mean_fwd, _mean_bwd),
    OpKind.SCALE: (_scale_fwd, _scale_bwd),
}


class Graph:
    """Append-only computation graph; node ids are list positions."""

    def __init__(self) -> None:
        self.nodes: list[Node] = []
        self.parameter_ids: set[int] = set()

    def __len__(self) -> int:
        return len(self.nodes)

    def value(self, node_id: int) -> np.ndarray:
        return self.nodes[node_id].value

    # -- leaves ---------------------------------------------------------

    def input(self, value=None, name: str | None = None) -> int:
        node = Node(len(self.nodes), OpKind.INPUT, (), name=name)
        if value is not None:
            node.value = _as_tensor(value)
        self.nodes.append(node)
        return node.id

    def parameter(self, array: np.ndarray, name: str | None = None) -> int:
        """Leaf whose value *is* ``array`` (no copy): in-place updates are seen."""
        if not isinstance(array, np.ndarray) or array.dtype != np.float64:
            raise TypeError("parameters must be float64 numpy arrays")
        node = Node(len(self.nodes), OpKind.PARAMETER, (), value=array, name=name, requires_grad=True)
        self.nodes.append(node)
        self.parameter_ids.add(node.id)
        return node.id

    # -- ops ------------------------------------------------------------

    def _op(self, op: OpKind, parents: tuple[int, ...], name=None, **attrs) -> int:
        for p in parents:
            if not 0 <= p < len(self.nodes):
                raise AutodiffError(f"unknown parent node {p}")
        node = Node(len(self.nodes), op, parents, attrs=attrs, name=name)
        node.requires_grad = any(self.nodes[p].requires_grad for p in parents)
        self.nodes.append(node)
        if all(self.nodes[p].value is not None for p in parents):
            self._evaluate(node)
        return node.id

    def add(self, a: int, b: int, name=None) -> int:
        return self._op(OpKind.ADD, (a, b), name)

    def mul(self, a: int, b: int, name=None) -> int:
        return self._op(OpKind.MUL, (a, b), name)

    def matmul(self, a: int, b: int, name=None) -> int:
        return self._op(OpKind.MATMUL, (a, b), name)

    def bias_add(self, x: int, b: int, name=None) -> int:
        return self._op(OpKind.BIAS_ADD, (x, b), name)

    def conv1d(self, x: int, w: int, b: int, stride: int = 1, padding: int = 0, name=None) -> int:
        return self._op(OpKind.CONV1D, (x, w, b), name, stride=int(stride), padding=int(padding))

    def maxpool1d(self, x: int, window: int, stride: int, name=None) -> int:
        return self._op(OpKind.MAXPOOL1D, (x,), name, window=int(window), stride=int(stride))

    def relu(self, x: int, name=None) -> int:
        return self._op(OpKind.RELU, (x,), name)

    def sigmoid(self, x: int, name=None) -> int:
        return self._op(OpKind.SIGMOID, (x,), name)

    def softmax_xent(self, logits: int, labels, name=None) -> int:
        labels = np.asarray(labels, dtype=np.int64)
        return self._op(OpKind.SOFTMAX_XENT, (logits,), name, labels=labels)

    def binary_xent(self, logits: int, targets, name=None) -> int:
        return self._op(OpKind.BINARY_XENT, (logits,), name, targets=_as_tensor(targets))

    def grl(self, x: int, lam: float, name=None) -> int:
        return self._op(OpKind.GRL, (x,), name, lam=float(lam))

    def reshape(self, x: int, shape, name=None) -> int:
        return self._op(OpKind.RESHAPE, (x,), name, shape=tuple(int(s) for s in shape))

    def mean(self, x: int, axis: int | None = None, name=None) -> int:
        return self._op(OpKind.MEAN, (x,), name, axis=axis)

    def scale(self, x: int, factor: float, name=None) -> int:
        return self._op(OpKind.SCALE, (x,), name, factor=float(factor))

    # -- evaluation -----------------------------------------------------

    def _evaluate(self, node: Node) -> None:
        fwd, _ = _RULES[node.op]
        value = fwd(node, *(self.nodes[p].value for p in node.parents))
        node.value = np.asarray(value, dtype=np.float64)


def forward(graph: Graph, bindings: Mapping[int, Any] | None = None) -> np.ndarray:
    """Re-evaluate every node; ``bindings`` maps input ids to new values.

    Inputs without a binding keep the value they already hold; an input that
    has never been given a value raises :class:`UnboundInputError`.
    """
    bindings = dict(bindings or {})
    for key in bindings:
        if not 0 <= key < len(graph.nodes) or graph.nodes[key].op is not OpKind.INPUT:
            raise AutodiffError(f"binding for {key} does not name an input node")
    for node in graph.nodes:
        if node.op is OpKind.INPUT:
            if node.id in bindings:
                node.value = _as_tensor(bindings[node.id])
            elif node.value is None:
                raise UnboundInputError(f"{node.describe()} is unbound")
        elif node.op is not OpKind.PARAMETER:
            graph._evaluate(node)
    if not graph.nodes:
        raise AutodiffError("empty graph")
    return graph.nodes[-1].value


def backward(graph: Graph, loss: int) -> dict[int, np.ndarray]:
    """Accumulate d(loss)/d(node) for every node; return parameter gradients."""
    root = graph.nodes[loss]
    if root.value is None:
        raise AutodiffError("run forward before backward")
    if root.value.size != 1:
        raise NonScalarLossError(f"{root.describe()} has shape {root.value.shape}")
    for node in graph.nodes:
        node.grad = None
    root.grad = np.ones(root.value.shape)
    for node in reversed(graph.nodes[: loss + 1]):
        if node.grad is None or not node.parents or not node.requires_grad:
            continue
        parents = [graph.nodes[p] for p in node.parents]
        if node.op is OpKind.CONV1D:
            node.cache["need"] = tuple(p.requires_grad for p in parents)
        _, bwd = _RULES[node.op]
        grads = bwd(node, node.grad, *(p.value for p in parents))
        for parent, g in zip(parents, grads):
            if g is None or not parent.requires_grad:
                continue
            if parent.grad is None:
                parent.grad = np.array(g, dtype=np.float64)
            else:
                parent.grad = parent.grad + g
    for node in graph.nodes:
        if node.grad is None and node.value is not None:
            node.grad = np.zeros(node.value.shape)
    return {pid: graph.nodes[pid].grad for pid in sorted(graph.parameter_ids)}


def finite_difference_gradient(graph: Graph, loss: int, param: int, epsilon: float = 1e-5) -> np.ndarray:
    """Central-difference estimate of d(loss)/d(param), entry by entry.

    The parameter array is perturbed in place and restored; the graph is
    re-evaluated afterwards so node values match the unperturbed state.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    node = graph.nodes[param]
    if node.op not in (OpKind.PARAMETER, OpKind.INPUT):
        raise AutodiffError(f"{node.describe()} is not a leaf")
    values = node.value
    estimate = np.zeros(values.shape)
    flat = values.reshape(-1)  # view onto the parameter storage
    out = estimate.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + epsilon
        forward(graph)
        plus = float(graph.nodes[loss].value)
        flat[i] = orig - epsilon
        forward(graph)
        minus = float(graph.nodes[loss].value)
        flat[i] = orig
        out[i] = (plus - minus) / (2.0 * epsilon)
    forward(graph)
    return estimate


def max_relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """max |a-b| / max(1, |a|, |b|) over entries."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size == 0:
        return 0.0
    denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
    return float(np.max(np.abs(a - b) / denom))
