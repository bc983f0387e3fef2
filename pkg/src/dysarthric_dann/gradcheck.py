"""Finite-difference check of every op kind and every layer builder.

Each case builds a small graph from random entries in [-1, 1] (every dim
at most 8), reduces it to a scalar, and compares :func:`backward` with
central differences for every parameter.  Non-scalar outputs are reduced
through a fixed random weighting so that no gradient entry cancels by
symmetry.

The reversal layer is the one deliberate exception to "backward equals
the derivative of forward": upstream of it the expected gradient is
``-lambda`` times the finite difference, and cases say so per parameter.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import nn
from .autodiff import Graph, OpKind, backward, finite_difference_gradient, max_relative_error
from .nn import Conv1dSpec, GrlSpec

TOLERANCE = 1e-4
EPSILON = 1e-5


@dataclass(frozen=True)
class CheckResult:
    case: str
    seed: int
    max_error: float

    @property
    def ok(self) -> bool:
        return self.max_error < TOLERANCE


def _u(rng: np.random.Generator, *shape) -> np.ndarray:
    return rng.uniform(-1.0, 1.0, shape)


def _reduce(g: Graph, out: int, rng: np.random.Generator) -> int:
    weights = g.input(_u(rng, *g.value(out).shape))
    return g.mean(g.mul(out, weights))


# Each builder returns (graph, scalar loss node) or, when some parameter sits
# upstream of a reversal layer, (graph, loss, {param id: multiplier}).
Case = Callable[[np.random.Generator], tuple]


def _unary(op: str) -> Case:
    def build(rng):
        g = Graph()
        x = g.parameter(_u(rng, 3, 5))
        return g, _reduce(g, getattr(g, op)(x), rng)

    return build


def _binary(op: str) -> Case:
    def build(rng):
        g = Graph()
        a, b = g.parameter(_u(rng, 4, 3)), g.parameter(_u(rng, 4, 3))
        return g, _reduce(g, getattr(g, op)(a, b), rng)

    return build


def _input(rng):
    g = Graph()
    x = g.input(_u(rng, 6))
    p = g.parameter(_u(rng, 6))
    return g, _reduce(g, g.mul(x, p), rng)


def _parameter(rng):
    g = Graph()
    p = g.parameter(_u(rng, 2, 3))
    return g, _reduce(g, p, rng)


def _matmul(rng):
    g = Graph()
    a, b = g.parameter(_u(rng, 3, 4)), g.parameter(_u(rng, 4, 5))
    return g, _reduce(g, g.matmul(a, b), rng)


def _bias_add(rng):
    g = Graph()
    x, b = g.parameter(_u(rng, 4, 5)), g.parameter(_u(rng, 5))
    return g, _reduce(g, g.bias_add(x, b), rng)


def _conv1d(rng):
    g = Graph()
    x = g.parameter(_u(rng, 2, 3, 8))
    w = g.parameter(_u(rng, 4, 3, 3))
    b = g.parameter(_u(rng, 4))
    return g, _reduce(g, g.conv1d(x, w, b, stride=2, padding=1), rng)


def _maxpool1d(rng):
    g = Graph()
    x = g.parameter(_u(rng, 2, 3, 8))
    return g, _reduce(g, g.maxpool1d(x, 3, 2), rng)


def _softmax_xent(rng):
    g = Graph()
    logits = g.parameter(_u(rng, 5, 4))
    return g, g.softmax_xent(logits, rng.integers(0, 4, 5))


def _binary_xent(rng):
    g = Graph()
    logits = g.parameter(_u(rng, 6))
    return g, g.binary_xent(logits, rng.integers(0, 2, 6).astype(float))


def _grl(rng):
    g = Graph()
    x = g.parameter(_u(rng, 3, 4))
    return g, _reduce(g, g.grl(x, 1.5), rng), {x: -1.5}


def _reshape(rng):
    g = Graph()
    x = g.parameter(_u(rng, 2, 6))
    return g, _reduce(g, g.reshape(x, (3, 4)), rng)


def _mean(rng):
    g = Graph()
    x = g.parameter(_u(rng, 2, 3, 4))
    return g, _reduce(g, g.mean(x, axis=2), rng)


def _scale(rng):
    g = Graph()
    x = g.parameter(_u(rng, 3, 3))
    return g, _reduce(g, g.scale(x, -0.7), rng)


OP_CASES: dict[OpKind, Case] = {
    OpKind.INPUT: _input,
    OpKind.PARAMETER: _parameter,
    OpKind.ADD: _binary("add"),
    OpKind.MUL: _binary("mul"),
    OpKind.MATMUL: _matmul,
    OpKind.BIAS_ADD: _bias_add,
    OpKind.CONV1D: _conv1d,
    OpKind.MAXPOOL1D: _maxpool1d,
    OpKind.RELU: _unary("relu"),
    OpKind.SIGMOID: _unary("sigmoid"),
    OpKind.SOFTMAX_XENT: _softmax_xent,
    OpKind.BINARY_XENT: _binary_xent,
    OpKind.GRL: _grl,
    OpKind.RESHAPE: _reshape,
    OpKind.MEAN: _mean,
    OpKind.SCALE: _scale,
}


# -- layer builders ---------------------------------------------------------------


def _layer_conv(rng):
    g = Graph()
    spec = Conv1dSpec(2, 3, 4, stride=2, padding=1)
    x = g.parameter(_u(rng, 2, 2, 8))
    w, b = g.parameter(_u(rng, 3, 2, 4)), g.parameter(_u(rng, 3))
    return g, _reduce(g, g.relu(nn.conv1d(g, x, w, b, spec)), rng)


def _layer_pool(rng):
    g = Graph()
    x = g.parameter(_u(rng, 2, 2, 7))
    return g, _reduce(g, nn.maxpool1d(g, x, 2, 2), rng)


def _layer_dense(rng):
    g = Graph()
    x = g.parameter(_u(rng, 4, 5))
    w, b = g.parameter(_u(rng, 5, 3)), g.parameter(_u(rng, 3))
    return g, _reduce(g, g.sigmoid(nn.dense(g, x, w, b)), rng)


def _layer_grl(rng):
    g = Graph()
    x = g.parameter(_u(rng, 4, 3))
    w, b = g.parameter(_u(rng, 3, 2)), g.parameter(_u(rng, 2))
    logits = nn.dense(g, nn.grl(g, x, GrlSpec(-0.5)), w, b)
    return g, nn.domain_cross_entropy(g, logits, rng.integers(0, 2, 4)), {x: 0.5}


def _layer_softmax(rng):
    g = Graph()
    logits = g.parameter(_u(rng, 6, 8))
    return g, nn.softmax_cross_entropy(g, logits, rng.integers(0, 8, 6))


def _layer_domain(rng):
    g = Graph()
    logits = g.parameter(_u(rng, 5, 2))
    return g, nn.domain_cross_entropy(g, logits, rng.integers(0, 2, 5))


def _layer_binary(rng):
    g = Graph()
    logits = g.parameter(_u(rng, 3, 2))
    return g, nn.binary_cross_entropy(g, logits, rng.uniform(0, 1, (3, 2)))


LAYER_CASES: dict[str, Case] = {
    "conv1d": _layer_conv,
    "maxpool1d": _layer_pool,
    "dense": _layer_dense,
    "grl": _layer_grl,
    "softmax_cross_entropy": _layer_softmax,
    "domain_cross_entropy": _layer_domain,
    "binary_cross_entropy": _layer_binary,
}


def all_cases() -> dict[str, Case]:
    cases = {f"op:{k.value}": v for k, v in OP_CASES.items()}
    cases.update({f"layer:{k}": v for k, v in LAYER_CASES.items()})
    return cases


def check_case(name: str, build: Case, seed: int, epsilon: float = EPSILON) -> CheckResult:
    graph, loss, *extra = build(np.random.default_rng(seed))
    multipliers = extra[0] if extra else {}
    grads = backward(graph, loss)
    worst = 0.0
    for pid, grad in grads.items():
        expected = multipliers.get(pid, 1.0) * finite_difference_gradient(graph, loss, pid, epsilon)
        worst = max(worst, max_relative_error(grad, expected))
    return CheckResult(name, seed, worst)


def run_suite(seeds=range(5), epsilon: float = EPSILON) -> list[CheckResult]:
    return [check_case(name, build, seed, epsilon) for name, build in all_cases().items() for seed in seeds]
