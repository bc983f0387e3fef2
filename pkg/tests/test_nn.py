import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dysarthric_dann import nn
from dysarthric_dann.autodiff import Graph, ShapeMismatchError, backward
from dysarthric_dann.gradcheck import LAYER_CASES, TOLERANCE, check_case
from dysarthric_dann.nn import Conv1dSpec, GrlSpec, LabelOutOfRangeError

# ln(1 + e^-1) and ln(1 + e), evaluated with mpmath at 30 digits
XENT_ONE_ZERO = 0.31326168751822283
XENT_HALF_WRONG = 1.3132616875182228


def conv_oracle(x, w, b, stride, padding):
    """Brute-force cross-correlation with explicit loops."""
    batch, in_ch, length = x.shape
    out_ch, _, k = w.shape
    xp = np.zeros((batch, in_ch, length + 2 * padding))
    xp[:, :, padding : padding + length] = x
    out_len = (length + 2 * padding - k) // stride + 1
    out = np.zeros((batch, out_ch, out_len))
    for n in range(batch):
        for o in range(out_ch):
            for t in range(out_len):
                acc = b[o]
                for c in range(in_ch):
                    for j in range(k):
                        acc += w[o, c, j] * xp[n, c, t * stride + j]
                out[n, o, t] = acc
    return out


def _conv(x, w, b, spec):
    g = Graph()
    out = nn.conv1d(g, g.input(x), g.input(w), g.input(b), spec)
    return g.value(out)


# -- conv1d ---------------------------------------------------------------------------


def test_conv_hand_example():
    x = np.array([[[1.0, 2.0, 3.0, 4.0]]])
    w = np.array([[[1.0, 0.0, -1.0]]])
    np.testing.assert_array_equal(_conv(x, w, np.zeros(1), Conv1dSpec(1, 1, 3)), [[[-2.0, -2.0]]])


def test_conv_identity_kernel():
    x = np.random.default_rng(0).normal(size=(2, 1, 9))
    np.testing.assert_array_equal(_conv(x, np.ones((1, 1, 1)), np.zeros(1), Conv1dSpec(1, 1, 1)), x)


def test_conv_output_length_formula():
    assert Conv1dSpec(1, 1, 64, stride=4).output_length(24000) == 5985


@given(
    st.integers(1, 2),
    st.integers(1, 3),
    st.integers(1, 3),
    st.integers(1, 5),
    st.integers(1, 3),
    st.integers(0, 2),
    st.integers(5, 16),
    st.integers(0, 2**32 - 1),
)
@settings(max_examples=60, deadline=None)
def test_conv_matches_loop_oracle(batch, in_ch, out_ch, k, stride, padding, length, seed):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, (batch, in_ch, length))
    w = rng.uniform(-1, 1, (out_ch, in_ch, k))
    b = rng.uniform(-1, 1, out_ch)
    spec = Conv1dSpec(in_ch, out_ch, k, stride, padding)
    np.testing.assert_allclose(_conv(x, w, b, spec), conv_oracle(x, w, b, stride, padding), rtol=0, atol=1e-12)


def test_conv_rejects_wrong_channel_count():
    g = Graph()
    with pytest.raises(ShapeMismatchError):
        nn.conv1d(g, g.input(np.zeros((1, 2, 8))), g.input(np.zeros((1, 1, 3))), g.input(np.zeros(1)), Conv1dSpec(1, 1, 3))


def test_conv_rejects_too_short_input():
    g = Graph()
    with pytest.raises(ShapeMismatchError):
        nn.conv1d(g, g.input(np.zeros((1, 1, 2))), g.input(np.zeros((1, 1, 3))), g.input(np.zeros(1)), Conv1dSpec(1, 1, 3))


# -- pooling ------------------------------------------------------------------------------


def test_maxpool_example():
    g = Graph()
    out = nn.maxpool1d(g, g.input([[[1.0, 3.0, 2.0, 5.0]]]), 2, 2)
    np.testing.assert_array_equal(g.value(out), [[[3.0, 5.0]]])


def test_maxpool_constant_input():
    g = Graph()
    out = nn.maxpool1d(g, g.input(np.full((1, 2, 6), 0.4)), 3, 1)
    np.testing.assert_array_equal(g.value(out), np.full((1, 2, 4), 0.4))


def test_maxpool_tie_goes_to_first_index():
    g = Graph()
    x = g.parameter(np.array([[[2.0, 2.0]]]))
    grads = backward(g, g.mean(nn.maxpool1d(g, x, 2, 2)))
    np.testing.assert_array_equal(grads[x], [[[1.0, 0.0]]])


def test_maxpool_window_larger_than_input():
    g = Graph()
    with pytest.raises(ShapeMismatchError):
        nn.maxpool1d(g, g.input(np.zeros((1, 1, 2))), 3, 1)


# -- dense ----------------------------------------------------------------------------------


def test_dense_identity():
    g = Graph()
    x = np.array([[0.2, -0.4], [1.5, 3.0]])
    out = nn.dense(g, g.input(x), g.input(np.eye(2)), g.input(np.zeros(2)))
    np.testing.assert_array_equal(g.value(out), x)


def test_dense_zero_weights_gives_bias():
    g = Graph()
    out = nn.dense(g, g.input(np.ones((3, 2))), g.input(np.zeros((2, 4))), g.input([1.0, 2.0, 3.0, 4.0]))
    np.testing.assert_array_equal(g.value(out), np.tile([1.0, 2.0, 3.0, 4.0], (3, 1)))


def test_dense_arithmetic():
    g = Graph()
    out = nn.dense(g, g.input([[1.0, 2.0]]), g.input([[1.0], [1.0]]), g.input([0.5]))
    np.testing.assert_array_equal(g.value(out), [[3.5]])


def test_dense_shape_mismatch():
    g = Graph()
    with pytest.raises(ShapeMismatchError):
        nn.dense(g, g.input(np.ones((2, 3))), g.input(np.ones((2, 3))), g.input(np.ones(3)))


# -- gradient reversal ----------------------------------------------------------------------------


def _grl_grad(lam, incoming):
    g = Graph()
    x = g.parameter(np.array([0.3, -0.7]))
    y = nn.grl(g, x, GrlSpec(lam))
    loss = g.mean(g.mul(y, g.input(np.asarray(incoming) * 2)))  # mean over 2 entries
    return g.value(y), backward(g, loss)[x]


def test_grl_forward_is_identity():
    for lam in (1.5, -0.5, 0.0):
        value, _ = _grl_grad(lam, [1.0, -2.0])
        np.testing.assert_array_equal(value, [0.3, -0.7])


def test_grl_backward_reverses():
    _, grad = _grl_grad(1.5, [1.0, -2.0])
    np.testing.assert_array_equal(grad, [-1.5, 3.0])


def test_negative_lambda_is_plain_scaling():
    _, grad = _grl_grad(-0.5, [1.0, -2.0])
    np.testing.assert_array_equal(grad, [0.5, -1.0])
    g = Graph()
    x = g.parameter(np.array([0.3, -0.7]))
    loss = g.mean(g.mul(g.scale(x, 0.5), g.input([2.0, -4.0])))
    np.testing.assert_array_equal(backward(g, loss)[x], grad)


def _toy(lam):
    """Two-layer net: shared weights -> grl(lam) -> domain head."""
    rng = np.random.default_rng(11)
    x = rng.uniform(-1, 1, (4, 3))
    params = {"f": rng.uniform(-1, 1, (3, 5)), "d": rng.uniform(-1, 1, (5, 2)), "db": rng.uniform(-1, 1, 2)}
    g = Graph()
    ids = {k: g.parameter(v.copy()) for k, v in params.items()}
    h = nn.grl(g, g.sigmoid(g.matmul(g.input(x), ids["f"])), GrlSpec(lam))
    loss = nn.domain_cross_entropy(g, nn.dense(g, h, ids["d"], ids["db"]), [0, 1, 1, 0])
    grads = backward(g, loss)
    return {k: grads[i] for k, i in ids.items()}


# grl(-1) passes gradients through unchanged
PLAIN = -1.0


@pytest.mark.parametrize("lam", [0.5, 2.0, -0.5, -4.0])
def test_grl_equals_scaled_plain_gradient_exactly(lam):
    # power-of-two factors commute with rounding, so equality is bitwise
    rev, plain = _toy(lam), _toy(PLAIN)
    np.testing.assert_array_equal(rev["f"], -lam * plain["f"])
    np.testing.assert_array_equal(rev["d"], plain["d"])


def test_grl_equals_scaled_plain_gradient_to_rounding():
    # ×1.5 before vs after the sums differs only by rounding of the summands
    rev, plain = _toy(1.5), _toy(PLAIN)
    scale = np.abs(plain["f"]).max()
    np.testing.assert_allclose(rev["f"], -1.5 * plain["f"], rtol=0, atol=1e-14 * scale)


def test_negating_lambda_flips_only_extractor_gradient():
    pos, neg = _toy(1.5), _toy(-1.5)
    np.testing.assert_array_equal(pos["f"], -neg["f"])
    np.testing.assert_array_equal(pos["d"], neg["d"])
    np.testing.assert_array_equal(pos["db"], neg["db"])


# -- losses ------------------------------------------------------------------------------------------


def _xent(logits, labels, fn=nn.softmax_cross_entropy):
    g = Graph()
    return float(g.value(fn(g, g.input(np.asarray(logits, dtype=float)), labels)))


def test_uniform_logits_give_log_ten():
    assert _xent(np.zeros((3, 10)), [0, 4, 9]) == pytest.approx(math.log(10), abs=1e-12)


def test_saturated_logits_give_zero():
    assert _xent(np.eye(10)[[3]] * 1000, [3]) == pytest.approx(0.0, abs=1e-12)


def test_hand_softmax_value():
    assert _xent([[1.0, 0.0]], [0]) == pytest.approx(XENT_ONE_ZERO, abs=1e-12)


def test_domain_equal_logits_give_log_two():
    assert _xent(np.zeros((4, 2)), [0, 1, 0, 1], nn.domain_cross_entropy) == pytest.approx(math.log(2), abs=1e-12)


def test_domain_hand_value():
    assert _xent([[0.5, -0.5]], [1], nn.domain_cross_entropy) == pytest.approx(XENT_HALF_WRONG, abs=1e-12)


def test_domain_perfect_separation():
    assert _xent([[50.0, -50.0], [-50.0, 50.0]], [0, 1], nn.domain_cross_entropy) < 1e-40


def test_domain_head_must_have_two_logits():
    with pytest.raises(ShapeMismatchError):
        _xent(np.zeros((2, 3)), [0, 1], nn.domain_cross_entropy)


@pytest.mark.parametrize("labels", [[10], [-1]])
def test_label_out_of_range(labels):
    with pytest.raises(LabelOutOfRangeError):
        _xent(np.zeros((1, 10)), labels)


def test_softmax_gradient_formula():
    logits = np.array([[0.2, -1.0, 0.5], [1.0, 1.0, 0.0]])
    g = Graph()
    z = g.parameter(logits.copy())
    grad = backward(g, nn.softmax_cross_entropy(g, z, [2, 0]))[z]
    p = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
    np.testing.assert_allclose(grad, (p - np.eye(3)[[2, 0]]) / 2, atol=1e-15)


@given(st.lists(st.floats(-30, 30), min_size=2, max_size=10), st.data())
@settings(max_examples=60, deadline=None)
def test_cross_entropy_nonnegative(row, data):
    label = data.draw(st.integers(0, len(row) - 1))
    assert _xent([row], [label]) >= 0.0


def test_binary_cross_entropy_targets_checked():
    g = Graph()
    with pytest.raises(LabelOutOfRangeError):
        nn.binary_cross_entropy(g, g.input([0.0]), [1.5])


@pytest.mark.parametrize("name", list(LAYER_CASES))
@pytest.mark.parametrize("seed", range(5))
def test_layer_gradients_match_finite_differences(name, seed):
    result = check_case(name, LAYER_CASES[name], seed)
    assert result.max_error < TOLERANCE, result
