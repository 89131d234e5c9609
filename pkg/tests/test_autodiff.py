import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from teco.autodiff import (Parameter, Tensor, concat, dropout, l2_norm,
                           layer_norm, linear, log_sum_exp, lstm_step,
                           mean_pool, softmax)
from teco.errors import ConfigError, ShapeError
from teco.rng import Rng

from conftest import finite_diff_check


def randt(shape, seed=0, requires_grad=True):
    data = np.random.default_rng(seed).normal(size=shape)
    return Tensor(data, requires_grad=requires_grad, dtype=np.float64)


# -- matmul -----------------------------------------------------------------

def test_matmul_identity():
    x = randt((2, 2))
    out = Tensor(np.eye(2), dtype=np.float64).matmul(x)
    assert np.allclose(out.data, x.data)


def test_matmul_hand_checked():
    a = Tensor([[1.0, 2.0], [3.0, 4.0]])
    b = Tensor([[1.0], [1.0]])
    assert np.array_equal(a.matmul(b).data, [[3.0], [7.0]])


def test_matmul_matches_triple_loop_oracle():
    a = randt((4, 3), seed=1)
    b = randt((3, 5), seed=2)
    out = a.matmul(b)
    expected = np.zeros((4, 5))
    for i in range(4):
        for j in range(5):
            for k in range(3):
                expected[i, j] += a.data[i, k] * b.data[k, j]
    assert np.allclose(out.data, expected, atol=1e-6)


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
        randt((2, 3)).matmul(randt((2, 3)))


# -- softmax ----------------------------------------------------------------

def test_softmax_equal_logits():
    assert np.allclose(softmax(Tensor([0.0, 0.0])).data, [0.5, 0.5])


def test_softmax_analytic():
    out = softmax(Tensor([np.log(2.0), 0.0], dtype=np.float64))
    assert np.allclose(out.data, [2 / 3, 1 / 3], atol=1e-12)


def test_softmax_matches_direct_oracle():
    x = randt((5,), seed=3)
    e = np.exp(x.data)
    assert np.allclose(softmax(x).data, e / e.sum(), atol=1e-9)


def test_softmax_no_overflow():
    out = softmax(Tensor([1000.0, 1000.0], dtype=np.float64))
    assert np.allclose(out.data, [0.5, 0.5])


def test_softmax_bad_axis():
    with pytest.raises(ShapeError):
        softmax(randt((3,)), axis=2)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=2, max_size=8),
       st.floats(-100, 100))
def test_softmax_sums_to_one_and_shift_invariant(logits, shift):
    base = softmax(Tensor(logits, dtype=np.float64)).data
    shifted = softmax(Tensor([v + shift for v in logits],
                             dtype=np.float64)).data
    assert abs(base.sum() - 1.0) < 1e-6
    assert (base > 0).all()
    assert np.allclose(base, shifted, atol=1e-6)


# -- lstm -------------------------------------------------------------------

def zero_lstm_params(d_in, d_h):
    p = {}
    for g in ("i", "f", "o", "g"):
        p[f"w_{g}"] = Tensor(np.zeros((d_in, d_h)), dtype=np.float64)
        p[f"u_{g}"] = Tensor(np.zeros((d_h, d_h)), dtype=np.float64)
        p[f"b_{g}"] = Tensor(np.zeros(d_h), dtype=np.float64)
    return p


def random_lstm_params(d_in, d_h, seed=0, requires_grad=True):
    rng = np.random.default_rng(seed)
    p = {}
    for g in ("i", "f", "o", "g"):
        for name, shape in ((f"w_{g}", (d_in, d_h)), (f"u_{g}", (d_h, d_h)),
                            (f"b_{g}", (d_h,))):
            p[name] = Parameter(rng.normal(size=shape), name, dtype=np.float64)
            p[name].requires_grad = requires_grad
    return p


def test_lstm_all_zero_gives_zero_state():
    p = zero_lstm_params(3, 4)
    h, c = lstm_step(randt((1, 3)),
                     (Tensor(np.zeros((1, 4))), Tensor(np.zeros((1, 4)))), p)
    assert np.allclose(h.data, 0.0)
    assert np.allclose(c.data, 0.0)


def test_lstm_matches_scalar_loop_oracle():
    d_in, d_h = 3, 4
    p = random_lstm_params(d_in, d_h, seed=5)
    x = randt((1, d_in), seed=6)
    h0 = randt((1, d_h), seed=7)
    c0 = randt((1, d_h), seed=8)
    h1, c1 = lstm_step(x, (h0, c0), p)

    def sig(v):
        return 1.0 / (1.0 + np.exp(-v))

    for j in range(d_h):
        gates = {}
        for g in ("i", "f", "o", "g"):
            acc = p[f"b_{g}"].data[j]
            for k in range(d_in):
                acc += x.data[0, k] * p[f"w_{g}"].data[k, j]
            for k in range(d_h):
                acc += h0.data[0, k] * p[f"u_{g}"].data[k, j]
            gates[g] = acc
        c_exp = sig(gates["f"]) * c0.data[0, j] + sig(gates["i"]) * np.tanh(gates["g"])
        h_exp = sig(gates["o"]) * np.tanh(c_exp)
        assert abs(c1.data[0, j] - c_exp) < 1e-6
        assert abs(h1.data[0, j] - h_exp) < 1e-6


def test_lstm_gradients_match_finite_differences():
    d_in, d_h = 3, 4
    p = random_lstm_params(d_in, d_h, seed=9)
    x = randt((1, d_in), seed=10, requires_grad=False)
    h0 = Tensor(np.zeros((1, d_h)), dtype=np.float64)
    c0 = Tensor(np.zeros((1, d_h)), dtype=np.float64)

    def loss_fn():
        h, _ = lstm_step(x, (h0, c0), p)
        return h.sum()

    finite_diff_check(loss_fn, list(p.values()))


def test_lstm_dim_mismatch():
    p = zero_lstm_params(3, 4)
    with pytest.raises(ShapeError):
        lstm_step(randt((1, 5)),
                  (Tensor(np.zeros((1, 4))), Tensor(np.zeros((1, 4)))), p)


# -- layer norm -------------------------------------------------------------

def gain_bias(d):
    return Tensor(np.ones(d), dtype=np.float64), Tensor(np.zeros(d), dtype=np.float64)


def test_layer_norm_constant_row_is_zero():
    g, b = gain_bias(5)
    out = layer_norm(Tensor(np.full((2, 5), 3.7), dtype=np.float64), g, b)
    assert np.allclose(out.data, 0.0, atol=1e-2)


def test_layer_norm_standardized_row_unchanged():
    row = np.array([-1.0, 1.0, -1.0, 1.0])  # mean 0, variance 1
    g, b = gain_bias(4)
    out = layer_norm(Tensor(row[None, :], dtype=np.float64), g, b, eps=1e-12)
    assert np.allclose(out.data[0], row, atol=1e-5)


def test_layer_norm_matches_direct_oracle():
    x = randt((3, 6), seed=12)
    gain = randt((6,), seed=13)
    bias = randt((6,), seed=14)
    eps = 1e-5
    out = layer_norm(x, gain, bias, eps=eps)
    mu = x.data.mean(axis=1, keepdims=True)
    var = x.data.var(axis=1, keepdims=True)
    expected = (x.data - mu) / np.sqrt(var + eps) * gain.data + bias.data
    assert np.allclose(out.data, expected, atol=1e-6)


def test_layer_norm_shape_error():
    x = randt((2, 4))
    with pytest.raises(ShapeError):
        layer_norm(x, randt((3,)), randt((4,)))


def test_layer_norm_gradients():
    x = randt((3, 5), seed=15)
    gain = randt((5,), seed=16)
    bias = randt((5,), seed=17)

    def loss_fn():
        return (layer_norm(x, gain, bias) * layer_norm(x, gain, bias)).sum()

    finite_diff_check(loss_fn, [x, gain, bias])


# -- dropout ----------------------------------------------------------------

def test_dropout_eval_is_identity():
    x = randt((4, 4))
    out = dropout(x, 0.5, "eval", None)
    assert out is x


def test_dropout_rate_zero_is_identity():
    x = randt((4, 4))
    assert dropout(x, 0.0, "train", Rng(0)) is x


def test_dropout_preserves_mean_within_3_sigma():
    n = 100_000
    rate = 0.5
    x = Tensor(np.ones(n), dtype=np.float64)
    out = dropout(x, rate, "train", Rng(123))
    # survivors scaled by 2: mean estimate has sigma = 1/sqrt(n)
    sigma = np.sqrt(rate / (1 - rate) / n)
    assert abs(out.data.mean() - 1.0) < 3 * sigma


def test_dropout_invalid_rate():
    with pytest.raises(ConfigError):
        dropout(randt((2,)), 1.0, "train", Rng(0))


# -- backward ---------------------------------------------------------------

def test_backward_quadratic():
    x = randt((3, 2), seed=20)
    (x * x).sum().backward()
    assert np.allclose(x.grad, 2 * x.data)


def test_backward_unreachable_parameter_has_no_grad():
    x = randt((2, 2), seed=21)
    p = Parameter(np.ones((2, 2)), "unused", dtype=np.float64)
    (x * x).sum().backward()
    assert p.grad is None


def test_backward_reused_tensor_accumulates():
    x = randt((3,), seed=22)
    (x.sum() + (x * 2.0).sum()).backward()
    assert np.allclose(x.grad, 3.0)


def test_backward_requires_scalar():
    with pytest.raises(ShapeError):
        randt((2, 2)).backward()


# -- remaining ops: value + gradient checks ---------------------------------

def test_concat_values_and_grads():
    a = randt((2, 3), seed=30)
    b = randt((4, 3), seed=31)
    out = concat([a, b], axis=0)
    assert out.shape == (6, 3)
    assert np.allclose(out.data[:2], a.data)

    def loss_fn():
        return (concat([a, b], axis=0) * concat([a, b], axis=0)).sum()

    finite_diff_check(loss_fn, [a, b])


@pytest.mark.parametrize("op", ["relu", "tanh", "sigmoid", "exp", "log",
                                "sqrt", "mean", "sum"])
def test_unary_op_gradients(op):
    base = np.abs(np.random.default_rng(40).normal(size=(3, 4))) + 0.5
    x = Tensor(base, requires_grad=True, dtype=np.float64)

    def loss_fn():
        return getattr(x, op)().sum() if op in ("relu", "tanh", "sigmoid",
                                                "exp", "log", "sqrt") \
            else getattr(x, op)()

    finite_diff_check(loss_fn, [x])


def test_binary_broadcast_gradients():
    a = randt((3, 4), seed=41)
    b = randt((4,), seed=42)
    c = randt((3, 1), seed=43)

    def loss_fn():
        return ((a + b) * c / (b * b + 2.0)).sum()

    finite_diff_check(loss_fn, [a, b, c])


def test_mean_pool_and_l2_norm():
    x = randt((4, 3), seed=44)
    assert np.allclose(mean_pool(x, axis=0).data, x.data.mean(axis=0))
    assert np.allclose(l2_norm(x).data, np.linalg.norm(x.data))

    def loss_fn():
        return l2_norm(x) + mean_pool(x, axis=0).sum()

    finite_diff_check(loss_fn, [x])


def test_slice_transpose_linear_gradients():
    x = randt((4, 3), seed=45)
    w = randt((3, 2), seed=46)
    b = randt((2,), seed=47)

    def loss_fn():
        y = linear(x, w, b).transpose()
        return (y.slice((0,)) * y.slice((1,))).sum()

    finite_diff_check(loss_fn, [x, w, b])


def test_log_sum_exp_matches_oracle():
    x = randt((2, 5), seed=48)
    out = log_sum_exp(x, axis=1)
    expected = np.log(np.exp(x.data).sum(axis=1, keepdims=True))
    assert np.allclose(out.data, expected, atol=1e-9)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 10_000))
def test_randomized_shape_gradcheck(rows, cols, seed):
    x = Tensor(np.random.default_rng(seed).normal(size=(rows, cols)),
               requires_grad=True, dtype=np.float64)

    def loss_fn():
        return (softmax(x, axis=-1).tanh() * x.sigmoid()).sum()

    finite_diff_check(loss_fn, [x], samples=3)


def test_identical_seed_identical_outputs():
    def run():
        rng = Rng(77)
        x = Tensor(rng.normal((8, 8), dtype=np.float64))
        out = dropout(softmax(x, axis=1), 0.3, "train", rng.split())
        return out.data

    a, b = run(), run()
    assert np.array_equal(a, b)
