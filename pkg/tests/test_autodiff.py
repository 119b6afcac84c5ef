import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from promptseg import autodiff as ad
from promptseg.autodiff import (
    Adam, DimensionError, OptimizerState, Parameter, Tensor, adam_step,
    bilinear_resize, conv2d, gelu, layer_norm, matmul,
    no_grad, sigmoid, softmax, tsum,
)

from gradcheck import check_gradients


def rng64(seed=0):
    return np.random.default_rng(seed)


# -- matmul -------------------------------------------------------------------

def test_matmul_identity():
    a = rng64(1).standard_normal((2, 2))
    out = matmul(Tensor(np.eye(2)), Tensor(a))
    np.testing.assert_allclose(out.data, a)


def test_matmul_hand_value():
    out = matmul(Tensor([[1.0, 2.0], [3.0, 4.0]]), Tensor([[5.0], [6.0]]))
    np.testing.assert_allclose(out.data, [[17.0], [39.0]])


def test_matmul_shape_mismatch_names_shapes():
    with pytest.raises(DimensionError, match=r"2, 3"):
        matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))


@given(m=st.integers(1, 5), k=st.integers(1, 5), n=st.integers(1, 5))
@settings(max_examples=30, deadline=None)
def test_matmul_shape_algebra(m, k, n):
    out = matmul(Tensor(np.zeros((m, k))), Tensor(np.zeros((k, n))))
    assert out.shape == (m, n)


# -- conv2d -------------------------------------------------------------------

def test_conv2d_1x1_identity():
    x = rng64(2).standard_normal((3, 5, 4))
    w = np.zeros((3, 3, 1, 1))
    for c in range(3):
        w[c, c, 0, 0] = 1.0
    out = conv2d(Tensor(x), Tensor(w), Tensor(np.zeros(3)), stride=1, pad=0)
    np.testing.assert_allclose(out.data, x)


def test_conv2d_all_ones():
    out = conv2d(Tensor(np.ones((1, 5, 5))), Tensor(np.ones((1, 1, 3, 3))),
                 Tensor(np.zeros(1)), stride=1, pad=0)
    assert out.shape == (1, 3, 3)
    np.testing.assert_allclose(out.data, 9.0)


def test_conv2d_patchify_shape():
    out = conv2d(Tensor(np.zeros((3, 32, 24))), Tensor(np.zeros((7, 3, 8, 8))),
                 Tensor(np.zeros(7)), stride=8, pad=0)
    assert out.shape == (7, 4, 3)


def test_conv2d_kernel_too_large():
    with pytest.raises(DimensionError):
        conv2d(Tensor(np.zeros((1, 4, 4))), Tensor(np.zeros((1, 1, 5, 5))),
               Tensor(np.zeros(1)), stride=1, pad=0)


@given(h=st.integers(3, 9), w=st.integers(3, 9), k=st.integers(1, 3),
       stride=st.integers(1, 3), pad=st.integers(0, 2))
@settings(max_examples=40, deadline=None)
def test_conv2d_output_shape_rule(h, w, k, stride, pad):
    out = conv2d(Tensor(np.zeros((2, h, w))), Tensor(np.zeros((3, 2, k, k))),
                 Tensor(np.zeros(3)), stride=stride, pad=pad)
    oh = (h + 2 * pad - k) // stride + 1
    ow = (w + 2 * pad - k) // stride + 1
    assert out.shape == (3, oh, ow)


# -- softmax / layer_norm / gelu ------------------------------------------------

def test_softmax_symmetry():
    out = softmax(Tensor([0.0, 0.0]), axis=0)
    np.testing.assert_allclose(out.data, [0.5, 0.5])


def test_softmax_hand_value():
    out = softmax(Tensor([0.0, math.log(3.0)]), axis=0)
    np.testing.assert_allclose(out.data, [0.25, 0.75], atol=1e-7)


def test_softmax_shift_invariance():
    x = rng64(3).standard_normal((4, 6))
    a = softmax(Tensor(x), axis=1).data
    b = softmax(Tensor(x + 13.7), axis=1).data
    np.testing.assert_allclose(a, b, atol=1e-12)


@given(st.integers(0, 4))
@settings(max_examples=20, deadline=None)
def test_softmax_rows_sum_to_one(seed):
    x = np.random.default_rng(seed).standard_normal((5, 7)) * 10
    out = softmax(Tensor(x), axis=-1)
    assert out.data.min() > 0
    np.testing.assert_allclose(out.data.sum(axis=-1), 1.0, atol=1e-6)


def test_layer_norm_constant_row():
    out = layer_norm(Tensor(np.full((2, 4), 3.0)), Tensor(np.ones(4)), Tensor(np.zeros(4)))
    np.testing.assert_allclose(out.data, 0.0, atol=1e-5)


def test_layer_norm_hand_value():
    out = layer_norm(Tensor([[1.0, 3.0]]), Tensor(np.ones(2)), Tensor(np.zeros(2)), eps=1e-12)
    np.testing.assert_allclose(out.data, [[-1.0, 1.0]], atol=1e-5)


def test_layer_norm_zero_mean():
    x = rng64(4).standard_normal((6, 9))
    out = layer_norm(Tensor(x), Tensor(np.ones(9)), Tensor(np.zeros(9)))
    assert np.abs(out.data.mean(axis=-1)).max() < 1e-5


def test_gelu_values():
    x = Tensor([0.0, 1.0, 10.0])
    out = gelu(x)
    assert out.data[0] == 0.0
    np.testing.assert_allclose(out.data[1], 0.8411919906082768, atol=1e-6)
    assert abs(out.data[2] - 10.0) < 1e-4


# -- bilinear_resize -------------------------------------------------------------

def bilinear_oracle(x: np.ndarray, oh: int, ow: int) -> np.ndarray:
    """Per-pixel align_corners=false interpolation, written independently."""
    c, h, w = x.shape
    out = np.zeros((c, oh, ow), dtype=x.dtype)
    for i in range(oh):
        for j in range(ow):
            sy = min(max((i + 0.5) * h / oh - 0.5, 0.0), h - 1.0)
            sx = min(max((j + 0.5) * w / ow - 0.5, 0.0), w - 1.0)
            y0, x0 = int(math.floor(sy)), int(math.floor(sx))
            y1, x1 = min(y0 + 1, h - 1), min(x0 + 1, w - 1)
            fy, fx = sy - y0, sx - x0
            out[:, i, j] = ((1 - fy) * (1 - fx) * x[:, y0, x0]
                            + (1 - fy) * fx * x[:, y0, x1]
                            + fy * (1 - fx) * x[:, y1, x0]
                            + fy * fx * x[:, y1, x1])
    return out


def test_resize_identity():
    x = rng64(5).standard_normal((2, 4, 6))
    out = bilinear_resize(Tensor(x), 4, 6)
    np.testing.assert_array_equal(out.data, x)


def test_resize_constant():
    out = bilinear_resize(Tensor(np.full((1, 3, 3), 2.5)), 7, 5)
    np.testing.assert_allclose(out.data, 2.5, atol=1e-12)


def test_resize_matches_oracle():
    x = np.arange(4.0).reshape(1, 2, 2)
    out = bilinear_resize(Tensor(x), 4, 4)
    np.testing.assert_allclose(out.data, bilinear_oracle(x, 4, 4), atol=1e-12)


@given(h=st.integers(1, 5), w=st.integers(1, 5), oh=st.integers(1, 9), ow=st.integers(1, 9),
       seed=st.integers(0, 100))
@settings(max_examples=40, deadline=None)
def test_resize_oracle_randomized(h, w, oh, ow, seed):
    x = np.random.default_rng(seed).standard_normal((2, h, w))
    out = bilinear_resize(Tensor(x), oh, ow)
    np.testing.assert_allclose(out.data, bilinear_oracle(x, oh, ow), atol=1e-10)


# -- backward ------------------------------------------------------------------

def test_backward_product_rule():
    x = Tensor(3.0, requires_grad=True)
    y = Tensor(5.0, requires_grad=True)
    (x * y).backward()
    assert x.grad == 5.0 and y.grad == 3.0


def test_backward_sum_gives_ones():
    x = Tensor(rng64(6).standard_normal((3, 4)), requires_grad=True)
    tsum(x).backward()
    np.testing.assert_array_equal(x.grad, np.ones((3, 4)))


def test_backward_requires_scalar():
    x = Tensor(np.zeros((2, 2)), requires_grad=True)
    with pytest.raises(DimensionError):
        (x * 2.0).backward()


def test_backward_accumulates_across_uses():
    x = Tensor(2.0, requires_grad=True)
    (x * x + x).backward()          # d/dx (x^2 + x) = 2x + 1 = 5
    assert x.grad == 5.0


def test_no_grad_skips_graph():
    x = Tensor(1.0, requires_grad=True)
    with no_grad():
        y = x * 2.0
    assert y._backward is None and not y.requires_grad


def test_non_grad_leaf_never_accumulates():
    x = Tensor(2.0, requires_grad=True)
    c = Tensor(3.0)
    (x * c).backward()
    assert c.grad is None


def test_backward_composite_finite_difference():
    rng = rng64(7)

    def f(a, b, w):
        h = gelu(matmul(a, b))
        return sigmoid(tsum(layer_norm(h, w, Tensor(np.zeros(4)))))

    check_gradients(
        f,
        [rng.standard_normal((3, 5)), rng.standard_normal((5, 4)), rng.standard_normal(4)],
        rng,
    )


# -- determinism ----------------------------------------------------------------

def test_forward_backward_deterministic():
    def run():
        x = Tensor(np.linspace(-1, 1, 12, dtype=np.float32).reshape(3, 4), requires_grad=True)
        w = Tensor(np.linspace(0.5, -0.5, 16, dtype=np.float32).reshape(4, 4), requires_grad=True)
        out = tsum(softmax(matmul(gelu(x), w), axis=-1) * 3.0)
        out.backward()
        return out.data.copy(), x.grad.copy(), w.grad.copy()

    a = run()
    b = run()
    for u, v in zip(a, b):
        np.testing.assert_array_equal(u, v)


# -- dtype -----------------------------------------------------------------------

def test_float32_default_and_float64_opt_in():
    assert Tensor([1.0, 2.0]).dtype == np.float32
    assert Tensor([1.0, 2.0], dtype=np.float64).dtype == np.float64
    out = gelu(Tensor(np.ones(3, dtype=np.float64)))
    assert out.dtype == np.float64


# -- adam --------------------------------------------------------------------------

def test_adam_zero_gradient_is_null_update():
    p = Parameter(np.array([1.0, -2.0]))
    p.grad = np.zeros(2, dtype=np.float32)
    state = OptimizerState(lr=0.1)
    adam_step({"p": p}, state)
    np.testing.assert_array_equal(p.data, [1.0, -2.0])
    assert state.step_count == 1


def test_adam_hand_computed_step():
    p = Parameter(np.array([1.0]))
    p.grad = np.array([1.0], dtype=np.float32)
    state = OptimizerState(lr=0.1)
    adam_step({"p": p}, state, beta1=0.9, beta2=0.999, eps=1e-8)
    np.testing.assert_allclose(p.data, [0.9000000009999999], atol=1e-6)


def test_adam_consecutive_steps_differ():
    p = Parameter(np.array([1.0]))
    state = OptimizerState(lr=0.1)
    p.grad = np.array([1.0], dtype=np.float32)
    adam_step({"p": p}, state)
    after_one = p.data.copy()
    p.grad = np.array([1.0], dtype=np.float32)
    adam_step({"p": p}, state)
    assert state.step_count == 2
    assert not np.array_equal(p.data, after_one)
    assert p.data[0] != 2 * after_one[0] - 1.0  # second delta differs from first


def test_adam_shape_mismatch():
    p = Parameter(np.zeros((2, 2)))
    p.grad = np.zeros(3, dtype=np.float32)
    with pytest.raises(DimensionError):
        adam_step({"p": p}, OptimizerState(lr=0.1))


def test_adam_schedule_lookup():
    state = OptimizerState(lr=5e-5, schedule=[(0, 5e-5), (50, 5e-6)])
    assert state.lr_at_epoch(0) == 5e-5
    assert state.lr_at_epoch(49) == 5e-5
    assert state.lr_at_epoch(50) == 5e-6
    assert state.lr_at_epoch(80) == 5e-6


def test_optimizer_wrapper_roundtrip():
    p = Parameter(np.array([2.0]))
    opt = Adam({"p": p}, lr=0.5)
    p.grad = np.array([1.0], dtype=np.float32)
    opt.step()
    assert p.data[0] != 2.0
    opt.zero_grad()
    assert p.grad is None


# -- module system ------------------------------------------------------------------

def test_module_names_are_hierarchical():
    class Leaf(ad.Module):
        def __init__(self):
            self.w = Parameter(np.zeros((2, 2)))
            self.b = Parameter(np.zeros(2))

    class Root(ad.Module):
        def __init__(self):
            self.head = Leaf()
            self.blocks = [Leaf(), Leaf()]

    names = set(Root().named_parameters())
    assert names == {"head.w", "head.b", "blocks.0.w", "blocks.0.b", "blocks.1.w", "blocks.1.b"}
