"""Finite-difference checks for every autodiff primitive."""
import numpy as np
import pytest

from minvar import autodiff
from minvar.autodiff import Tensor, as_tensor


def numeric_grad(fn, x: np.ndarray, step: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar-valued fn at x."""
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = fn(x)
        flat[i] = orig - step
        lo = fn(x)
        flat[i] = orig
        grad.reshape(-1)[i] = (hi - lo) / (2.0 * step)
    return grad


def check_grad(build, x: np.ndarray, rtol: float = 1e-6, atol: float = 1e-8):
    """Compare reverse-mode gradient of build(Tensor) against finite differences."""
    t = Tensor(x.copy(), requires_grad=True)
    out = build(t)
    out.backward()
    expected = numeric_grad(lambda v: float(build(Tensor(v)).data), x.copy())
    np.testing.assert_allclose(t.grad, expected, rtol=rtol, atol=atol)


class TestArithmetic:
    def test_add_broadcast(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(3, 4))
        b = rng.normal(size=(4,))
        check_grad(lambda t: ((t + b) * (t + b)).sum(), x)

    def test_add_accumulates_to_broadcast_operand(self):
        a = Tensor(np.zeros((2, 3)), requires_grad=True)
        b = Tensor(np.zeros((3,)), requires_grad=True)
        (a + b).sum().backward()
        np.testing.assert_array_equal(a.grad, np.ones((2, 3)))
        np.testing.assert_array_equal(b.grad, np.full(3, 2.0))

    def test_mul(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(5,))
        y = rng.normal(size=(5,))
        check_grad(lambda t: (t * y).sum(), x)
        check_grad(lambda t: (t * t).sum(), x)

    def test_div(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(4,)) + 3.0
        check_grad(lambda t: (1.0 / t).sum(), x)
        check_grad(lambda t: (t / 2.5).sum(), x)
        y = rng.normal(size=(4,)) + 3.0
        xt = Tensor(x, requires_grad=True)
        yt = Tensor(y, requires_grad=True)
        (xt / yt).sum().backward()
        np.testing.assert_allclose(xt.grad, 1.0 / y)
        np.testing.assert_allclose(yt.grad, -x / y**2)

    def test_div_by_scalar_tensor(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(4, 1))
        t = Tensor(x, requires_grad=True)
        s = t.sum() + 10.0
        out = (t / s).sum()
        out.backward()
        fn = lambda v: float(v.sum() / (v.sum() + 10.0))
        np.testing.assert_allclose(t.grad, numeric_grad(fn, x.copy()), rtol=1e-6)

    def test_neg_sub(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(6,))
        check_grad(lambda t: (-t).sum(), x)
        check_grad(lambda t: (t - 2.0 * t).sum(), x)
        check_grad(lambda t: (3.0 - t).sum(), x)

    def test_pow(self):
        rng = np.random.default_rng(5)
        x = rng.uniform(0.5, 2.0, size=(5,))
        check_grad(lambda t: (t**3).sum(), x)
        check_grad(lambda t: (t**-0.5).sum(), x)

    def test_pow_rejects_tensor_exponent(self):
        t = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(TypeError):
            t ** as_tensor(2.0)


class TestMatmul:
    def test_plain(self):
        rng = np.random.default_rng(6)
        a = rng.normal(size=(3, 4))
        b = rng.normal(size=(4, 2))
        check_grad(lambda t: (t @ b).sum(), a)
        check_grad(lambda t: (as_tensor(a) @ t).sum(), b)

    def test_stacked(self):
        rng = np.random.default_rng(7)
        a = rng.normal(size=(2, 3, 4))
        b = rng.normal(size=(2, 4, 3))
        check_grad(lambda t: (t @ b).sum(), a)
        check_grad(lambda t: (as_tensor(a) @ t).sum(), b)

    def test_broadcast_batch(self):
        # one shared right operand applied across a stack
        rng = np.random.default_rng(8)
        a = rng.normal(size=(5, 2, 3))
        b = rng.normal(size=(3, 3))
        check_grad(lambda t: (as_tensor(a) @ t).sum(), b)


class TestShapes:
    def test_reshape(self):
        rng = np.random.default_rng(9)
        x = rng.normal(size=(2, 6))
        check_grad(lambda t: (t.reshape(3, 4) * t.reshape(3, 4)).sum(), x)

    def test_transpose(self):
        rng = np.random.default_rng(10)
        x = rng.normal(size=(2, 3, 4))
        w = rng.normal(size=(2, 3, 4))
        check_grad(lambda t: (t.transpose(2, 0, 1) * w.transpose(2, 0, 1)).sum(), x)

    def test_sum_axis_keepdims(self):
        rng = np.random.default_rng(11)
        x = rng.normal(size=(3, 4))
        w = rng.normal(size=(3, 1))
        check_grad(lambda t: (t.sum(axis=1, keepdims=True) * w).sum(), x)
        check_grad(lambda t: (t.sum(axis=0) ** 2).sum(), x)

    def test_mean(self):
        rng = np.random.default_rng(12)
        x = rng.normal(size=(4, 5))
        check_grad(lambda t: (t.mean(axis=-1, keepdims=True) * t).sum(), x)
        check_grad(lambda t: t.mean() * 7.0, x)


class TestNonlinear:
    def test_exp_log(self):
        rng = np.random.default_rng(13)
        x = rng.uniform(0.5, 2.0, size=(6,))
        check_grad(lambda t: autodiff.exp(t).sum(), x)
        check_grad(lambda t: autodiff.log(t).sum(), x)

    def test_relu(self):
        x = np.array([-2.0, -0.5, 0.5, 3.0])
        t = Tensor(x, requires_grad=True)
        autodiff.relu(t).sum().backward()
        np.testing.assert_array_equal(t.grad, [0.0, 0.0, 1.0, 1.0])

    def test_softmax_rows_sum_to_one(self):
        rng = np.random.default_rng(14)
        x = rng.normal(size=(3, 5)) * 10.0
        out = autodiff.softmax(Tensor(x))
        np.testing.assert_allclose(out.data.sum(axis=-1), np.ones(3), rtol=1e-12)

    def test_softmax_grad(self):
        rng = np.random.default_rng(15)
        x = rng.normal(size=(2, 4))
        w = rng.normal(size=(2, 4))
        check_grad(lambda t: (autodiff.softmax(t, axis=-1) * w).sum(), x)

    def test_softmax_shift_invariance(self):
        x = np.array([[1.0, 2.0, 3.0]])
        a = autodiff.softmax(Tensor(x)).data
        b = autodiff.softmax(Tensor(x + 100.0)).data
        np.testing.assert_allclose(a, b, rtol=1e-12)

    def test_layer_norm_grad(self):
        rng = np.random.default_rng(16)
        x = rng.normal(size=(3, 8))
        g = rng.normal(size=(8,))
        b = rng.normal(size=(8,))
        w = rng.normal(size=(3, 8))
        check_grad(
            lambda t: (autodiff.layer_norm(t, as_tensor(g), as_tensor(b)) * w).sum(),
            x,
            rtol=1e-5,
            atol=1e-7,
        )

    def test_layer_norm_statistics(self):
        rng = np.random.default_rng(17)
        x = rng.normal(size=(4, 16)) * 5.0 + 2.0
        out = autodiff.layer_norm(
            Tensor(x), Tensor(np.ones(16)), Tensor(np.zeros(16))
        ).data
        np.testing.assert_allclose(out.mean(axis=-1), 0.0, atol=1e-12)
        np.testing.assert_allclose(out.var(axis=-1), 1.0, atol=1e-4)


class TestGraph:
    def test_constant_folding_skips_graph(self):
        a = Tensor(np.ones((2, 2)))
        b = Tensor(np.ones((2, 2)))
        out = a @ b + a * b
        assert not out.requires_grad
        assert out._parents == ()

    def test_reused_node_accumulates(self):
        x = Tensor(np.array([3.0]), requires_grad=True)
        y = x * x + x
        y.sum().backward()
        np.testing.assert_allclose(x.grad, [7.0])

    def test_backward_requires_scalar(self):
        t = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(ValueError):
            (t * 2.0).backward()

    def test_diamond_graph(self):
        x = Tensor(np.array([2.0]), requires_grad=True)
        a = x * 3.0
        b = x + 1.0
        (a * b).sum().backward()
        # d/dx (3x * (x+1)) = 6x + 3
        np.testing.assert_allclose(x.grad, [15.0])

    def test_deep_chain(self):
        x = Tensor(np.array([1.0]), requires_grad=True)
        y = x
        for _ in range(2000):
            y = y + 0.001
        y.sum().backward()
        np.testing.assert_allclose(x.grad, [1.0])
