import numpy as np
import numpy.testing as npt
import pytest

from heteroiot.tensor import (
    NonFiniteError,
    ShapeError,
    Tensor,
    concat,
    grad_enabled,
    no_grad,
    stack,
)


class TestForwardOps:
    def test_matmul_shape_algebra(self):
        a = Tensor(np.ones((2, 3)))
        b = Tensor(np.ones((3, 4)))
        assert (a @ b).shape == (2, 4)

    def test_matmul_hand_product(self):
        a = Tensor([[1.0, 2.0], [3.0, 4.0]])
        b = Tensor([[1.0], [1.0]])
        npt.assert_array_equal((a @ b).data, [[3.0], [7.0]])

    def test_matmul_inner_dim_mismatch_names_shapes(self):
        with pytest.raises(ShapeError, match=r"matmul.*\(2, 3\).*\(4, 4\)"):
            Tensor(np.ones((2, 3))) @ Tensor(np.ones((4, 4)))

    def test_add_identity(self):
        x = np.array([1.5, -2.0, 0.0, 3.25, 7.0])
        out = Tensor(x) + Tensor(np.zeros(5))
        npt.assert_array_equal(out.data, x)

    def test_add_shape_mismatch(self):
        with pytest.raises(ShapeError, match="add"):
            Tensor(np.ones(4)) + Tensor(np.ones(5))

    def test_bias_broadcast_leading_one(self):
        x = Tensor(np.zeros((2, 3)))
        b = Tensor(np.array([1.0, 2.0, 3.0]))
        out = x + b
        npt.assert_array_equal(out.data, [[1, 2, 3], [1, 2, 3]])

    def test_interior_broadcast_rejected(self):
        # only the leading-1 rule is supported
        with pytest.raises(ShapeError):
            Tensor(np.ones((2, 1, 4))) + Tensor(np.ones((2, 3, 4)))

    def test_non_finite_output_is_error(self):
        big = Tensor(np.array([1e308]))
        with pytest.raises(NonFiniteError, match="add"):
            big + big

    def test_non_finite_constructor_rejected(self):
        with pytest.raises(NonFiniteError):
            Tensor([np.nan])

    def test_scalar_arithmetic(self):
        x = Tensor(np.array([2.0, 4.0]))
        npt.assert_array_equal((x * 2.0).data, [4.0, 8.0])
        npt.assert_array_equal((x / 2.0).data, [1.0, 2.0])
        npt.assert_array_equal((1.0 - x).data, [-1.0, -3.0])


class TestBackward:
    def test_square_sum(self):
        w = Tensor([3.0], requires_grad=True)
        (w * w).sum().backward()
        npt.assert_array_equal(w.grad, [6.0])

    def test_bilinear(self):
        a = Tensor([1.0, 2.0], requires_grad=True)
        b = Tensor([4.0, 5.0], requires_grad=True)
        (a * b).sum().backward()
        npt.assert_array_equal(a.grad, [4.0, 5.0])
        npt.assert_array_equal(b.grad, [1.0, 2.0])

    def test_accumulation_doubles_without_zero(self):
        w = Tensor([3.0, -1.0], requires_grad=True)
        loss = (w * w).sum()
        loss.backward()
        first = w.grad.copy()
        loss.backward()
        npt.assert_array_equal(w.grad, 2.0 * first)

    def test_zero_grad_resets(self):
        w = Tensor([2.0], requires_grad=True)
        (w * w).sum().backward()
        w.zero_grad()
        assert w.grad is None

    def test_non_scalar_backward_rejected(self):
        w = Tensor([1.0, 2.0], requires_grad=True)
        with pytest.raises(ValueError, match="scalar"):
            (w * w).backward()

    def test_backward_without_graph_rejected(self):
        w = Tensor([1.0], requires_grad=True)
        with pytest.raises(RuntimeError, match="no recorded graph"):
            w.backward()
        plain = Tensor([1.0]) * Tensor([2.0])
        with pytest.raises(RuntimeError, match="no recorded graph"):
            plain.sum().backward()

    def test_matmul_grads(self):
        a = Tensor([[1.0, 2.0], [3.0, 4.0]], requires_grad=True)
        b = Tensor([[5.0], [6.0]], requires_grad=True)
        (a @ b).sum().backward()
        npt.assert_array_equal(a.grad, [[5.0, 6.0], [5.0, 6.0]])
        npt.assert_array_equal(b.grad, [[4.0], [6.0]])

    def test_linearity_of_backward(self):
        # grad of alpha*f + beta*g == alpha*grad(f) + beta*grad(g)
        rng = np.random.default_rng(0)
        x0 = rng.normal(size=(4, 3))
        alpha, beta = 2.5, -1.25

        def grads(fn):
            x = Tensor(x0.copy(), requires_grad=True)
            fn(x).backward()
            return x.grad

        f = lambda x: (x * x).sum()
        g = lambda x: (x.tanh() * Tensor(np.ones((4, 3)))).sum()
        combined = grads(lambda x: f(x) * alpha + g(x) * beta)
        npt.assert_allclose(combined, alpha * grads(f) + beta * grads(g), atol=1e-10)

    def test_reused_operand_accumulates_within_one_backward(self):
        x = Tensor([2.0], requires_grad=True)
        y = x * x * x  # d/dx x^3 = 3x^2 = 12
        y.sum().backward()
        npt.assert_allclose(x.grad, [12.0])

    def test_determinism_bit_identical(self):
        def run():
            rng = np.random.default_rng(12)
            x = Tensor(rng.normal(size=(5, 4)), requires_grad=True)
            w = Tensor(rng.normal(size=(4, 2)), requires_grad=True)
            ((x @ w).tanh() * Tensor(rng.normal(size=(5, 2)))).sum().backward()
            return x.grad.copy(), w.grad.copy(), x.data.copy()

        a1, b1, d1 = run()
        a2, b2, d2 = run()
        assert a1.tobytes() == a2.tobytes()
        assert b1.tobytes() == b2.tobytes()
        assert d1.tobytes() == d2.tobytes()


class TestGraphRecording:
    def test_no_grad_purity(self):
        x = Tensor(np.ones(3))
        out = (x * x).sum()
        assert out._parents == () and out._backward is None
        assert not out.requires_grad

    def test_no_grad_context(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with no_grad():
            assert not grad_enabled()
            out = (x * x).sum()
        assert out._parents == () and not out.requires_grad
        assert grad_enabled()

    def test_tracked_when_any_input_requires_grad(self):
        a = Tensor(np.ones(2), requires_grad=True)
        b = Tensor(np.ones(2))
        out = a + b
        assert out.requires_grad and len(out._parents) == 2


class TestShapeOps:
    def test_reshape_transpose_roundtrip_grads(self):
        x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
        y = x.reshape(3, 2).transpose(1, 0)
        (y * Tensor(np.ones((2, 3)))).sum().backward()
        npt.assert_array_equal(x.grad, np.ones((2, 3)))

    def test_getitem_grad_scatter(self):
        x = Tensor(np.arange(12.0).reshape(3, 4), requires_grad=True)
        x[1].sum().backward()
        expected = np.zeros((3, 4))
        expected[1] = 1.0
        npt.assert_array_equal(x.grad, expected)

    def test_getitem_rejects_fancy_indexing(self):
        x = Tensor(np.zeros((3, 3)))
        with pytest.raises(TypeError):
            x[[0, 1]]

    def test_concat_and_split_grads(self):
        a = Tensor(np.ones((2, 2)), requires_grad=True)
        b = Tensor(np.ones((2, 3)), requires_grad=True)
        out = concat([a, b], axis=1)
        assert out.shape == (2, 5)
        (out * Tensor(np.arange(10.0).reshape(2, 5))).sum().backward()
        npt.assert_array_equal(a.grad, [[0, 1], [5, 6]])
        npt.assert_array_equal(b.grad, [[2, 3, 4], [7, 8, 9]])

    def test_stack_grads(self):
        a = Tensor(np.ones(3), requires_grad=True)
        b = Tensor(np.zeros(3), requires_grad=True)
        out = stack([a, b], axis=0)
        assert out.shape == (2, 3)
        (out * Tensor(np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]))).sum().backward()
        npt.assert_array_equal(a.grad, [1, 2, 3])
        npt.assert_array_equal(b.grad, [4, 5, 6])

    def test_mean_axis_grad(self):
        x = Tensor(np.ones((2, 4)), requires_grad=True)
        x.mean(axis=1).sum().backward()
        npt.assert_allclose(x.grad, np.full((2, 4), 0.25))
