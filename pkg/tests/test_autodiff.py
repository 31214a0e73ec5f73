"""Tests for the reverse-mode autodiff engine and the Adam optimizer."""
from __future__ import annotations

import math

import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crossing_profiler import autodiff as ad
from crossing_profiler.autodiff import (
    AdamState,
    Tensor,
    adam_step,
    backward,
    concat,
    matmul,
    mean_all,
    power,
    relu,
    row,
    sigmoid,
    softmax_rows,
    stack_rows,
    sum_all,
    sum_along,
    tanh,
    transpose,
    zero_grad,
)
from crossing_profiler.errors import ContractError, ShapeError

import gradcheck


class TestTensorBasics:
    def test_grad_starts_at_zero(self):
        t = Tensor([[1.0, 2.0], [3.0, 4.0]])
        assert t.shape == (2, 2)
        npt.assert_array_equal(t.grad, np.zeros((2, 2)))

    def test_default_dtype_is_float64(self):
        assert Tensor([1, 2, 3]).dtype == np.float64

    def test_float32_opt_in(self):
        assert Tensor([1.0], dtype=np.float32).dtype == np.float32

    def test_rank_above_three_rejected(self):
        with pytest.raises(ShapeError):
            Tensor(np.zeros((2, 2, 2, 2)))

    def test_mixed_dtypes_in_one_graph_rejected(self):
        a = Tensor([1.0], dtype=np.float64)
        b = Tensor([1.0], dtype=np.float32)
        with pytest.raises(ContractError):
            ad.add(a, b)

    def test_integer_dtype_rejected(self):
        with pytest.raises(ContractError):
            Tensor([1, 2], dtype=np.int64)


class TestFrozenValues:
    """Hand-derived expected values, frozen before the ops were written."""

    def test_matmul_worked_example(self):
        # [[1,2],[3,4]] @ [[5],[6]] = [[17],[39]], expanded by hand
        out = matmul(Tensor([[1.0, 2.0], [3.0, 4.0]]), Tensor([[5.0], [6.0]]))
        npt.assert_array_equal(out.data, [[17.0], [39.0]])

    def test_sigmoid_at_one(self):
        out = sigmoid(Tensor([1.0]))
        assert abs(out.data[0] - 0.7310585786300049) < 1e-15

    def test_tanh_at_one(self):
        out = tanh(Tensor([1.0]))
        assert abs(out.data[0] - 0.7615941559557649) < 1e-15

    def test_softmax_of_one_two(self):
        out = softmax_rows(Tensor([[1.0, 2.0]]))
        npt.assert_allclose(out.data, [[0.2689414213699951, 0.7310585786300049]], atol=1e-15)

    def test_relu_clamps_negatives(self):
        out = relu(Tensor([-2.0, 0.0, 3.0]))
        npt.assert_array_equal(out.data, [0.0, 0.0, 3.0])

    def test_sigmoid_extreme_inputs_do_not_overflow(self):
        with np.errstate(over="raise"):
            out = sigmoid(Tensor([-1000.0, 1000.0]))
        npt.assert_allclose(out.data, [0.0, 1.0], atol=1e-12)


class TestElementwiseProperties:
    @given(st.floats(min_value=-50, max_value=50))
    def test_sigmoid_symmetry(self, t):
        s = sigmoid(Tensor([t, -t]))
        assert abs(s.data[0] + s.data[1] - 1.0) < 1e-12

    @given(st.floats(min_value=-50, max_value=50))
    def test_tanh_is_odd(self, t):
        y = tanh(Tensor([t, -t]))
        assert abs(y.data[0] + y.data[1]) < 1e-12

    @given(
        st.lists(st.floats(min_value=-30, max_value=30), min_size=2, max_size=8),
        st.floats(min_value=-20, max_value=20),
    )
    def test_softmax_rows_sum_to_one_and_shift_invariance(self, values, shift):
        base = softmax_rows(Tensor([values]))
        shifted = softmax_rows(Tensor([[v + shift for v in values]]))
        assert abs(base.data.sum() - 1.0) < 1e-12
        npt.assert_allclose(base.data, shifted.data, atol=1e-12)

    @given(st.lists(st.floats(min_value=-10, max_value=10), min_size=1, max_size=10))
    def test_relu_idempotent(self, values):
        once = relu(Tensor(values))
        twice = relu(relu(Tensor(values)))
        npt.assert_array_equal(once.data, twice.data)


class TestBackwardContract:
    def test_non_scalar_loss_rejected(self):
        t = Tensor([1.0, 2.0])
        with pytest.raises(ContractError):
            backward(t)

    def test_reused_node_accumulates(self):
        # loss = t*t, dloss/dt = 2t
        t = Tensor([3.0])
        loss = sum_all(ad.mul(t, t))
        backward(loss)
        npt.assert_allclose(t.grad, [6.0], atol=1e-12)

    def test_backward_is_bit_deterministic(self):
        rng = np.random.default_rng(42)
        a0 = rng.uniform(-2, 2, (4, 3))
        b0 = rng.uniform(-2, 2, (3, 5))

        def run():
            a, b = Tensor(a0), Tensor(b0)
            loss = mean_all(tanh(matmul(a, b)))
            backward(loss)
            return a.grad.copy(), b.grad.copy()

        ga1, gb1 = run()
        ga2, gb2 = run()
        assert ga1.tobytes() == ga2.tobytes()
        assert gb1.tobytes() == gb2.tobytes()

    def test_zero_grad_clears_buffers(self):
        t = Tensor([1.0])
        loss = sum_all(ad.mul(t, t))
        backward(loss)
        zero_grad([t])
        npt.assert_array_equal(t.grad, [0.0])

    def test_matmul_shape_error_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(4, 5\)"):
            matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 5))))


class TestGradientChecks:
    """Every differentiable op against the central finite-difference oracle."""

    TOL = 1e-4

    def setup_method(self):
        self.rng = np.random.default_rng(42)

    def u(self, *shape):
        return self.rng.uniform(-2.0, 2.0, shape)

    def test_add_broadcast(self):
        err = gradcheck.check_gradients(
            lambda a, b: sum_all(ad.add(a, b)), [self.u(3, 4), self.u(4)]
        )
        assert err < self.TOL

    def test_sub(self):
        err = gradcheck.check_gradients(
            lambda a, b: mean_all(ad.sub(a, b)), [self.u(3, 4), self.u(3, 4)]
        )
        assert err < self.TOL

    def test_mul_broadcast(self):
        err = gradcheck.check_gradients(
            lambda a, b: sum_all(ad.mul(a, b)), [self.u(3, 4), self.u(3, 1)]
        )
        assert err < self.TOL

    def test_div(self):
        b = self.u(3, 4)
        b += np.sign(b) * 0.5  # keep the denominator away from zero
        err = gradcheck.check_gradients(
            lambda x, y: sum_all(ad.div(x, y)), [self.u(3, 4), b]
        )
        assert err < self.TOL

    def test_neg_and_scale_and_add_scalar(self):
        err = gradcheck.check_gradients(
            lambda a: sum_all(ad.add_scalar(ad.scale(ad.neg(a), 1.7), 0.3)), [self.u(5)]
        )
        assert err < self.TOL

    def test_power_square(self):
        err = gradcheck.check_gradients(lambda a: sum_all(power(a, 2.0)), [self.u(4, 3)])
        assert err < self.TOL

    def test_power_sqrt(self):
        a = np.abs(self.u(6)) + 0.5
        err = gradcheck.check_gradients(lambda t: sum_all(power(t, 0.5)), [a])
        assert err < self.TOL

    def test_matmul_2d_2d(self):
        err = gradcheck.check_gradients(
            lambda a, b: sum_all(matmul(a, b)), [self.u(3, 4), self.u(4, 2)]
        )
        assert err < self.TOL

    def test_matmul_matrix_vector(self):
        err = gradcheck.check_gradients(
            lambda a, b: sum_all(matmul(a, b)), [self.u(3, 4), self.u(4)]
        )
        assert err < self.TOL

    def test_matmul_vector_matrix(self):
        err = gradcheck.check_gradients(
            lambda a, b: sum_all(matmul(a, b)), [self.u(3), self.u(3, 2)]
        )
        assert err < self.TOL

    def test_transpose(self):
        err = gradcheck.check_gradients(
            lambda a, b: sum_all(matmul(transpose(a), b)), [self.u(4, 3), self.u(4, 2)]
        )
        assert err < self.TOL

    def test_concat_axis0_and_axis1(self):
        err0 = gradcheck.check_gradients(
            lambda a, b: sum_all(tanh(concat([a, b], axis=0))), [self.u(3), self.u(4)]
        )
        err1 = gradcheck.check_gradients(
            lambda a, b: sum_all(tanh(concat([a, b], axis=1))), [self.u(2, 3), self.u(2, 2)]
        )
        assert err0 < self.TOL and err1 < self.TOL

    def test_row_and_stack_rows(self):
        def build(m):
            r0 = row(m, 0)
            r2 = row(m, 2)
            return sum_all(tanh(stack_rows([r2, r0, r0])))

        err = gradcheck.check_gradients(build, [self.u(4, 3)])
        assert err < self.TOL

    def test_reductions(self):
        err = gradcheck.check_gradients(
            lambda a: ad.add(mean_all(a), sum_all(sum_along(power(a, 2.0), 1))),
            [self.u(3, 4)],
        )
        assert err < self.TOL

    def test_sigmoid(self):
        err = gradcheck.check_gradients(lambda a: sum_all(sigmoid(a)), [self.u(3, 4)])
        assert err < self.TOL

    def test_tanh(self):
        err = gradcheck.check_gradients(lambda a: sum_all(tanh(a)), [self.u(3, 4)])
        assert err < self.TOL

    def test_relu(self):
        # keep entries away from the kink so central differences are valid
        a = self.u(3, 4)
        a[np.abs(a) < 0.05] = 0.5
        err = gradcheck.check_gradients(lambda t: sum_all(relu(t)), [a])
        assert err < self.TOL

    def test_softmax_rows(self):
        w = self.u(3, 4)

        def build(a):
            return sum_all(ad.mul(softmax_rows(a), Tensor(w)))

        err = gradcheck.check_gradients(build, [self.u(3, 4)])
        assert err < self.TOL

    def test_composite_chain(self):
        # one graph exercising most ops together
        def build(x, w1, w2):
            h = tanh(matmul(x, w1))
            s = softmax_rows(matmul(h, w2))
            return mean_all(ad.mul(s, s))

        err = gradcheck.check_gradients(
            build, [self.u(3, 4), self.u(4, 5), self.u(5, 2)]
        )
        assert err < self.TOL


class TestAdam:
    def test_zero_gradient_is_a_fixed_point(self):
        p = np.array([1.0, -2.0, 3.0])
        state = AdamState.for_params([p], learning_rate=0.1)
        before = p.copy()
        for _ in range(50):
            adam_step([p], [np.zeros(3)], state)
        npt.assert_array_equal(p, before)
        assert state.step_count == 50

    def test_first_step_magnitude_is_learning_rate(self):
        # with m_hat = g and v_hat = g^2, the first update is lr * sign(g)
        p = np.array([0.0, 0.0])
        g = np.array([2.5, -0.3])
        state = AdamState.for_params([p], learning_rate=0.01)
        adam_step([p], [g], state)
        npt.assert_allclose(p, [-0.01, 0.01], rtol=1e-6)

    def test_two_hundred_steps_against_scalar_reference_loop(self):
        """Minimize (w-5)^2 from w=0 at lr 0.1; compare to an independent loop."""
        # reference implementation: plain python floats, no shared code
        w_ref, m, v = 0.0, 0.0, 0.0
        lr, b1, b2, eps = 0.1, 0.9, 0.999, 1e-8
        for t in range(1, 201):
            g = 2.0 * (w_ref - 5.0)
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            m_hat = m / (1 - b1 ** t)
            v_hat = v / (1 - b2 ** t)
            w_ref -= lr * m_hat / (math.sqrt(v_hat) + eps)

        p = np.array([0.0])
        state = AdamState.for_params([p], learning_rate=0.1)
        for _ in range(200):
            adam_step([p], [2.0 * (p - 5.0)], state)
        npt.assert_allclose(p[0], w_ref, rtol=1e-12)
        assert abs(p[0] - 5.0) < 0.05

    def test_shape_mismatch_rejected(self):
        p = np.zeros(3)
        state = AdamState.for_params([p])
        with pytest.raises(ShapeError):
            adam_step([p], [np.zeros(4)], state)

    def test_length_mismatch_rejected(self):
        p = np.zeros(3)
        state = AdamState.for_params([p])
        with pytest.raises(ContractError):
            adam_step([p, p], [np.zeros(3), np.zeros(3)], state)
