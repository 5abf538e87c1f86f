import numpy as np
import pytest

from metaprior import graph
from metaprior.graph import (Adam, AdamState, DomainError, Node, ShapeError,
                             adam_step, backward)

from conftest import check_grad, finite_diff


class TestMatmul:
    def test_identity(self):
        a = graph.const(np.eye(2))
        b = graph.const([[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(graph.matmul(a, b).value,
                                      [[1.0, 2.0], [3.0, 4.0]])

    def test_row_times_column(self):
        out = graph.matmul(graph.const([[1.0, 2.0]]), graph.const([[3.0], [4.0]]))
        np.testing.assert_array_equal(out.value, [[11.0]])

    def test_gradient_of_sum(self):
        a = graph.leaf([[1.0, 2.0]])
        b = graph.const([[3.0], [4.0]])
        backward(graph.tsum(graph.matmul(a, b)))
        np.testing.assert_allclose(a.grad, [[3.0, 4.0]], rtol=1e-12)
        # and against finite differences
        check_grad(lambda n: graph.tsum(graph.matmul(n, b)), [[1.0, 2.0]])

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
            graph.matmul(graph.const(np.ones((2, 3))), graph.const(np.ones((2, 3))))


class TestElementwise:
    def test_tanh_zero(self):
        assert graph.tanh(graph.const(0.0)).value == 0.0

    def test_softplus_zero_is_log_two(self):
        assert graph.softplus(graph.const(0.0)).value == pytest.approx(
            0.6931471805599453, abs=1e-15)

    def test_softplus_overflow_safe(self):
        big = graph.softplus(graph.const([1000.0, -1000.0]))
        np.testing.assert_allclose(big.value, [1000.0, 0.0], atol=1e-12)

    def test_tanh_derivative_at_half(self):
        x = graph.leaf(0.5)
        backward(graph.tanh(x))
        expected = finite_diff(lambda a: float(np.tanh(a)), np.array(0.5))
        np.testing.assert_allclose(x.grad, expected, rtol=1e-6)
        assert x.grad == pytest.approx(0.7864477329659274, rel=1e-9)

    def test_log_domain_error(self):
        with pytest.raises(DomainError):
            graph.log(graph.const([1.0, -2.0]))

    def test_broadcast_add_bias(self):
        m = graph.leaf(np.zeros((3, 2)))
        b = graph.leaf([10.0, 20.0])
        out = graph.add(m, b)
        np.testing.assert_array_equal(out.value, [[10, 20]] * 3)
        backward(graph.tsum(out))
        np.testing.assert_array_equal(b.grad, [3.0, 3.0])

    def test_incompatible_broadcast_rejected(self):
        with pytest.raises(ShapeError, match="do not broadcast"):
            graph.add(graph.const(np.ones((2, 3))), graph.const(np.ones((2, 2))))

    @pytest.mark.parametrize("op,x0", [
        (graph.tanh, [0.3, -1.2, 1.9]),
        (graph.exp, [0.1, -0.5, 1.5]),
        (graph.softplus, [-1.8, 0.0, 1.3]),
        (graph.square, [0.7, -1.1, 2.0]),
        (graph.neg, [0.4, -0.9, 1.6]),
        (graph.relu, [0.5, -1.5, 2.0]),
        (graph.log, [0.3, 1.0, 1.9]),
    ])
    def test_unary_gradients_match_finite_differences(self, op, x0):
        check_grad(lambda n: graph.tsum(op(n)), x0)

    def test_binary_gradients(self, rng):
        a0 = rng.uniform(-2, 2, (3, 4))
        b0 = rng.uniform(-2, 2, (3, 4))
        for op in (graph.add, graph.sub, graph.mul):
            bn = graph.const(b0)
            check_grad(lambda n, op=op: graph.tsum(op(n, bn)), a0)


class TestReduce:
    def test_sum(self):
        assert graph.tsum(graph.const([1.0, 2.0, 3.0])).value == 6.0

    def test_mean_gradient(self):
        check_grad(lambda n: graph.tmean(n), [1.0, 2.0, 5.0])

    def test_logsumexp_log_two(self):
        assert graph.logsumexp(graph.const([0.0, 0.0])).value == pytest.approx(
            np.log(2.0), abs=1e-12)

    def test_logsumexp_no_overflow(self):
        out = graph.logsumexp(graph.const([1000.0, 1000.0]))
        assert out.value == pytest.approx(1000.0 + np.log(2.0), abs=1e-9)

    def test_logsumexp_axis_gradient(self, rng):
        x0 = rng.uniform(-2, 2, (3, 4))
        check_grad(lambda n: graph.tsum(graph.logsumexp(n, axis=1)), x0)

    def test_empty_reduction(self):
        with pytest.raises(DomainError):
            graph.tsum(graph.const(np.zeros((0,))))


class TestStructural:
    def test_concat_and_slice_gradients(self, rng):
        x0 = rng.uniform(-2, 2, (3, 2))
        other = graph.const(rng.uniform(-2, 2, (2, 2)))

        def build(n):
            cat = graph.concat([n, other], axis=0)
            return graph.tsum(graph.square(graph.slice_axis(cat, 0, 1, 4)))

        check_grad(build, x0)

    def test_repeat_tile_broadcast_rows(self, rng):
        x0 = rng.uniform(-2, 2, (3, 2))
        check_grad(lambda n: graph.tsum(graph.square(graph.repeat_rows(n, 4))), x0)
        check_grad(lambda n: graph.tsum(graph.square(graph.tile_rows(n, 4))), x0)
        r0 = rng.uniform(-2, 2, (1, 3))
        check_grad(lambda n: graph.tsum(graph.square(graph.broadcast_rows(n, 5))), r0)

    def test_transpose_reshape(self, rng):
        x0 = rng.uniform(-2, 2, (2, 3))
        check_grad(lambda n: graph.tsum(graph.square(graph.transpose(n))), x0)
        check_grad(lambda n: graph.tsum(graph.square(graph.reshape(n, (3, 2)))), x0)

    def test_repeat_rows_values(self):
        out = graph.repeat_rows(graph.const([[1.0, 2.0], [3.0, 4.0]]), 2)
        np.testing.assert_array_equal(out.value, [[1, 2], [1, 2], [3, 4], [3, 4]])
        out = graph.tile_rows(graph.const([[1.0, 2.0], [3.0, 4.0]]), 2)
        np.testing.assert_array_equal(out.value, [[1, 2], [3, 4], [1, 2], [3, 4]])


class TestBackward:
    def test_root_is_leaf(self):
        x = graph.leaf(3.0)
        backward(x)
        assert x.grad == 1.0

    def test_sum_square(self):
        x = graph.leaf([1.0, 2.0])
        backward(graph.tsum(graph.square(x)))
        np.testing.assert_array_equal(x.grad, [2.0, 4.0])

    def test_shared_subexpression_accumulates(self):
        x = graph.leaf([1.5])
        backward(graph.tsum(graph.add(x, x)))
        np.testing.assert_array_equal(x.grad, [2.0])

    def test_diamond_dag(self):
        x = graph.leaf([0.7])
        y = graph.square(x)
        backward(graph.tsum(graph.add(graph.mul(y, graph.const(2.0)), y)))
        np.testing.assert_allclose(x.grad, [3 * 2 * 0.7], rtol=1e-12)

    def test_repeated_backward_accumulates(self):
        x = graph.leaf([1.0, 2.0])
        out = graph.tsum(graph.square(x))
        backward(out)
        backward(out)
        np.testing.assert_array_equal(x.grad, [4.0, 8.0])

    def test_non_scalar_root_rejected(self):
        with pytest.raises(ShapeError, match="scalar root"):
            backward(graph.leaf([1.0, 2.0]))

    def test_composite_matches_finite_differences(self, rng):
        w0 = rng.uniform(-2, 2, (4, 3))
        x = graph.const(rng.uniform(-2, 2, (5, 4)))

        def build(n):
            h = graph.tanh(graph.matmul(x, n))
            return graph.add(graph.tsum(graph.square(h)),
                             graph.logsumexp(graph.reshape(h, (15,))))

        check_grad(build, w0)

    def test_no_op_mutates_inputs(self, rng):
        a0 = rng.uniform(-2, 2, (3, 3))
        b0 = rng.uniform(0.5, 2, (3, 3))
        a, b = graph.const(a0), graph.const(b0)
        for out in (graph.add(a, b), graph.mul(a, b), graph.sub(a, b),
                    graph.matmul(a, b), graph.tanh(a), graph.relu(a),
                    graph.exp(a), graph.log(b), graph.softplus(a),
                    graph.neg(a), graph.square(a), graph.tsum(a),
                    graph.logsumexp(a), graph.concat([a, b], axis=0),
                    graph.repeat_rows(a, 2), graph.transpose(a)):
            assert out is not None
        np.testing.assert_array_equal(a.value, a0)
        np.testing.assert_array_equal(b.value, b0)


class TestAdam:
    def test_first_step_moves_by_lr_sign(self):
        p = graph.leaf([2.0, -3.0])
        g = np.array([0.4, -0.0003])
        adam_step([p], [g], AdamState([p]), lr=0.1)
        np.testing.assert_allclose(p.value, [2.0 - 0.1, -3.0 + 0.1], atol=1e-4)

    def test_zero_grad_leaves_unchanged(self):
        p = graph.leaf([1.0, 2.0])
        adam_step([p], [np.zeros(2)], AdamState([p]), lr=0.1)
        np.testing.assert_array_equal(p.value, [1.0, 2.0])

    def test_quadratic_convergence(self):
        # oracle: run the textbook recurrence independently
        lr, b1, b2, eps = 0.05, 0.9, 0.999, 1e-8
        x_ref, m, v = 5.0, 0.0, 0.0
        for t in range(1, 1001):
            g = 2 * x_ref
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            x_ref -= lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
        assert abs(x_ref) < 0.01

        p = graph.leaf([5.0])
        state = AdamState([p])
        for _ in range(1000):
            adam_step([p], [2 * p.value], state, lr=0.05)
        assert abs(p.value[0]) < 0.01
        assert p.value[0] == pytest.approx(x_ref, abs=1e-12)

    def test_adam_class_uses_leaf_grads(self):
        p = graph.leaf([1.0])
        opt = Adam([p], lr=0.5)
        backward(graph.tsum(graph.square(p)))
        opt.step()
        assert p.value[0] == pytest.approx(0.5, abs=1e-6)


def test_gradcheck_sweep_random_inputs(rng):
    """Analytic vs central differences over random inputs in [-2, 2]."""
    for _ in range(5):
        x0 = rng.uniform(-2, 2, (2, 3))
        y = graph.const(rng.uniform(-2, 2, (3, 2)))

        def build(n):
            a = graph.matmul(n, y)
            b = graph.softplus(graph.add(a, graph.const(0.3)))
            c = graph.mul(graph.tanh(a), b)
            return graph.add(graph.tsum(graph.square(c)), graph.logsumexp(b, axis=None))

        check_grad(build, x0)
