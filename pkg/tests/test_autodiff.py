"""Gradient and semantics checks for the autodiff engine.

Every differentiable op is compared against central finite differences; the
closed-form cases from the op contracts are asserted exactly.
"""

import numpy as np
import pytest
from gradutil import numeric_grad, rel_error

from threadsum import autodiff as ad
from threadsum.errors import InvalidInputError

TOL = 1e-7


def check_op(build, *shapes, seed=0, h=1e-6, tol=TOL):
    """FD-check the scalar ``sum(build(*tensors))`` against backward()."""
    rng = np.random.default_rng(seed)
    tensors = [
        ad.Tensor(rng.standard_normal(s) * 0.5, requires_grad=True) for s in shapes
    ]
    loss = ad.tsum(build(*tensors))
    loss.backward()
    for t in tensors:
        want = numeric_grad(lambda: ad.tsum(build(*tensors)).item(), t.data, h=h)
        assert rel_error(t.grad, want) < tol


class TestElementwise:
    def test_add_broadcast(self):
        check_op(lambda a, b: a + b, (3, 4), (4,))
        check_op(lambda a, b: a + b, (2, 3, 4), (3, 1))

    def test_sub_and_neg(self):
        check_op(lambda a, b: a - b, (3, 4), (3, 4))
        check_op(lambda a: -a, (5,))

    def test_mul_broadcast(self):
        check_op(lambda a, b: a * b, (3, 4), (4,))
        check_op(lambda a: a * 2.5, (3, 4))

    def test_exp_log_tanh_sigmoid(self):
        check_op(ad.exp, (3, 4))
        check_op(lambda a: ad.log(a * a + 1.0), (3, 4))
        check_op(ad.tanh, (3, 4))
        check_op(ad.sigmoid, (3, 4))

    def test_sigmoid_tanh_stay_in_open_interval(self):
        # holds for moderate inputs; f64 tanh rounds to +-1.0 beyond |x|~19
        rng = np.random.default_rng(0)
        for _ in range(20):
            x = ad.Tensor(rng.standard_normal(50) * 2.0)
            s = ad.sigmoid(x).data
            t = ad.tanh(x).data
            assert np.all((s > 0.0) & (s < 1.0))
            assert np.all((t > -1.0) & (t < 1.0))

    def test_sigmoid_saturates_without_overflow(self):
        x = ad.Tensor(np.array([-1e4, 1e4]))
        s = ad.sigmoid(x).data
        assert s[0] == 0.0 and s[1] == 1.0


class TestShapeOps:
    def test_sum_axes(self):
        check_op(lambda a: ad.tsum(a), (3, 4))
        check_op(lambda a: ad.tsum(a, axis=1), (3, 4))
        check_op(lambda a: ad.tsum(a, axis=0, keepdims=True), (3, 4))

    def test_mean(self):
        x = ad.Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
        m = ad.mean(x, axis=0)
        np.testing.assert_array_equal(m.data, np.array([1.5, 2.5, 3.5]))
        ad.tsum(m).backward()
        np.testing.assert_array_equal(x.grad, np.full((2, 3), 0.5))

    def test_reshape_transpose(self):
        check_op(lambda a: ad.reshape(a, (4, 3)) * 1.5, (3, 4))
        check_op(lambda a: ad.transpose(a, (2, 0, 1)) * 1.5, (2, 3, 4))

    def test_getitem_slice_and_flip(self):
        check_op(lambda a: a[1:3] * 2.0, (5, 2))
        check_op(lambda a: a[::-1] * 2.0, (5, 2))

    def test_concat(self):
        check_op(lambda a, b: ad.concat([a, b], axis=1), (2, 3), (2, 2))


class TestMatmul:
    def test_sum_matvec_grad_is_outer_product(self):
        # closed form: d sum(W @ x) / dW = outer(ones, x), / dx = column sums of W
        rng = np.random.default_rng(3)
        w = ad.Tensor(rng.standard_normal((4, 3)), requires_grad=True)
        x = ad.Tensor(rng.standard_normal(3), requires_grad=True)
        ad.tsum(ad.matmul(w, x)).backward()
        np.testing.assert_array_equal(w.grad, np.outer(np.ones(4), x.data))
        np.testing.assert_allclose(x.grad, w.data.sum(axis=0), rtol=0, atol=1e-15)

    def test_matmul_shapes(self):
        check_op(lambda a, b: ad.matmul(a, b), (4, 3), (3, 5))
        check_op(lambda a, b: ad.matmul(a, b), (3,), (3, 5))
        check_op(lambda a, b: ad.matmul(a, b), (4, 3), (3,))
        check_op(lambda a, b: ad.matmul(a, b), (2, 4, 3), (3, 5))

    def test_matmul_batched_both(self):
        check_op(lambda a, b: ad.matmul(a, b), (2, 1, 4), (2, 4, 3))


class TestAccumulation:
    def test_tensor_used_twice_gets_summed_grads(self):
        x = ad.Tensor(np.array([1.0, 2.0]), requires_grad=True)
        y = ad.tsum(x * x)
        y.backward()
        np.testing.assert_array_equal(x.grad, 2.0 * x.data)

    def test_diamond_graph(self):
        check_op(lambda a: (a + a) * a + ad.tanh(a), (3, 3))

    def test_grads_accumulate_across_backward_calls(self):
        x = ad.Tensor(np.ones(3), requires_grad=True)
        ad.tsum(x * 3.0).backward()
        ad.tsum(x * 3.0).backward()
        np.testing.assert_array_equal(x.grad, np.full(3, 6.0))

    def test_backward_rejects_non_scalar(self):
        x = ad.Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(InvalidInputError):
            (x * 2.0).backward()


class TestMaskedSoftmax:
    def test_uniform_scores_give_uniform_weights(self):
        x = ad.Tensor(np.zeros(8), requires_grad=True)
        out = ad.masked_softmax(x, np.ones(8, dtype=bool))
        np.testing.assert_array_equal(out.data, np.full(8, 0.125))

    def test_masked_entries_exactly_zero_with_zero_grad(self):
        rng = np.random.default_rng(1)
        x = ad.Tensor(rng.standard_normal((3, 6)), requires_grad=True)
        mask = rng.random((3, 6)) < 0.5
        mask[:, 0] = True
        out = ad.masked_softmax(x, mask)
        assert np.all(out.data[~mask] == 0.0)
        np.testing.assert_allclose(out.data.sum(axis=-1), 1.0, rtol=0, atol=1e-12)
        ad.tsum(ad.tanh(out * 3.0)).backward()
        assert np.all(x.grad[~mask] == 0.0)

    def test_saturation(self):
        x = ad.Tensor(np.array([60.0, 0.0]))
        out = ad.masked_softmax(x, np.ones(2, dtype=bool)).data
        assert abs(out[0] - 1.0) < 1e-20
        assert out[1] < 1e-20

    def test_fully_masked_slice_rejected(self):
        x = ad.Tensor(np.zeros((2, 4)))
        mask = np.ones((2, 4), dtype=bool)
        mask[1] = False
        with pytest.raises(InvalidInputError):
            ad.masked_softmax(x, mask)

    def test_gradient_vs_fd(self):
        mask = np.array([True, True, False, True, True, False])

        def build(a):
            return ad.tanh(ad.masked_softmax(a, mask) * 2.0)

        check_op(build, (6,), h=1e-6, tol=1e-6)


class TestLookupOps:
    def test_embedding_repeated_ids_accumulate(self):
        table = ad.Tensor(np.arange(15.0).reshape(5, 3), requires_grad=True)
        ids = np.array([[1, 1], [2, 0]])
        out = ad.embedding(table, ids)
        assert out.shape == (2, 2, 3)
        ad.tsum(out * 2.0).backward()
        want = np.zeros((5, 3))
        want[1] = 4.0
        want[2] = 2.0
        want[0] = 2.0
        np.testing.assert_array_equal(table.grad, want)

    def test_embedding_vs_fd(self):
        ids = np.array([0, 2, 2, 1])
        check_op(lambda t: ad.tanh(ad.embedding(t, ids)), (4, 3))

    def test_take_along_last(self):
        idx = np.array([[2, 0], [1, 1]])
        check_op(lambda t: ad.take_along_last(t, idx), (2, 2, 3))


class TestLossOps:
    def test_bce_known_values(self):
        z = ad.Tensor(np.array([0.0, 0.0]))
        loss = ad.bce_with_logits(z, np.array([1.0, 0.0]))
        np.testing.assert_allclose(loss.data, np.log(2.0), rtol=0, atol=1e-15)

    def test_bce_stable_for_huge_logits(self):
        z = ad.Tensor(np.array([1000.0, -1000.0]), requires_grad=True)
        loss = ad.bce_with_logits(z, np.array([0.0, 1.0]))
        np.testing.assert_allclose(loss.data, np.array([1000.0, 1000.0]))
        ad.tsum(loss).backward()
        np.testing.assert_allclose(z.grad, np.array([1.0, -1.0]))

    def test_bce_grad_vs_fd(self):
        y = np.array([1.0, 0.0, 1.0, 0.0])
        check_op(lambda z: ad.bce_with_logits(z, y), (4,))

    def test_cross_entropy_uniform_logits(self):
        logits = ad.Tensor(np.zeros((2, 8)))
        nll = ad.cross_entropy_logits(logits, np.array([3, 5]))
        np.testing.assert_allclose(nll.data, np.log(8.0), rtol=0, atol=1e-15)

    def test_cross_entropy_masked_rows_are_silent(self):
        logits = ad.Tensor(np.random.default_rng(0).standard_normal((3, 5)),
                           requires_grad=True)
        targets = np.array([1, 2, 3])
        mask = np.array([True, False, True])
        nll = ad.cross_entropy_logits(logits, targets, mask=mask)
        assert nll.data[1] == 0.0
        ad.tsum(nll).backward()
        assert np.all(logits.grad[1] == 0.0)

    def test_cross_entropy_grad_vs_fd(self):
        targets = np.array([[1, 4], [0, 2]])
        mask = np.array([[True, True], [True, False]])
        check_op(
            lambda z: ad.cross_entropy_logits(z, targets, mask=mask), (2, 2, 5)
        )


class TestModes:
    def test_no_grad_builds_no_graph(self):
        x = ad.Tensor(np.ones(3), requires_grad=True)
        with ad.no_grad():
            y = ad.tsum(x * 2.0)
        assert not y.requires_grad
        assert y._backward is None

    def test_no_grad_restores_state(self):
        with ad.no_grad():
            pass
        assert ad.grad_enabled()

    def test_debug_checks_catch_nonfinite(self):
        ad.set_debug_checks(True)
        try:
            with np.errstate(invalid="ignore"), pytest.raises(FloatingPointError):
                ad.log(ad.Tensor(np.array([-1.0])))
        finally:
            ad.set_debug_checks(False)
        # off by default: produces nan silently
        with np.errstate(invalid="ignore"):
            out = ad.log(ad.Tensor(np.array([-1.0])))
        assert np.isnan(out.data[0])

    def test_backward_is_deterministic(self):
        def run():
            rng = np.random.default_rng(7)
            x = ad.Tensor(rng.standard_normal((4, 4)), requires_grad=True)
            w = ad.Tensor(rng.standard_normal((4, 4)), requires_grad=True)
            loss = ad.tsum(ad.tanh(ad.matmul(x, w)) * x)
            loss.backward()
            return x.grad.copy(), w.grad.copy()

        gx1, gw1 = run()
        gx2, gw2 = run()
        np.testing.assert_array_equal(gx1, gx2)
        np.testing.assert_array_equal(gw1, gw2)
