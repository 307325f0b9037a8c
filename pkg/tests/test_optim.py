"""Optimizer tests: Adam update math, convergence, and gradient clipping."""

import numpy as np
import pytest

from threadsum.autodiff import Tensor
from threadsum.errors import ConfigurationError
from threadsum.optim import AdamState, adam_step, clip_gradients


def make_param(values, name="w"):
    return Tensor(np.asarray(values, dtype=np.float64), requires_grad=True, name=name)


class TestAdam:
    def test_first_step_is_signed_lr(self):
        # bias correction makes step one ~ -lr * sign(g) regardless of |g|
        w = make_param([1.0, 1.0, 1.0, 1.0])
        before = w.data.copy()
        g = np.array([3.0, -0.004, 250.0, -9.0])
        state = AdamState(lr=1e-2)
        adam_step(state, {"w": w}, {"w": g})
        np.testing.assert_allclose(w.data - before, -1e-2 * np.sign(g), rtol=1e-5)
        assert state.step_count == 1

    def test_two_steps_match_hand_computation(self):
        w = make_param([0.5])
        state = AdamState(lr=0.1)
        g1, g2 = np.array([2.0]), np.array([-1.0])
        adam_step(state, {"w": w}, {"w": g1})
        adam_step(state, {"w": w}, {"w": g2})

        # independent recomputation of the textbook update rule
        b1, b2, eps = 0.9, 0.999, 1e-8
        m = v = 0.0
        x = 0.5
        for t, g in ((1, 2.0), (2, -1.0)):
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            x -= 0.1 * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
        np.testing.assert_allclose(w.data, [x], rtol=0, atol=1e-15)

    def test_converges_on_quadratic_bowl(self):
        w = make_param([3.0, -2.0, 1.0, 0.5])
        state = AdamState(lr=0.1)
        for _ in range(500):
            adam_step(state, {"w": w}, {"w": 2.0 * w.data})
        assert float(np.linalg.norm(w.data)) < 1e-3

    def test_reads_accumulated_grads_by_default(self):
        w = make_param([1.0])
        w.grad = np.array([4.0])
        adam_step(AdamState(lr=0.5), {"w": w})
        assert w.data[0] < 1.0

    def test_missing_grad_rejected(self):
        w = make_param([1.0])
        with pytest.raises(ConfigurationError, match="no gradient"):
            adam_step(AdamState(), {"w": w})

    def test_grad_table_must_match_params(self):
        w = make_param([1.0])
        with pytest.raises(ConfigurationError, match="missing"):
            adam_step(AdamState(), {"w": w}, {})
        with pytest.raises(ConfigurationError, match="unexpected"):
            adam_step(AdamState(), {"w": w}, {"w": np.ones(1), "q": np.ones(1)})

    def test_deterministic(self):
        def run():
            w = make_param([1.0, -2.0])
            state = AdamState(lr=0.05)
            for t in range(20):
                adam_step(state, {"w": w}, {"w": np.array([np.sin(t), 0.5])})
            return w.data.copy()

        np.testing.assert_array_equal(run(), run())


class TestClip:
    def test_large_gradients_scaled_to_max_norm(self):
        g = {"a": np.array([6.0, 8.0])}  # norm 10
        norm = clip_gradients(g, max_norm=5.0)
        assert norm == 10.0
        np.testing.assert_allclose(g["a"], [3.0, 4.0], rtol=0, atol=1e-15)

    def test_small_gradients_untouched(self):
        g = {"a": np.array([3.0, 4.0])}
        norm = clip_gradients(g, max_norm=5.0)
        assert norm == 5.0
        np.testing.assert_array_equal(g["a"], [3.0, 4.0])

    def test_norm_is_global_across_params(self):
        g = {"a": np.full(16, 1.0), "b": np.full(9, 1.0)}  # norm 5
        norm = clip_gradients(g, max_norm=2.5)
        np.testing.assert_allclose(norm, 5.0)
        total = np.sqrt(sum(np.sum(x * x) for x in g.values()))
        np.testing.assert_allclose(total, 2.5)

    def test_zero_gradients(self):
        g = {"a": np.zeros(3)}
        assert clip_gradients(g, max_norm=1.0) == 0.0
        np.testing.assert_array_equal(g["a"], np.zeros(3))
