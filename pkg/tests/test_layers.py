"""Layer tests.

The fused LSTM ops have hand-written backward passes, so they are checked two
independent ways: against central finite differences, and against a reference
implementation composed from the already-verified elementwise primitives.
"""

import numpy as np
import pytest
from gradutil import numeric_grad, rel_error

from threadsum import autodiff as ad
from threadsum import nn
from threadsum.errors import ConfigurationError, DimensionError, InvalidInputError


def make_store(seed=0, dtype=np.float64):
    return nn.ParamStore(np.random.default_rng(seed), dtype=dtype)


def ref_lstm_step(params, x, h, c):
    """LSTM step built only from verified primitives; the equivalence oracle."""
    xh = ad.concat([x, h], axis=-1)

    def gate(w, b, act):
        return act(ad.matmul(xh, w) + b)

    i = gate(params.w_i, params.b_i, ad.sigmoid)
    f = gate(params.w_f, params.b_f, ad.sigmoid)
    o = gate(params.w_o, params.b_o, ad.sigmoid)
    g = gate(params.w_g, params.b_g, ad.tanh)
    c_new = f * c + i * g
    h_new = o * ad.tanh(c_new)
    return h_new, c_new


def scan_by_steps(params, xs, mask, step_fn):
    """Masked scan built by looping a step function; the scan oracle."""
    steps, batch, _ = xs.shape
    d = params.hidden_dim
    h = ad.Tensor(np.zeros((batch, d)))
    c = ad.Tensor(np.zeros((batch, d)))
    outs = []
    for t in range(steps):
        m = ad.Tensor(mask[t].astype(np.float64)[:, None])
        keep = ad.Tensor(1.0 - m.data)
        h_new, c_new = step_fn(params, xs[t], h, c)
        outs.append(ad.reshape(h_new * m, (1, batch, d)))
        h = h_new * m + h * keep
        c = c_new * m + c * keep
    return ad.concat(outs, axis=0)


def collect_grads(params):
    return {t.name: t.grad.copy() for t in params.weight_tensors()}


class TestLstmStep:
    def test_matches_primitive_reference(self):
        rng = np.random.default_rng(1)
        for trial in range(3):
            store = make_store(trial)
            p = nn.LstmParams.create(store, "lstm", 3, 4)
            x = ad.Tensor(rng.standard_normal((2, 3)), requires_grad=True)
            h0 = ad.Tensor(rng.standard_normal((2, 4)), requires_grad=True)
            c0 = ad.Tensor(rng.standard_normal((2, 4)), requires_grad=True)
            r = rng.standard_normal((2, 4))

            h1, c1 = nn.lstm_step(p, x, h0, c0)
            h2, c2 = ref_lstm_step(p, x, h0, c0)
            np.testing.assert_allclose(h1.data, h2.data, rtol=0, atol=1e-14)
            np.testing.assert_allclose(c1.data, c2.data, rtol=0, atol=1e-14)

            ad.tsum(h1 * r + c1 * 0.5).backward()
            got = collect_grads(p) | {"x": x.grad, "h": h0.grad, "c": c0.grad}
            store.zero_grads()
            x.grad = h0.grad = c0.grad = None
            ad.tsum(h2 * r + c2 * 0.5).backward()
            want = collect_grads(p) | {"x": x.grad, "h": h0.grad, "c": c0.grad}
            for name in want:
                np.testing.assert_allclose(got[name], want[name], rtol=0,
                                           atol=1e-12, err_msg=name)

    def test_grads_vs_fd(self):
        store = make_store(5)
        p = nn.LstmParams.create(store, "lstm", 2, 3)
        rng = np.random.default_rng(5)
        x = ad.Tensor(rng.standard_normal((2, 2)), requires_grad=True)
        h0 = ad.Tensor(rng.standard_normal((2, 3)), requires_grad=True)
        c0 = ad.Tensor(rng.standard_normal((2, 3)), requires_grad=True)
        r = rng.standard_normal((2, 3))

        def loss():
            h, c = nn.lstm_step(p, x, h0, c0)
            return ad.tsum(h * r + ad.tanh(c)).item()

        store.zero_grads()
        h, c = nn.lstm_step(p, x, h0, c0)
        ad.tsum(h * r + ad.tanh(c)).backward()
        for t in p.weight_tensors() + (x, h0, c0):
            want = numeric_grad(loss, t.data)
            assert rel_error(t.grad, want, floor=1e-4) < 1e-5, t.name

    def test_vector_inputs(self):
        store = make_store(2)
        p = nn.LstmParams.create(store, "lstm", 3, 2)
        x = ad.Tensor(np.ones(3), requires_grad=True)
        h0 = ad.Tensor(np.zeros(2))
        c0 = ad.Tensor(np.zeros(2))
        h, c = nn.lstm_step(p, x, h0, c0)
        assert h.shape == (2,) and c.shape == (2,)
        ad.tsum(h).backward()
        assert x.grad.shape == (3,)

    def test_dimension_errors_name_operand(self):
        store = make_store(0)
        p = nn.LstmParams.create(store, "lstm", 3, 2)
        with pytest.raises(DimensionError, match="input x"):
            nn.lstm_step(p, ad.Tensor(np.ones((1, 4))),
                         ad.Tensor(np.zeros((1, 2))), ad.Tensor(np.zeros((1, 2))))
        with pytest.raises(DimensionError, match="state"):
            nn.lstm_step(p, ad.Tensor(np.ones((1, 3))),
                         ad.Tensor(np.zeros((1, 3))), ad.Tensor(np.zeros((1, 2))))


class TestLstmScan:
    def setup_case(self, seed=0, steps=4, batch=2, nin=3, hidden=2):
        store = make_store(seed)
        p = nn.LstmParams.create(store, "lstm", nin, hidden)
        rng = np.random.default_rng(seed + 100)
        xs = ad.Tensor(rng.standard_normal((steps, batch, nin)), requires_grad=True)
        mask = np.array([[True, True], [True, True], [False, True], [False, False]])
        mask = mask[:steps, :batch]
        r = rng.standard_normal((steps, batch, hidden))
        return store, p, xs, mask, r

    def test_matches_stepwise_reference(self):
        store, p, xs, mask, r = self.setup_case()
        out = nn.lstm_scan(p, xs, mask)
        ref = scan_by_steps(p, xs, mask, nn.lstm_step)
        np.testing.assert_allclose(out.data, ref.data, rtol=0, atol=1e-14)

        ad.tsum(out * r).backward()
        got = collect_grads(p) | {"xs": xs.grad.copy()}
        store.zero_grads()
        xs.grad = None
        ad.tsum(ref * r).backward()
        want = collect_grads(p) | {"xs": xs.grad}
        for name in want:
            np.testing.assert_allclose(got[name], want[name], rtol=0,
                                       atol=1e-12, err_msg=name)

    def test_grads_vs_fd(self):
        store, p, xs, mask, r = self.setup_case(seed=3)

        def loss():
            return ad.tsum(nn.lstm_scan(p, xs, mask) * r).item()

        store.zero_grads()
        xs.grad = None
        ad.tsum(nn.lstm_scan(p, xs, mask) * r).backward()
        for t in p.weight_tensors() + (xs,):
            want = numeric_grad(loss, t.data)
            assert rel_error(t.grad, want, floor=1e-4) < 1e-5, t.name

    def test_masked_rows_are_zero_and_padding_is_inert(self):
        store, p, xs, mask, r = self.setup_case(seed=9)
        out = nn.lstm_scan(p, xs, mask)
        assert np.all(out.data[~mask] == 0.0)
        # column 0 has real length 2: prefix must match the unpadded run bitwise
        short = nn.lstm_scan(p, xs[:2, 0:1, :], np.ones((2, 1), dtype=bool))
        np.testing.assert_array_equal(out.data[:2, 0:1, :], short.data)

        ad.tsum(out * r).backward()
        assert np.all(xs.grad[~mask] == 0.0)

    def test_param_grads_ignore_padding(self):
        store, p, xs, mask, r = self.setup_case(seed=11)
        ad.tsum(nn.lstm_scan(p, xs, mask) * r).backward()
        got = collect_grads(p)
        store.zero_grads()
        # same computation with each column truncated to its real length
        total = None
        for col, length in ((0, 2), (1, 3)):
            part = nn.lstm_scan(p, xs[:length, col:col + 1, :],
                                np.ones((length, 1), dtype=bool))
            term = ad.tsum(part * r[:length, col:col + 1, :])
            total = term if total is None else total + term
        total.backward()
        want = collect_grads(p)
        for name in want:
            np.testing.assert_allclose(got[name], want[name], rtol=0,
                                       atol=1e-12, err_msg=name)

    def test_two_dim_input_convenience(self):
        store = make_store(4)
        p = nn.LstmParams.create(store, "lstm", 3, 2)
        xs = ad.Tensor(np.random.default_rng(0).standard_normal((5, 3)))
        out = nn.lstm_scan(p, xs, np.ones(5, dtype=bool))
        assert out.shape == (5, 2)

    def test_empty_sequence_rejected(self):
        store = make_store(0)
        p = nn.LstmParams.create(store, "lstm", 3, 2)
        with pytest.raises(InvalidInputError):
            nn.lstm_scan(p, ad.Tensor(np.zeros((0, 1, 3))), np.zeros((0, 1), dtype=bool))


class TestBiLstm:
    def test_shape_and_direction_independence(self):
        store = make_store(7)
        bi = nn.BiLstm.create(store, "enc", 3, 2)
        rng = np.random.default_rng(7)
        xs = rng.standard_normal((5, 2, 3))
        mask = np.ones((5, 2), dtype=bool)
        out = nn.bilstm_encode(bi, ad.Tensor(xs), mask).data
        assert out.shape == (5, 2, 4)

        # forward half at t reads only the prefix, backward half only the suffix
        xs2 = xs.copy()
        xs2[4] += 1.0
        out2 = nn.bilstm_encode(bi, ad.Tensor(xs2), mask).data
        np.testing.assert_array_equal(out[:4, :, :2], out2[:4, :, :2])
        assert np.any(out[3, :, 2:] != out2[3, :, 2:])

        xs3 = xs.copy()
        xs3[0] += 1.0
        out3 = nn.bilstm_encode(bi, ad.Tensor(xs3), mask).data
        np.testing.assert_array_equal(out[1:, :, 2:], out3[1:, :, 2:])
        assert np.any(out[1, :, :2] != out3[1, :, :2])

    def test_grads_vs_fd(self):
        store = make_store(8)
        bi = nn.BiLstm.create(store, "enc", 2, 2)
        rng = np.random.default_rng(8)
        xs = ad.Tensor(rng.standard_normal((3, 2, 2)), requires_grad=True)
        mask = np.array([[True, True], [True, True], [True, False]])
        r = rng.standard_normal((3, 2, 4))

        def loss():
            return ad.tsum(nn.bilstm_encode(bi, xs, mask) * r).item()

        ad.tsum(nn.bilstm_encode(bi, xs, mask) * r).backward()
        for t in bi.fwd.weight_tensors() + bi.bwd.weight_tensors() + (xs,):
            want = numeric_grad(loss, t.data)
            assert rel_error(t.grad, want, floor=1e-4) < 1e-5, t.name

    def test_empty_rejected(self):
        store = make_store(0)
        bi = nn.BiLstm.create(store, "enc", 2, 2)
        with pytest.raises(InvalidInputError):
            nn.bilstm_encode(bi, ad.Tensor(np.zeros((0, 1, 2))),
                             np.zeros((0, 1), dtype=bool))


class TestFeedForward:
    def test_grads_vs_fd(self):
        store = make_store(12)
        ff = nn.FeedForward.create(store, "ff", [3, 4, 2], ["tanh", "identity"])
        x = ad.Tensor(np.random.default_rng(1).standard_normal((2, 3)),
                      requires_grad=True)

        def loss():
            return ad.tsum(ff(x)).item()

        ad.tsum(ff(x)).backward()
        tensors = [t for lin, _ in ff.layers for t in (lin.w, lin.b)] + [x]
        for t in tensors:
            want = numeric_grad(loss, t.data)
            assert rel_error(t.grad, want) < 1e-6

    def test_configuration_errors(self):
        store = make_store(0)
        with pytest.raises(ConfigurationError):
            nn.FeedForward.create(store, "a", [3, 4, 2], ["tanh"])
        with pytest.raises(ConfigurationError):
            nn.FeedForward.create(store, "b", [3, 2], ["relu"])

    def test_width_mismatch_names_layer(self):
        store = make_store(0)
        ff = nn.FeedForward.create(store, "ff", [3, 2], ["tanh"])
        with pytest.raises(DimensionError, match="ff.l1.w"):
            ff(ad.Tensor(np.ones((2, 4))))


class TestPooling:
    def test_value_and_grad(self):
        t = ad.Tensor(np.array([[1.0, 2.0], [3.0, 4.0], [100.0, 100.0]]),
                      requires_grad=True)
        mask = np.array([True, True, False])
        out = nn.mean_pool(t, mask, axis=0)
        np.testing.assert_array_equal(out.data, np.array([2.0, 3.0]))
        ad.tsum(out).backward()
        np.testing.assert_array_equal(
            t.grad, np.array([[0.5, 0.5], [0.5, 0.5], [0.0, 0.0]]))

    def test_middle_axis(self):
        rng = np.random.default_rng(2)
        t = ad.Tensor(rng.standard_normal((2, 4, 3)), requires_grad=True)
        mask = np.array([[True, True, False, False], [True, True, True, True]])
        out = nn.masked_mean(t, mask, axis=1)
        want0 = t.data[0, :2].mean(axis=0)
        np.testing.assert_allclose(out.data[0], want0, rtol=0, atol=1e-15)

    def test_empty_slice(self):
        t = ad.Tensor(np.ones((2, 3)))
        mask = np.array([False, False])
        with pytest.raises(InvalidInputError):
            nn.mean_pool(t, mask, axis=0)
        out = nn.masked_mean(t, mask, axis=0, allow_empty=True)
        np.testing.assert_array_equal(out.data, np.zeros(3))

    def test_mask_shape_checked(self):
        t = ad.Tensor(np.ones((2, 3)))
        with pytest.raises(DimensionError):
            nn.mean_pool(t, np.ones(3, dtype=bool), axis=0)


class TestDropout:
    def test_identity_when_not_training(self):
        t = ad.Tensor(np.ones((3, 3)))
        assert nn.dropout(t, 0.5, np.random.default_rng(0), training=False) is t
        assert nn.dropout(t, 0.0, np.random.default_rng(0), training=True) is t

    def test_seeded_mask_and_scaling(self):
        t = ad.Tensor(np.ones((100, 100)))
        out1 = nn.dropout(t, 0.3, np.random.default_rng(5), training=True)
        out2 = nn.dropout(t, 0.3, np.random.default_rng(5), training=True)
        np.testing.assert_array_equal(out1.data, out2.data)
        kept = out1.data != 0.0
        np.testing.assert_allclose(out1.data[kept], 1.0 / 0.7)
        assert abs(kept.mean() - 0.7) < 0.02

    def test_bad_rate(self):
        t = ad.Tensor(np.ones(3))
        with pytest.raises(ConfigurationError):
            nn.dropout(t, 1.0, np.random.default_rng(0), training=True)


class TestParamStore:
    def test_seeded_init_is_deterministic(self):
        a = make_store(3).tensor("w", (4, 4))
        b = make_store(3).tensor("w", (4, 4))
        np.testing.assert_array_equal(a.data, b.data)
        assert abs(float(make_store(0).tensor("big", (200, 200)).data.std()) - 0.1) < 0.005

    def test_duplicate_name_rejected(self):
        store = make_store(0)
        store.tensor("w", (2,))
        with pytest.raises(ConfigurationError):
            store.tensor("w", (2,))

    def test_grad_table_fills_untouched_with_zeros(self):
        store = make_store(0)
        w = store.tensor("used", (2,))
        store.tensor("unused", (3,))
        ad.tsum(w * 2.0).backward()
        table = store.grad_table()
        np.testing.assert_array_equal(table["used"], np.full(2, 2.0))
        np.testing.assert_array_equal(table["unused"], np.zeros(3))
