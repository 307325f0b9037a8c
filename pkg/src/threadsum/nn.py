"""Neural layers on top of the autodiff engine.

The LSTM ops are fused: one graph node per step (``lstm_step``) or per whole
sequence (``lstm_scan``) with a hand-written backward pass, instead of dozens
of elementwise nodes. Sequences carry a boolean mask; at masked steps the
hidden and cell state are frozen (carried through unchanged) and the emitted
output row is exactly zero, so padding never leaks into states or gradients.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, accumulate_grad, make_node
from .errors import ConfigurationError, DimensionError, InvalidInputError


class ParamStore:
    """Registry of named trainable tensors with a shared init scheme.

    All entries are drawn from Normal(0, ``init_std``) in creation order from
    the store's rng, so a seed fully determines every parameter.
    """

    def __init__(self, rng: np.random.Generator, dtype=np.float64, init_std: float = 0.1):
        self.params: dict[str, Tensor] = {}
        self.dtype = np.dtype(dtype)
        self.init_std = init_std
        self._rng = rng

    def tensor(self, name: str, shape: tuple) -> Tensor:
        if name in self.params:
            raise ConfigurationError(f"duplicate parameter name {name!r}")
        data = self._rng.normal(0.0, self.init_std, size=shape).astype(self.dtype)
        t = Tensor(data, requires_grad=True, name=name)
        self.params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def items(self):
        return self.params.items()

    def zero_grads(self) -> None:
        for p in self.params.values():
            p.grad = None

    def grad_table(self) -> dict[str, np.ndarray]:
        """Gradients by name; parameters the loss never touched map to zeros."""
        return {
            name: (p.grad if p.grad is not None else np.zeros_like(p.data))
            for name, p in self.params.items()
        }

    def total_scalars(self) -> int:
        return sum(p.data.size for p in self.params.values())


@dataclass
class Linear:
    w: Tensor  # (din, dout)
    b: Tensor  # (dout,)

    @classmethod
    def create(cls, store: ParamStore, prefix: str, din: int, dout: int) -> "Linear":
        return cls(w=store.tensor(f"{prefix}.w", (din, dout)),
                   b=store.tensor(f"{prefix}.b", (dout,)))

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.w.shape[0]:
            raise DimensionError(
                f"linear {self.w.name}: input width {x.shape[-1]}, "
                f"expected {self.w.shape[0]}"
            )
        return ad.matmul(x, self.w) + self.b


# Late-bound so swapping the autodiff op (e.g. in fault-injection tests)
# affects layers built before the swap.
_ACTIVATIONS = {
    "tanh": lambda t: ad.tanh(t),
    "sigmoid": lambda t: ad.sigmoid(t),
    "identity": lambda t: t,
}


@dataclass
class FeedForward:
    """Stack of Linear layers with per-layer activations from {tanh, sigmoid, identity}."""

    layers: list[tuple[Linear, str]]

    @classmethod
    def create(cls, store, prefix, dims: list[int], acts: list[str]) -> "FeedForward":
        if len(acts) != len(dims) - 1:
            raise ConfigurationError(
                f"feedforward {prefix}: {len(dims) - 1} layers but {len(acts)} activations"
            )
        for a in acts:
            if a not in _ACTIVATIONS:
                raise ConfigurationError(f"unknown activation {a!r}")
        layers = [
            (Linear.create(store, f"{prefix}.l{i + 1}", dims[i], dims[i + 1]), acts[i])
            for i in range(len(dims) - 1)
        ]
        return cls(layers=layers)

    def __call__(self, x: Tensor) -> Tensor:
        for lin, act in self.layers:
            x = _ACTIVATIONS[act](lin(x))
        return x


@dataclass
class LstmParams:
    """Gate weights for one LSTM direction. Each w_* is (input_dim + hidden, hidden)."""

    input_dim: int
    hidden_dim: int
    w_i: Tensor
    w_f: Tensor
    w_o: Tensor
    w_g: Tensor
    b_i: Tensor
    b_f: Tensor
    b_o: Tensor
    b_g: Tensor

    @classmethod
    def create(cls, store, prefix, input_dim, hidden_dim) -> "LstmParams":
        k = input_dim + hidden_dim
        names = ("w_i", "w_f", "w_o", "w_g", "b_i", "b_f", "b_o", "b_g")
        shapes = [(k, hidden_dim)] * 4 + [(hidden_dim,)] * 4
        made = {n: store.tensor(f"{prefix}.{n}", s) for n, s in zip(names, shapes)}
        return cls(input_dim=input_dim, hidden_dim=hidden_dim, **made)

    def weight_tensors(self) -> tuple[Tensor, ...]:
        return (self.w_i, self.w_f, self.w_o, self.w_g,
                self.b_i, self.b_f, self.b_o, self.b_g)

    def fused(self) -> tuple[np.ndarray, np.ndarray]:
        w = np.concatenate([self.w_i.data, self.w_f.data,
                            self.w_o.data, self.w_g.data], axis=1)
        b = np.concatenate([self.b_i.data, self.b_f.data,
                            self.b_o.data, self.b_g.data])
        return w, b

    def _accumulate_fused(self, dw: np.ndarray, db: np.ndarray) -> None:
        d = self.hidden_dim
        for k, t in enumerate((self.w_i, self.w_f, self.w_o, self.w_g)):
            accumulate_grad(t, dw[:, k * d:(k + 1) * d])
        for k, t in enumerate((self.b_i, self.b_f, self.b_o, self.b_g)):
            accumulate_grad(t, db[k * d:(k + 1) * d])


def _sigm(x):
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-x))


def lstm_step(params: LstmParams, x: Tensor, h_prev: Tensor, c_prev: Tensor):
    """One LSTM step. x (..., input_dim), states (..., hidden) -> (h, c).

    Fused into two graph nodes (c, then h as its child) so stepwise decoding
    stays cheap. Backward follows the standard LSTM chain rule.
    """
    d = params.hidden_dim
    if x.shape[-1] != params.input_dim:
        raise DimensionError(
            f"lstm_step: input x has width {x.shape[-1]}, expected {params.input_dim}")
    if h_prev.shape[-1] != d or c_prev.shape[-1] != d:
        raise DimensionError(
            f"lstm_step: state widths {h_prev.shape[-1]}/{c_prev.shape[-1]}, expected {d}")

    w, b = params.fused()
    xh = np.concatenate([x.data, h_prev.data], axis=-1)
    z = xh @ w + b
    i = _sigm(z[..., :d])
    f = _sigm(z[..., d:2 * d])
    o = _sigm(z[..., 2 * d:3 * d])
    g = np.tanh(z[..., 3 * d:])
    c_data = f * c_prev.data + i * g
    tanh_c = np.tanh(c_data)
    h_data = o * tanh_c
    nin = params.input_dim

    def _rows(a):
        return a.reshape(-1, a.shape[-1])

    def c_bw(gc):
        di = g * gc
        df = c_prev.data * gc
        dg = i * gc
        dzi = i * (1.0 - i) * di
        dzf = f * (1.0 - f) * df
        dzg = (1.0 - g * g) * dg
        dxh = dzi @ params.w_i.data.T + dzf @ params.w_f.data.T + dzg @ params.w_g.data.T
        if x.requires_grad:
            accumulate_grad(x, dxh[..., :nin])
        if h_prev.requires_grad:
            accumulate_grad(h_prev, dxh[..., nin:])
        accumulate_grad(c_prev, f * gc)
        xh2 = _rows(xh)
        for t, dz in ((params.w_i, dzi), (params.w_f, dzf), (params.w_g, dzg)):
            accumulate_grad(t, xh2.T @ _rows(dz))
        for t, dz in ((params.b_i, dzi), (params.b_f, dzf), (params.b_g, dzg)):
            accumulate_grad(t, _rows(dz).sum(axis=0))

    c_parents = (x, h_prev, c_prev, params.w_i, params.w_f, params.w_g,
                 params.b_i, params.b_f, params.b_g)
    c_node = make_node(c_data, c_parents, c_bw, "lstm_c")

    def h_bw(gh):
        do = tanh_c * gh
        accumulate_grad(c_node, o * (1.0 - tanh_c * tanh_c) * gh)
        dzo = o * (1.0 - o) * do
        dxh = dzo @ params.w_o.data.T
        if x.requires_grad:
            accumulate_grad(x, dxh[..., :nin])
        if h_prev.requires_grad:
            accumulate_grad(h_prev, dxh[..., nin:])
        accumulate_grad(params.w_o, _rows(xh).T @ _rows(dzo))
        accumulate_grad(params.b_o, _rows(dzo).sum(axis=0))

    h_node = make_node(h_data, (c_node, x, h_prev, params.w_o, params.b_o),
                       h_bw, "lstm_h")
    return h_node, c_node


def lstm_scan(params: LstmParams, xs: Tensor, mask: np.ndarray) -> Tensor:
    """Run an LSTM over a full masked sequence as a single graph node.

    xs (T, B, input_dim) or (T, input_dim); mask (T, B) or (T,) bool. Returns
    outputs (T, B, hidden) (resp. (T, hidden)): the hidden state at each step,
    zeroed at masked steps. States freeze across masked steps, so the rows at
    the last unmasked step equal the final state of the unpadded sequence.
    Initial states are zero.
    """
    squeeze = xs.data.ndim == 2
    if squeeze:
        xs = ad.reshape(xs, (xs.shape[0], 1, xs.shape[1]))
    if xs.data.ndim != 3:
        raise DimensionError(f"lstm_scan: xs must be (T, B, input), got {xs.shape}")
    steps, batch, nin = xs.data.shape
    if steps == 0:
        raise InvalidInputError("lstm_scan: empty sequence")
    if nin != params.input_dim:
        raise DimensionError(
            f"lstm_scan: xs has width {nin}, expected {params.input_dim}")
    mask = np.asarray(mask, dtype=bool).reshape(steps, batch)
    d = params.hidden_dim
    dtype = xs.data.dtype
    w, b = params.fused()
    needs_grad = ad.grad_enabled() and any(
        t.requires_grad for t in (xs,) + params.weight_tensors())

    h = np.zeros((batch, d), dtype=dtype)
    c = np.zeros((batch, d), dtype=dtype)
    outs = np.zeros((steps, batch, d), dtype=dtype)
    cache = [] if needs_grad else None
    xdata = xs.data
    for t in range(steps):
        m = mask[t].astype(dtype)[:, None]
        xh = np.concatenate([xdata[t], h], axis=-1)
        z = xh @ w + b
        i = _sigm(z[:, :d])
        f = _sigm(z[:, d:2 * d])
        o = _sigm(z[:, 2 * d:3 * d])
        g = np.tanh(z[:, 3 * d:])
        c_cell = f * c + i * g
        tanh_c = np.tanh(c_cell)
        h_cell = o * tanh_c
        outs[t] = h_cell * m
        if needs_grad:
            cache.append((xh, i, f, o, g, tanh_c, c, m))
        h = h_cell * m + h * (1.0 - m)
        c = c_cell * m + c * (1.0 - m)

    def bw(gout):
        dw = np.zeros_like(w)
        db = np.zeros_like(b)
        dxs = np.zeros((steps, batch, nin), dtype=dtype) if xs.requires_grad else None
        carry_h = np.zeros((batch, d), dtype=dtype)
        carry_c = np.zeros((batch, d), dtype=dtype)
        for t in range(steps - 1, -1, -1):
            xh, i, f, o, g, tanh_c, c_prev, m = cache[t]
            keep = 1.0 - m
            dh_cell = m * (gout[t] + carry_h)
            dc_cell = o * (1.0 - tanh_c * tanh_c) * dh_cell + m * carry_c
            do = tanh_c * dh_cell
            di = g * dc_cell
            df = c_prev * dc_cell
            dg = i * dc_cell
            dz = np.concatenate([
                i * (1.0 - i) * di,
                f * (1.0 - f) * df,
                o * (1.0 - o) * do,
                (1.0 - g * g) * dg,
            ], axis=1)
            dw += xh.T @ dz
            db += dz.sum(axis=0)
            dxh = dz @ w.T
            if dxs is not None:
                dxs[t] = dxh[:, :nin]
            carry_h = dxh[:, nin:] + keep * carry_h
            carry_c = f * dc_cell + keep * carry_c
        if xs.requires_grad:
            accumulate_grad(xs, dxs)
        params._accumulate_fused(dw, db)

    out = make_node(outs, (xs,) + params.weight_tensors(), bw, "lstm_scan")
    if squeeze:
        out = ad.reshape(out, (steps, d))
    return out


@dataclass
class BiLstm:
    fwd: LstmParams
    bwd: LstmParams

    @classmethod
    def create(cls, store, prefix, input_dim, hidden_dim) -> "BiLstm":
        return cls(fwd=LstmParams.create(store, f"{prefix}.fwd", input_dim, hidden_dim),
                   bwd=LstmParams.create(store, f"{prefix}.bwd", input_dim, hidden_dim))


def bilstm_encode(params: BiLstm, xs: Tensor, mask: np.ndarray) -> Tensor:
    """Forward and reversed LSTM passes, concatenated per step to (.., 2*hidden).

    The backward pass runs on the time-reversed sequence with the reversed
    mask, then its outputs are flipped back, so position t sees the suffix.
    """
    steps = xs.shape[0]
    if steps == 0:
        raise InvalidInputError("bilstm_encode: empty sequence")
    mask = np.asarray(mask, dtype=bool)
    f_out = lstm_scan(params.fwd, xs, mask)
    b_out = lstm_scan(params.bwd, xs[::-1], mask[::-1])[::-1]
    return ad.concat([f_out, b_out], axis=-1)


def masked_mean(t: Tensor, mask: np.ndarray, axis: int = 0,
                allow_empty: bool = False) -> Tensor:
    """Mean of feature vectors over ``axis``, restricted to unmasked positions.

    ``mask`` has shape ``t.shape[:-1]``. With ``allow_empty`` slices that are
    fully masked yield zero vectors instead of raising.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != t.shape[:-1]:
        raise DimensionError(
            f"masked_mean: mask shape {mask.shape} does not match {t.shape[:-1]}")
    counts = mask.sum(axis=axis)
    if not allow_empty and not counts.all():
        raise InvalidInputError("masked_mean: some slice has no unmasked entries")
    dtype = t.data.dtype
    weighted = t * Tensor(mask.astype(dtype)[..., None])
    summed = ad.tsum(weighted, axis=axis)
    inv = (1.0 / np.maximum(counts, 1)).astype(dtype)
    return summed * Tensor(inv[..., None])


def mean_pool(xs: Tensor, mask: np.ndarray, axis: int = 0) -> Tensor:
    """Strict masked mean: rejects slices with zero unmasked entries."""
    return masked_mean(xs, mask, axis=axis, allow_empty=False)


def dropout(t: Tensor, rate: float, rng: np.random.Generator,
            training: bool) -> Tensor:
    """Inverted dropout: active only in training, identity otherwise."""
    if not 0.0 <= rate < 1.0:
        raise ConfigurationError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return t
    keep = (rng.random(t.shape) >= rate).astype(t.data.dtype)
    return t * Tensor(keep / (1.0 - rate))
