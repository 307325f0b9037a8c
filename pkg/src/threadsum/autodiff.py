"""Reverse-mode automatic differentiation over dense numpy arrays.

The graph is built eagerly: every operation returns a new ``Tensor`` that
remembers its parent tensors and a closure that routes the incoming gradient
to them.  ``backward`` on a scalar loss walks the graph once in reverse
topological order, accumulating gradients additively, so a tensor used in
several places receives the sum of all contributions.

All forward math is plain numpy, so gradients are bit-identical across runs
for identical inputs.  Layers that need fused multi-step ops (see ``nn``)
build custom nodes with :func:`make_node` and :func:`accumulate_grad`.
"""

from __future__ import annotations

import contextlib

import numpy as np

from .errors import InvalidInputError

_grad_enabled = True
_debug_checks = False


def grad_enabled() -> bool:
    return _grad_enabled


@contextlib.contextmanager
def no_grad():
    """Disable graph construction inside the block. Ops return plain tensors."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def set_debug_checks(enabled: bool) -> None:
    """When on, every op raises FloatingPointError if it produces NaN/Inf."""
    global _debug_checks
    _debug_checks = bool(enabled)


class Tensor:
    """A numpy array plus the bookkeeping needed for reverse-mode autodiff."""

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad}{tag})"

    # operator sugar; all routing happens in the module-level functions
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(other, neg(self))

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)


def as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


def constant(x, dtype=None) -> Tensor:
    data = np.asarray(x, dtype=dtype)
    return Tensor(data)


def accumulate_grad(t: Tensor, g: np.ndarray) -> None:
    """Add ``g`` into ``t.grad``, allocating on first use. No-op for non-grad tensors."""
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def make_node(data, parents, backward_fn, op: str = "op") -> Tensor:
    """Wrap ``data`` in a Tensor wired to ``parents`` via ``backward_fn``.

    When grads are disabled or no parent requires grad, returns a detached
    tensor and ``backward_fn`` is dropped, so callers may skip building caches
    in that case (check :func:`grad_enabled` and parent flags themselves).
    """
    if _debug_checks and not np.all(np.isfinite(data)):
        raise FloatingPointError(f"non-finite values produced by {op}")
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def backward(loss: Tensor) -> None:
    """Backpropagate from a scalar ``loss``, accumulating into ``.grad`` fields.

    Visits each node exactly once in reverse topological order; leaf tensors
    (parameters) end up with the total gradient of the loss w.r.t. them.
    """
    if loss.data.size != 1:
        raise InvalidInputError(
            f"backward needs a scalar loss, got shape {loss.data.shape}"
        )
    if loss._backward is None:
        return
    # iterative post-order DFS; recursion would overflow on long chains
    topo: list[Tensor] = []
    seen = {id(loss)}
    stack: list[tuple[Tensor, object]] = [(loss, iter(loss._parents))]
    while stack:
        node, parents = stack[-1]
        for p in parents:
            if p._backward is not None and id(p) not in seen:
                seen.add(id(p))
                stack.append((p, iter(p._parents)))
                break
        else:
            topo.append(node)
            stack.pop()
    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        node._backward(node.grad)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``g`` down to ``shape``, undoing numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data + b.data

    def bw(g):
        if a.requires_grad:
            accumulate_grad(a, _unbroadcast(g, a.data.shape))
        if b.requires_grad:
            accumulate_grad(b, _unbroadcast(g, b.data.shape))

    return make_node(data, (a, b), bw, "add")


def neg(t: Tensor) -> Tensor:
    t = as_tensor(t)

    def bw(g):
        accumulate_grad(t, -g)

    return make_node(-t.data, (t,), bw, "neg")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data * b.data

    def bw(g):
        if a.requires_grad:
            accumulate_grad(a, _unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            accumulate_grad(b, _unbroadcast(g * a.data, b.data.shape))

    return make_node(data, (a, b), bw, "mul")


def matmul(a, b) -> Tensor:
    """a @ b with numpy matmul semantics; supports batched stacks of matrices."""
    a, b = as_tensor(a), as_tensor(b)
    data = a.data @ b.data

    def bw(g):
        if a.requires_grad:
            if b.data.ndim == 1:
                ga = g[..., None] * b.data
            else:
                ga = g @ np.swapaxes(b.data, -1, -2)
            accumulate_grad(a, _unbroadcast(ga, a.data.shape))
        if b.requires_grad:
            if a.data.ndim == 1:
                gb = np.outer(a.data, g) if b.data.ndim > 1 else a.data * g
            elif b.data.ndim == 1:
                k = a.data.shape[-1]
                gb = (a.data * g[..., None]).reshape(-1, k).sum(axis=0)
            else:
                gb = np.swapaxes(a.data, -1, -2) @ g
            accumulate_grad(b, _unbroadcast(gb, b.data.shape))

    return make_node(data, (a, b), bw, "matmul")


def getitem(t: Tensor, idx) -> Tensor:
    """Basic (slice/int/tuple) indexing; grads scatter back to the source."""
    data = t.data[idx]

    def bw(g):
        gz = np.zeros_like(t.data)
        gz[idx] += g
        accumulate_grad(t, gz)

    return make_node(data, (t,), bw, "getitem")


def reshape(t: Tensor, shape) -> Tensor:
    data = t.data.reshape(shape)

    def bw(g):
        accumulate_grad(t, g.reshape(t.data.shape))

    return make_node(data, (t,), bw, "reshape")


def transpose(t: Tensor, axes) -> Tensor:
    data = np.transpose(t.data, axes)
    inv = np.argsort(axes)

    def bw(g):
        accumulate_grad(t, np.transpose(g, inv))

    return make_node(data, (t,), bw, "transpose")


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                accumulate_grad(t, g[tuple(sl)])

    return make_node(data, tuple(tensors), bw, "concat")


def tsum(t: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    data = t.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        gg = g
        if axis is not None and not keepdims:
            gg = np.expand_dims(g, axis)
        accumulate_grad(t, np.broadcast_to(gg, t.data.shape))

    return make_node(data, (t,), bw, "sum")


def mean(t: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = t.data.size if axis is None else np.prod(
        [t.data.shape[a] for a in (axis if isinstance(axis, tuple) else (axis,))]
    )
    return mul(tsum(t, axis=axis, keepdims=keepdims), 1.0 / float(count))


def exp(t: Tensor) -> Tensor:
    data = np.exp(t.data)

    def bw(g):
        accumulate_grad(t, g * data)

    return make_node(data, (t,), bw, "exp")


def log(t: Tensor) -> Tensor:
    data = np.log(t.data)

    def bw(g):
        accumulate_grad(t, g / t.data)

    return make_node(data, (t,), bw, "log")


def sigmoid(t: Tensor) -> Tensor:
    # exp overflow for very negative inputs saturates cleanly to 0
    with np.errstate(over="ignore"):
        data = 1.0 / (1.0 + np.exp(-t.data))

    def bw(g):
        accumulate_grad(t, g * data * (1.0 - data))

    return make_node(data, (t,), bw, "sigmoid")


def tanh(t: Tensor) -> Tensor:
    data = np.tanh(t.data)

    def bw(g):
        accumulate_grad(t, g * (1.0 - data * data))

    return make_node(data, (t,), bw, "tanh")


def embedding(table: Tensor, ids) -> Tensor:
    """Row lookup ``table[ids]``; grads for repeated ids accumulate."""
    ids = np.asarray(ids)
    data = table.data[ids]

    def bw(g):
        if table.grad is None:
            table.grad = np.zeros_like(table.data)
        np.add.at(
            table.grad,
            ids.reshape(-1),
            g.reshape(-1, table.data.shape[-1]),
        )

    return make_node(data, (table,), bw, "embedding")


def masked_softmax(t: Tensor, mask, axis: int = -1) -> Tensor:
    """Softmax over ``axis`` restricted to ``mask``; masked entries are exactly 0.

    Masked scores are treated as -inf, so they carry zero weight and zero
    gradient. Raises if any slice along ``axis`` is fully masked.
    """
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), t.data.shape)
    if not mask.any(axis=axis).all():
        raise InvalidInputError("masked_softmax: some slice has no unmasked entries")
    z = np.where(mask, t.data, -np.inf)
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        accumulate_grad(t, out * (g - dot))

    return make_node(out, (t,), bw, "masked_softmax")


def take_along_last(t: Tensor, idx) -> Tensor:
    """Pick one entry per row along the last axis: out[...] = t[..., idx[...]]."""
    idx = np.asarray(idx)
    data = np.take_along_axis(t.data, idx[..., None], axis=-1)[..., 0]

    def bw(g):
        gz = np.zeros_like(t.data)
        np.put_along_axis(gz, idx[..., None], g[..., None], axis=-1)
        accumulate_grad(t, gz)

    return make_node(data, (t,), bw, "take_along_last")


def bce_with_logits(t: Tensor, labels) -> Tensor:
    """Elementwise sigmoid cross-entropy from logits, stable for large |z|."""
    y = np.asarray(labels, dtype=t.data.dtype)
    z = t.data
    data = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))

    def bw(g):
        with np.errstate(over="ignore"):
            s = 1.0 / (1.0 + np.exp(-z))
        accumulate_grad(t, g * (s - y))

    return make_node(data, (t,), bw, "bce_with_logits")


def cross_entropy_logits(t: Tensor, targets, mask=None) -> Tensor:
    """Per-row negative log-likelihood of ``targets`` under softmax(t).

    ``t`` has classes on the last axis; ``targets`` indexes it. Rows where
    ``mask`` is False contribute exactly 0 loss and 0 gradient.
    """
    targets = np.asarray(targets)
    z = t.data
    m = z.max(axis=-1, keepdims=True)
    e = np.exp(z - m)
    s = e.sum(axis=-1, keepdims=True)
    logp_t = np.take_along_axis((z - m) - np.log(s), targets[..., None], axis=-1)[..., 0]
    nll = -logp_t
    maskf = None
    if mask is not None:
        maskf = np.asarray(mask, dtype=z.dtype)
        nll = nll * maskf

    def bw(g):
        gm = g if maskf is None else g * maskf
        dz = (e / s) * gm[..., None]
        ti = targets[..., None]
        np.put_along_axis(
            dz, ti, np.take_along_axis(dz, ti, axis=-1) - gm[..., None], axis=-1
        )
        accumulate_grad(t, dz)

    return make_node(nll, (t,), bw, "cross_entropy_logits")
