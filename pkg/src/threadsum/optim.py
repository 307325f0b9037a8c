"""Adam with bias correction, plus global-norm gradient clipping."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError


@dataclass
class AdamState:
    """Optimizer hyperparameters and per-parameter moment accumulators."""

    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(state: AdamState, params, grads: dict[str, np.ndarray] | None = None) -> None:
    """Apply one Adam update in place.

    ``params`` is a name -> Tensor mapping (a ParamStore works). ``grads``
    defaults to each tensor's accumulated ``.grad``; when given explicitly its
    keys must cover exactly the parameter set. Bias correction makes the first
    step approximately -lr * sign(grad) for every entry.
    """
    items = params.items()
    if grads is None:
        grads = {}
        for name, p in items:
            if p.grad is None:
                raise ConfigurationError(f"parameter {name!r} has no gradient")
            grads[name] = p.grad
    else:
        param_names = {name for name, _ in items}
        if set(grads) != param_names:
            missing = sorted(param_names - set(grads))
            extra = sorted(set(grads) - param_names)
            raise ConfigurationError(
                f"gradient table mismatch: missing {missing}, unexpected {extra}")

    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for name, p in items:
        g = grads[name]
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            state.m[name] = m
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p.data -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float = 5.0) -> float:
    """Scale all gradients in place so their global L2 norm is at most ``max_norm``.

    Returns the pre-clip global norm.
    """
    total = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if total > max_norm and total > 0.0:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
    return total
