"""End-to-end finite-difference verification of the backward pass.

Perturbs every scalar parameter of a small model in both directions and
compares the central-difference slope of the training loss against the
analytic gradient. Exhaustive and therefore restricted to small models.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .corpus import CorpusInstance
from .errors import ModelTooLargeError
from .model import ModelConfig, Summarizer
from .textproc import SPECIALS, Vocab, collate, encode_instance
from .training import compute_loss

MAX_SCALARS = 50_000


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_param: str
    param_count: int
    seconds: float

    def passed(self, tolerance: float = 1e-4) -> bool:
        return self.max_rel_error < tolerance


def check_config(variant: str, d: int = 8, vocab_size: int = 20,
                 **overrides) -> ModelConfig:
    """The small model shape used for exhaustive gradient checks."""
    return ModelConfig.for_variant(
        variant, vocab_size=vocab_size, d=d,
        word_limit=5, summary_limit=4, post_cap=4, thread_cap=2,
        flat_source_limit=40, dropout_rate=0.0, **overrides)


def _synthetic_batch(config: ModelConfig, seed: int):
    """A deterministic 2-instance batch exercising padding on every axis.

    Every content word appears somewhere, so no embedding row is silently
    unused, and the two instances differ in post count, post lengths, thread
    count, and summary lengths.
    """
    rng = np.random.default_rng([seed, 19])
    words = [f"w{i}" for i in range(config.vocab_size - len(SPECIALS))]
    vocab = Vocab(words)

    pool: list[str] = []

    def draw(k: int) -> str:
        # Deal from reshuffled full decks so coverage is guaranteed.
        nonlocal pool
        out = []
        for _ in range(k):
            if not pool:
                pool = list(rng.permutation(words))
            out.append(pool.pop())
        return " ".join(out)

    def instance(n_posts: int, n_threads: int) -> CorpusInstance:
        lengths = [config.word_limit, 1] + [
            1 + int(rng.integers(config.word_limit))
            for _ in range(n_posts - 2)]
        sums = [config.summary_limit] + [
            1 + int(rng.integers(config.summary_limit))
            for _ in range(n_threads - 1)]
        return CorpusInstance(
            posts=[draw(k) for k in lengths[:n_posts]],
            thread_ids=[i % n_threads for i in range(n_posts)],
            summaries=[draw(k) for k in sums],
        ).validate()

    insts = [
        instance(config.post_cap, config.thread_cap),
        instance(max(2, config.post_cap - 1), max(1, config.thread_cap - 1)),
    ]
    limits = config.limits()
    return vocab, collate([encode_instance(i, vocab, limits) for i in insts])


def finite_diff_gradcheck(config: ModelConfig, seed: int = 0, h: float = 1e-5,
                          floor: float = 1e-3) -> GradCheckReport:
    """Compare analytic gradients with central differences for every scalar.

    ``floor`` guards the relative-error denominator: differences between
    gradients smaller than it are measured absolutely. Deterministic for a
    fixed config and seed. Raises ModelTooLargeError beyond MAX_SCALARS.
    """
    model = Summarizer.init(config, seed=seed, dtype=np.float64)
    count = model.param_count()
    if count > MAX_SCALARS:
        raise ModelTooLargeError(
            f"{config.variant} at d={config.d}, vocab={config.vocab_size} has "
            f"{count} scalars; exhaustive checking is capped at {MAX_SCALARS}")
    _, batch = _synthetic_batch(config, seed)

    def objective() -> float:
        with ad.no_grad():
            fwd = model.teacher_forward(batch)
            total, _ = compute_loss(fwd, batch, config.stop_weight)
        return total.item()

    started = time.monotonic()
    model.store.zero_grads()
    fwd = model.teacher_forward(batch)
    total, _ = compute_loss(fwd, batch, config.stop_weight)
    ad.backward(total)
    analytic = model.store.grad_table()

    worst_err, worst_name = 0.0, ""
    for name, tensor in model.store.items():
        flat = tensor.data.reshape(-1)
        aflat = analytic[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            f_plus = objective()
            flat[i] = orig - h
            f_minus = objective()
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * h)
            a = aflat[i]
            err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            if err > worst_err:
                worst_err, worst_name = err, f"{name}[{i}]"
    return GradCheckReport(max_rel_error=worst_err, worst_param=worst_name,
                           param_count=count,
                           seconds=time.monotonic() - started)
