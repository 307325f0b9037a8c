"""Loss assembly, the training loop, and corpus-level helpers.

The objective is the masked word cross-entropy summed over the batch plus
``stop_weight`` times the summed sigmoid cross-entropy on the thread-stop
logits (hierarchical decoders only; both terms are minimized). Training is
plain mini-batch Adam with global-norm gradient clipping, a per-step CSV
loss log, per-epoch checkpoints, and a divergence guard.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .checkpoint import save_checkpoint
from .errors import InvalidInputError, TrainingDivergedError
from .model import GenerationResult, Summarizer
from .optim import AdamState, adam_step, clip_gradients
from .rouge import EvalReport, evaluate_corpus
from .textproc import Batch, Limits, Vocab, collate, encode_instance

log = logging.getLogger(__name__)


@dataclass
class LossBreakdown:
    """Scalar views of one training step's loss."""

    nll_word: float         # mean NLL per real target token
    stop_bce: float         # summed stop cross-entropy over real thread steps
    total: float            # nll_sum + stop_weight * stop_bce
    token_count: int


def compute_loss(result, batch: Batch, stop_weight: float = 1.0):
    """Combine a teacher-forced forward pass into the training objective.

    Returns ``(total, breakdown)`` where ``total`` is the differentiable
    scalar. With ``stop_weight`` 0 the stop term is skipped entirely, so no
    gradient ever reaches the stop head.
    """
    total: Tensor = result.nll_sum
    stop_sum = 0.0
    if result.stop_logits is not None and stop_weight > 0.0:
        bce = ad.bce_with_logits(result.stop_logits, batch.stop_labels)
        masked = ad.mul(bce, ad.constant(
            batch.thread_mask.astype(result.stop_logits.dtype)))
        stop_term = ad.tsum(masked)
        stop_sum = stop_term.item()
        total = total + stop_weight * stop_term
    nll_sum = result.nll_sum.item()
    total_val = total.item()
    if not np.isfinite(total_val):
        raise TrainingDivergedError(
            f"non-finite loss: word nll sum {nll_sum}, stop bce {stop_sum}")
    nll_word = nll_sum / max(result.token_count, 1)
    return total, LossBreakdown(nll_word=nll_word, stop_bce=stop_sum,
                                total=total_val, token_count=result.token_count)


@dataclass
class TrainSchedule:
    """Loop hyperparameters; model architecture lives in ModelConfig."""

    lr: float = 1e-4
    batch_size: int = 64
    epochs: int = 1
    seed: int = 0
    clip_norm: float = 5.0
    stop_weight: float | None = None    # None: take the model config's value
    max_steps: int | None = None
    target_nll: float | None = None     # stop once a step's nll_word dips below
    divergence_factor: float = 10.0
    divergence_patience: int = 100


@dataclass
class TrainResult:
    steps: int
    final: LossBreakdown | None
    log_rows: list = field(default_factory=list)  # (step, running, nll, stop)
    stopped_early: bool = False
    checkpoints: list = field(default_factory=list)
    seconds: float = 0.0


def fit_limits(instances, word_limit: int = 20, summary_limit: int = 15,
               flat_source_limit: int = 300) -> Limits:
    """Limits whose caps cover every instance in the corpus."""
    if not instances:
        raise InvalidInputError("cannot derive limits from an empty corpus")
    return Limits(
        word_limit=word_limit,
        summary_limit=summary_limit,
        post_cap=max(len(i.posts) for i in instances),
        thread_cap=max(len(i.summaries) for i in instances),
        flat_source_limit=flat_source_limit,
    )


def encode_corpus(instances, vocab: Vocab, limits: Limits) -> list:
    return [encode_instance(inst, vocab, limits) for inst in instances]


def _batches(encoded, order, batch_size):
    for lo in range(0, len(order), batch_size):
        yield collate([encoded[i] for i in order[lo:lo + batch_size]])


def _write_log(path, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("step,running_avg_loss,nll,stop_bce\n")
        for step, running, nll, stop in rows:
            fh.write(f"{step},{running!r},{nll!r},{stop!r}\n")


def train(model: Summarizer, encoded, schedule: TrainSchedule,
          out_dir=None, vocab: Vocab | None = None) -> TrainResult:
    """Run the training loop over already-encoded instances.

    Deterministic for a fixed seed: the shuffle order, dropout masks and all
    numerics are reproducible. Writes ``loss.csv`` and per-epoch checkpoints
    under ``out_dir`` when given (checkpoints need ``vocab``). Raises
    TrainingDivergedError after ``divergence_patience`` consecutive steps
    above ``divergence_factor`` times the initial loss.
    """
    if not encoded:
        raise InvalidInputError("no training instances")
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        if vocab is None:
            raise InvalidInputError("checkpointing requires the vocabulary")
    stop_weight = (model.config.stop_weight if schedule.stop_weight is None
                   else schedule.stop_weight)
    shuffle_rng = np.random.default_rng([schedule.seed, 1])
    dropout_rng = np.random.default_rng([schedule.seed, 2])
    adam = AdamState(lr=schedule.lr)
    result = TrainResult(steps=0, final=None)
    started = time.monotonic()
    running = None
    initial_total = None
    bad_streak = 0
    done = False
    try:
        for epoch in range(schedule.epochs):
            order = shuffle_rng.permutation(len(encoded))
            for batch in _batches(encoded, order, schedule.batch_size):
                model.store.zero_grads()
                fwd = model.teacher_forward(batch, training=True, rng=dropout_rng)
                total, breakdown = compute_loss(fwd, batch, stop_weight)
                ad.backward(total)
                grads = model.store.grad_table()
                clip_gradients(grads, schedule.clip_norm)
                adam_step(adam, model.store, grads)
                step = result.steps
                running = (breakdown.total if running is None
                           else 0.99 * running + 0.01 * breakdown.total)
                result.log_rows.append(
                    (step, running, breakdown.nll_word, breakdown.stop_bce))
                result.steps += 1
                result.final = breakdown
                if initial_total is None:
                    initial_total = breakdown.total
                elif breakdown.total > schedule.divergence_factor * initial_total:
                    bad_streak += 1
                    if bad_streak >= schedule.divergence_patience:
                        raise TrainingDivergedError(
                            f"loss {breakdown.total:.4g} stayed above "
                            f"{schedule.divergence_factor}x the initial "
                            f"{initial_total:.4g} for {bad_streak} steps")
                else:
                    bad_streak = 0
                if (schedule.target_nll is not None
                        and breakdown.nll_word <= schedule.target_nll):
                    result.stopped_early = True
                    done = True
                    break
                if (schedule.max_steps is not None
                        and result.steps >= schedule.max_steps):
                    done = True
                    break
            if out_dir is not None:
                ck = out_dir / f"checkpoint-{epoch + 1:03d}.json"
                save_checkpoint(ck, model, vocab, adam,
                                meta={"epoch": epoch + 1, "step": result.steps})
                result.checkpoints.append(str(ck))
            if done:
                break
    finally:
        result.seconds = time.monotonic() - started
        if out_dir is not None:
            _write_log(out_dir / "loss.csv", result.log_rows)
    if result.final is not None:
        log.info("trained %d steps in %.1fs; final loss %.4f (nll/token %.4f)",
                 result.steps, result.seconds, result.final.total,
                 result.final.nll_word)
    return result


def generate_summaries(model: Summarizer, instances, vocab: Vocab,
                       collect_maps: bool = False) -> list:
    """Greedy summaries for a list of corpus instances."""
    limits = model.config.limits()
    out: list[GenerationResult] = []
    for inst in instances:
        enc = encode_instance(inst, vocab, limits, source_only=True)
        out.append(model.generate(enc, collect_maps=collect_maps))
    return out


def evaluate_model(model: Summarizer, instances, vocab: Vocab,
                   mode: str = "recall", budget: int | None = None) -> EvalReport:
    """Decode every instance and score it against its reference summaries."""
    generated = [r.texts(vocab) for r in generate_summaries(model, instances, vocab)]
    references = [list(inst.summaries) for inst in instances]
    return evaluate_corpus(generated, references, mode=mode, budget=budget)


def stop_accuracy(model: Summarizer, encoded, batch_size: int = 64) -> float:
    """Teacher-forced stop-head accuracy over real thread steps."""
    if not model.config.has_hier_decoder:
        raise InvalidInputError(f"{model.config.variant} has no stop head")
    hits = total = 0
    with ad.no_grad():
        order = np.arange(len(encoded))
        for batch in _batches(encoded, order, batch_size):
            fwd = model.teacher_forward(batch)
            pred = fwd.stop_logits.data > 0.0     # p > 0.5
            want = batch.stop_labels > 0.5
            hits += int((pred == want)[batch.thread_mask].sum())
            total += int(batch.thread_mask.sum())
    return hits / max(total, 1)
