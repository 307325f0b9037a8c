"""ROUGE-1/2/L scoring with clipped multiset overlap and LCS.

Multi-summary instances are scored by concatenating the generated summaries
and the reference summaries (order as emitted / as given); an optional paired
mode scores summary k against reference k instead. Scores come as
recall/precision/f1 triples; ``mode`` only selects which number headlines the
report, all three are always computed.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass

from .errors import InvalidInputError
from .textproc import tokenize

log = logging.getLogger(__name__)

METRIC_KEYS = ("rouge_1", "rouge_2", "rouge_l")
MODES = ("recall", "precision", "f1")


@dataclass(frozen=True)
class RougeComponent:
    recall: float
    precision: float
    f1: float
    degenerate: bool = False  # reference too short for the metric

    def by_mode(self, mode: str) -> float:
        if mode not in MODES:
            raise InvalidInputError(f"unknown mode {mode!r}")
        return getattr(self, mode)


def _component(overlap: float, ref_total: float, cand_total: float) -> RougeComponent:
    recall = overlap / ref_total if ref_total else 0.0
    precision = overlap / cand_total if cand_total else 0.0
    f1 = (2 * precision * recall / (precision + recall)
          if precision + recall > 0 else 0.0)
    return RougeComponent(recall, precision, f1)


def ngram_counts(tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(candidate, reference, n: int) -> RougeComponent:
    """Clipped n-gram overlap: each shared n-gram counts min(cand, ref) times."""
    if n not in (1, 2):
        raise InvalidInputError(f"rouge_n supports n in {{1, 2}}, got {n}")
    ref_counts = ngram_counts(reference, n)
    if not ref_counts:
        return RougeComponent(0.0, 0.0, 0.0, degenerate=True)
    cand_counts = ngram_counts(candidate, n)
    overlap = sum((cand_counts & ref_counts).values())
    return _component(overlap, sum(ref_counts.values()), sum(cand_counts.values()))


def lcs_length(a, b) -> int:
    """Longest common subsequence length via the standard O(len(a)*len(b)) DP."""
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate, reference) -> RougeComponent:
    if not reference:
        return RougeComponent(0.0, 0.0, 0.0, degenerate=True)
    lcs = lcs_length(candidate, reference)
    return _component(lcs, len(reference), len(candidate))


def score_pair(cand_tokens, ref_tokens) -> dict[str, RougeComponent]:
    return {
        "rouge_1": rouge_n(cand_tokens, ref_tokens, 1),
        "rouge_2": rouge_n(cand_tokens, ref_tokens, 2),
        "rouge_l": rouge_l(cand_tokens, ref_tokens),
    }


@dataclass
class EvalReport:
    """Corpus-level means plus the per-instance breakdown."""

    scores: dict          # metric -> {recall, precision, f1}
    per_instance: list    # one dict per instance, same structure
    mode: str
    instances: int
    count_mismatches: int

    def headline(self) -> dict[str, float]:
        return {k: self.scores[k][self.mode] for k in METRIC_KEYS}


def _instance_tokens(summaries, budget=None):
    tokens: list[str] = []
    for s in summaries:
        tokens.extend(tokenize(s))
    if budget is not None:
        tokens = tokens[:budget]
    return tokens


def _paired_scores(gen, ref, budget) -> dict[str, RougeComponent]:
    """Score summary k against reference k; unmatched sides count against you.

    Aggregates overlap/total counts across pairs before forming ratios.
    """
    pairs = max(len(gen), len(ref))
    agg = {k: [0.0, 0.0, 0.0] for k in METRIC_KEYS}  # overlap, ref_total, cand_total
    for k in range(pairs):
        c = _instance_tokens([gen[k]] if k < len(gen) else [], budget)
        r = _instance_tokens([ref[k]] if k < len(ref) else [])
        for n, key in ((1, "rouge_1"), (2, "rouge_2")):
            rc = ngram_counts(r, n)
            cc = ngram_counts(c, n)
            agg[key][0] += sum((cc & rc).values())
            agg[key][1] += sum(rc.values())
            agg[key][2] += sum(cc.values())
        agg["rouge_l"][0] += lcs_length(c, r)
        agg["rouge_l"][1] += len(r)
        agg["rouge_l"][2] += len(c)
    return {k: _component(*v) for k, v in agg.items()}


def evaluate_corpus(generated, references, mode: str = "recall",
                    budget: int | None = None, paired: bool = False) -> EvalReport:
    """Mean ROUGE over instances.

    ``generated`` and ``references`` are parallel lists; each element is the
    list of summary strings for one instance. ``budget`` truncates the
    candidate side to that many tokens before scoring.
    """
    if mode not in MODES:
        raise InvalidInputError(f"unknown mode {mode!r}")
    if len(generated) != len(references):
        raise InvalidInputError(
            f"{len(generated)} generated instances vs {len(references)} references")
    if not references:
        raise InvalidInputError("nothing to evaluate")
    mismatches = 0
    per_instance = []
    sums = {k: {"recall": 0.0, "precision": 0.0, "f1": 0.0} for k in METRIC_KEYS}
    for gen, ref in zip(generated, references):
        if len(gen) != len(ref):
            mismatches += 1
        if paired:
            comps = _paired_scores(gen, ref, budget)
        else:
            comps = score_pair(_instance_tokens(gen, budget), _instance_tokens(ref))
        row = {}
        for key, comp in comps.items():
            row[key] = {"recall": comp.recall, "precision": comp.precision,
                        "f1": comp.f1}
            for field in ("recall", "precision", "f1"):
                sums[key][field] += row[key][field]
        per_instance.append(row)
    if mismatches:
        log.warning("summary-count mismatch on %d/%d instances (absorbed by "
                    "concatenation)", mismatches, len(references))
    count = len(references)
    scores = {k: {f: v / count for f, v in fields.items()}
              for k, fields in sums.items()}
    return EvalReport(scores=scores, per_instance=per_instance, mode=mode,
                      instances=count, count_mismatches=mismatches)
