"""Synthetic interleaved-corpus construction from document/summary collections.

Documents (sentence list + title) are windowed, and each window is turned into
one training instance by interleaving the leading sentences of several
documents into a single post sequence. Each source document becomes one
thread, its title the thread's reference summary. Summaries are ordered by
thread first appearance, or optionally by the position of each thread's
densest post window.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidInputError, SchemaError

log = logging.getLogger(__name__)

SPLIT_NAMES = ("train", "eval", "test")


@dataclass(frozen=True)
class SourceDoc:
    """One source document: ordered sentences plus its title."""

    sentences: tuple[str, ...]
    title: str

    def __post_init__(self):
        object.__setattr__(self, "sentences", tuple(self.sentences))
        if not self.sentences:
            raise InvalidInputError("SourceDoc needs at least one sentence")
        if not self.title:
            raise InvalidInputError("SourceDoc needs a non-empty title")


@dataclass(frozen=True)
class InterleavePreset:
    """Interleaving difficulty knobs.

    Per instance, the number of interleaved docs is drawn from U(a, b) and the
    number of sentences taken from each doc from U(m, n), all inclusive.
    """

    a: int
    b: int
    m: int
    n: int
    ordering: str = "first"  # or "density"

    def __post_init__(self):
        if not 2 <= self.a <= self.b:
            raise InvalidInputError(f"need 2 <= a <= b, got a={self.a}, b={self.b}")
        if not 1 <= self.m <= self.n:
            raise InvalidInputError(f"need 1 <= m <= n, got m={self.m}, n={self.n}")
        if self.ordering not in ("first", "density"):
            raise InvalidInputError(f"unknown ordering {self.ordering!r}")


PRESETS = {
    "easy": InterleavePreset(2, 2, 5, 5),
    "medium": InterleavePreset(2, 3, 2, 5),
    "hard": InterleavePreset(2, 5, 2, 5),
}


@dataclass
class CorpusInstance:
    """One interleaved channel: posts, per-post thread labels, thread summaries.

    ``thread_ids`` are diagnostic labels (models never see them). Summary j
    corresponds to the j-th thread under the instance's ordering rule.
    """

    posts: list[str]
    thread_ids: list[int]
    summaries: list[str]
    meta: dict = field(default_factory=dict)

    def validate(self) -> "CorpusInstance":
        if not self.posts:
            raise InvalidInputError("instance has no posts")
        if len(self.posts) != len(self.thread_ids):
            raise InvalidInputError(
                f"{len(self.posts)} posts but {len(self.thread_ids)} thread ids")
        distinct = len(set(self.thread_ids))
        if distinct != len(self.summaries):
            raise InvalidInputError(
                f"{distinct} threads but {len(self.summaries)} summaries")
        return self

    def thread_positions(self) -> dict[int, list[int]]:
        """Post indices per thread id, in channel order."""
        out: dict[int, list[int]] = {}
        for i, tid in enumerate(self.thread_ids):
            out.setdefault(tid, []).append(i)
        return out

    def first_occurrence_order(self) -> list[int]:
        """Thread ids ordered by their first post."""
        seen: list[int] = []
        for tid in self.thread_ids:
            if tid not in seen:
                seen.append(tid)
        return seen


class NumpyRng:
    """Adapter giving numpy's Generator the small draw interface used here.

    Any object with ``uniform_int(lo, hi)`` (inclusive ints) and
    ``pick(items)`` (uniform choice from a sequence) can drive interleaving,
    which keeps scripted stubs trivial to write in tests.
    """

    def __init__(self, generator: np.random.Generator):
        self.generator = generator

    def uniform_int(self, lo: int, hi: int) -> int:
        return int(self.generator.integers(lo, hi + 1))

    def pick(self, items):
        return items[int(self.generator.integers(0, len(items)))]


def make_rng(*seed_parts: int) -> NumpyRng:
    """Deterministic RNG from an integer seed path (e.g. seed, split, window)."""
    return NumpyRng(np.random.default_rng(list(seed_parts)))


def window(docs, w: int, t: int):
    """Yield consecutive windows of ``w`` docs advancing by ``t``.

    Produces exactly floor((len(docs) - w) / t) + 1 windows; fewer docs than
    ``w`` yields nothing.
    """
    if w < 1 or t < 1:
        raise InvalidInputError(f"window needs w >= 1 and t >= 1, got w={w}, t={t}")
    docs = list(docs)
    for start in range(0, len(docs) - w + 1, t):
        yield tuple(docs[start:start + w])


def interleave_window(win, preset: InterleavePreset, rng,
                      doc_ids=None, extra_meta: dict | None = None) -> CorpusInstance:
    """Interleave the leading docs of one window into a CorpusInstance.

    Draws r ~ U(a, b) and takes the window's first r docs. Doc j contributes
    its first q_j ~ U(m, n) sentences and j enters a multiset with q_j copies.
    Posts are then emitted by repeatedly drawing a thread uniformly from the
    multiset (so threads with more sentences left are proportionally likelier)
    and appending that doc's earliest unused sentence; the doc title joins the
    summaries at the thread's first appearance, skipped if an identical title
    is already present. Dedup that drops a summary fails validation, which
    callers may treat as a skip.
    """
    win = tuple(win)
    if len(win) < preset.b:
        raise InvalidInputError(
            f"window has {len(win)} docs, need at least b={preset.b}")
    if doc_ids is None:
        doc_ids = tuple(range(len(win)))
    r = rng.uniform_int(preset.a, preset.b)
    if not preset.a <= r <= preset.b:
        raise InvalidInputError(f"rng drew r={r} outside [{preset.a}, {preset.b}]")
    chosen = win[:r]
    queues: list[tuple[str, ...]] = []
    remaining: list[int] = []
    for j, doc in enumerate(chosen):
        q_j = rng.uniform_int(preset.m, preset.n)
        if not preset.m <= q_j <= preset.n:
            raise InvalidInputError(f"rng drew q={q_j} outside [{preset.m}, {preset.n}]")
        if len(doc.sentences) < q_j:
            raise InvalidInputError(
                f"doc {doc_ids[j]} has {len(doc.sentences)} sentences, drew q={q_j}")
        queues.append(doc.sentences[:q_j])
        remaining.append(q_j)

    posts: list[str] = []
    thread_ids: list[int] = []
    summaries: list[str] = []
    emitted = [0] * r
    while sum(remaining) > 0:
        pool = tuple(j for j in range(r) for _ in range(remaining[j]))
        k = rng.pick(pool)
        if k not in pool:
            raise InvalidInputError(f"rng picked {k!r} outside the multiset")
        first_appearance = remaining[k] == len(queues[k])
        remaining[k] -= 1
        posts.append(queues[k][emitted[k]])
        emitted[k] += 1
        thread_ids.append(k)
        if first_appearance and chosen[k].title not in summaries:
            summaries.append(chosen[k].title)

    meta = {"source_ids": [doc_ids[j] for j in range(r)]}
    if extra_meta:
        meta.update(extra_meta)
    return CorpusInstance(posts, thread_ids, summaries, meta).validate()


def densest_window(positions: list[int]) -> tuple[int, int]:
    """(end index, length) of the smallest post window holding > 50% of ``positions``.

    Scans contiguous runs of the thread's own posts; on equal length the
    earlier window wins.
    """
    count = len(positions)
    need = count // 2 + 1
    best = None
    for i in range(count - need + 1):
        length = positions[i + need - 1] - positions[i] + 1
        cand = (length, positions[i + need - 1])
        if best is None or cand < best:
            best = cand
    return best[1], best[0]


def density_order(instance: CorpusInstance) -> CorpusInstance:
    """Reorder summaries by ascending end of each thread's densest post window.

    Posts and thread labels stay put; ties fall back to first-occurrence
    order. Expects summaries in first-occurrence order on input.
    """
    instance.validate()
    order = instance.first_occurrence_order()
    positions = instance.thread_positions()
    keyed = []
    for rank, tid in enumerate(order):
        end, _length = densest_window(positions[tid])
        keyed.append((end, rank))
    keyed.sort()
    summaries = [instance.summaries[rank] for _end, rank in keyed]
    meta = dict(instance.meta)
    meta["ordering"] = "density"
    return CorpusInstance(list(instance.posts), list(instance.thread_ids),
                          summaries, meta)


def parse_instance(line: str, lineno: int | None = None) -> CorpusInstance:
    """One JSONL record -> CorpusInstance; schema problems carry the line number."""
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as e:
        raise SchemaError(f"invalid JSON: {e.msg}", lineno) from None
    if not isinstance(obj, dict):
        raise SchemaError("record is not a JSON object", lineno)
    for key, kind in (("posts", str), ("thread_ids", int), ("summaries", str)):
        val = obj.get(key)
        if not isinstance(val, list) or not all(isinstance(x, kind) for x in val):
            raise SchemaError(f"field {key!r} missing or not a list of {kind.__name__}",
                              lineno)
    meta = obj.get("meta", {})
    if not isinstance(meta, dict):
        raise SchemaError("field 'meta' is not an object", lineno)
    inst = CorpusInstance(obj["posts"], obj["thread_ids"], obj["summaries"], meta)
    try:
        return inst.validate()
    except InvalidInputError as e:
        raise SchemaError(str(e), lineno) from None


def serialize_instance(instance: CorpusInstance) -> str:
    """Inverse of parse_instance; stable key order, raw UTF-8."""
    return json.dumps(
        {"posts": instance.posts, "thread_ids": instance.thread_ids,
         "summaries": instance.summaries, "meta": instance.meta},
        ensure_ascii=False, sort_keys=True, separators=(",", ":"))


def load_corpus(path) -> list[CorpusInstance]:
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if line.strip():
                out.append(parse_instance(line, lineno))
    return out


def write_corpus(path, instances) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for inst in instances:
            f.write(serialize_instance(inst) + "\n")


def read_docs_jsonl(path) -> tuple[list[SourceDoc], int]:
    """Load {"sentences": [...], "title": "..."} records, skipping malformed ones.

    Returns (docs, skipped count); aborts when more than 10% of records fail.
    """
    docs: list[SourceDoc] = []
    skipped = 0
    total = 0
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            total += 1
            try:
                obj = json.loads(line)
                sentences = obj["sentences"]
                title = obj["title"]
                if (not isinstance(sentences, list)
                        or not all(isinstance(s, str) for s in sentences)
                        or not isinstance(title, str)):
                    raise KeyError("bad field types")
                docs.append(SourceDoc(tuple(sentences), title))
            except (json.JSONDecodeError, KeyError, TypeError, InvalidInputError):
                skipped += 1
                log.warning("skipping malformed doc record at line %d", lineno)
    if total and skipped > 0.1 * total:
        raise InvalidInputError(
            f"{skipped}/{total} doc records malformed; aborting")
    return docs, skipped


def split_docs(docs, ratios) -> list[list]:
    """Partition the doc sequence by ratio; windows never straddle splits."""
    if len(ratios) != len(SPLIT_NAMES) or any(r < 0 for r in ratios):
        raise InvalidInputError(f"need 3 non-negative split ratios, got {ratios}")
    total = float(sum(ratios))
    if total <= 0:
        raise InvalidInputError("split ratios sum to zero")
    count = len(docs)
    b1 = int(round(count * ratios[0] / total))
    b2 = b1 + int(round(count * ratios[1] / total))
    b2 = min(b2, count)
    return [list(docs[:b1]), list(docs[b1:b2]), list(docs[b2:])]


def synthesize_corpus(docs, preset: InterleavePreset, seed: int, out_dir,
                      split_ratios=(0.8, 0.1, 0.1), stride: int = 1,
                      max_instances: int | None = None) -> dict:
    """Write train/eval/test JSONL files plus a stats report; returns the stats.

    Docs with fewer than ``preset.n`` sentences are dropped up front so every
    q draw is satisfiable. The doc sequence is split before windowing, so no
    source doc contributes to two splits. Each window gets its own RNG stream
    keyed by (seed, split, window), making output byte-stable under a seed
    regardless of processing order.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    docs = list(docs)
    usable = [d for d in docs if len(d.sentences) >= preset.n]
    usable_ids = [i for i, d in enumerate(docs) if len(d.sentences) >= preset.n]
    parts = split_docs(list(zip(usable_ids, usable)), split_ratios)

    caps = [None, None, None]
    if max_instances is not None:
        total = float(sum(split_ratios))
        caps = [int(round(max_instances * r / total)) for r in split_ratios]

    counts = {}
    skipped_windows = 0
    post_hist: dict[int, int] = {}
    thread_hist: dict[int, int] = {}
    for split_idx, (name, part, cap) in enumerate(zip(SPLIT_NAMES, parts, caps)):
        instances = []
        part_ids = [i for i, _ in part]
        part_docs = [d for _, d in part]
        for w_idx, win in enumerate(window(part_docs, preset.b, stride)):
            if cap is not None and len(instances) >= cap:
                break
            rng = make_rng(seed, split_idx, w_idx)
            ids = part_ids[w_idx * stride:w_idx * stride + preset.b]
            try:
                inst = interleave_window(win, preset, rng, doc_ids=ids,
                                         extra_meta={"seed": seed})
            except InvalidInputError:
                skipped_windows += 1
                continue
            if preset.ordering == "density":
                inst = density_order(inst)
            instances.append(inst)
            post_hist[len(inst.posts)] = post_hist.get(len(inst.posts), 0) + 1
            n_threads = len(inst.summaries)
            thread_hist[n_threads] = thread_hist.get(n_threads, 0) + 1
        write_corpus(out_dir / f"{name}.jsonl", instances)
        counts[name] = len(instances)

    stats = {
        "preset": {"a": preset.a, "b": preset.b, "m": preset.m, "n": preset.n,
                   "ordering": preset.ordering},
        "seed": seed,
        "docs_total": len(docs),
        "docs_filtered_short": len(docs) - len(usable),
        "instances": counts,
        "skipped_windows": skipped_windows,
        "post_count_hist": {str(k): post_hist[k] for k in sorted(post_hist)},
        "thread_count_hist": {str(k): thread_hist[k] for k in sorted(thread_hist)},
    }
    with open(out_dir / "stats.json", "w", encoding="utf-8", newline="\n") as f:
        json.dump(stats, f, sort_keys=True, indent=2)
        f.write("\n")
    return stats
