"""Tokenization, vocabulary, and numericalization with fixed padding limits.

Ids 0-4 are reserved: PAD, UNK, SOS, EOS, SEP. Posts are truncated to
``word_limit`` tokens, summaries to ``summary_limit`` plus EOS. Flat-source
variants additionally get the posts joined by SEP (capped after separator
insertion) and the summaries joined by SEP with a trailing EOS.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import CorpusInstance, load_corpus
from .errors import InvalidInputError

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
SOS_TOKEN = "<sos>"
EOS_TOKEN = "<eos>"
SEP_TOKEN = "<sep>"
SPECIALS = (PAD_TOKEN, UNK_TOKEN, SOS_TOKEN, EOS_TOKEN, SEP_TOKEN)
PAD_ID, UNK_ID, SOS_ID, EOS_ID, SEP_ID = range(5)

_PUNCT = re.compile(r"([.,;:!?()\"'])")


def tokenize(text: str) -> list[str]:
    """Lowercase and whitespace-split with punctuation as standalone tokens."""
    return _PUNCT.sub(r" \1 ", text.lower()).split()


class Vocab:
    """Token/id bijection with the five reserved ids first, then content tokens."""

    def __init__(self, content_tokens):
        content_tokens = list(content_tokens)
        for t in content_tokens:
            if t in SPECIALS:
                raise InvalidInputError(f"content token {t!r} collides with a special")
        self.tokens: list[str] = list(SPECIALS) + content_tokens
        self.token_to_id: dict[str, int] = {t: i for i, t in enumerate(self.tokens)}
        if len(self.token_to_id) != len(self.tokens):
            raise InvalidInputError("duplicate tokens in vocabulary")

    def __len__(self) -> int:
        return len(self.tokens)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocab) and self.tokens == other.tokens

    def encode_token(self, token: str) -> int:
        return self.token_to_id.get(token, UNK_ID)

    def encode(self, tokens) -> list[int]:
        return [self.token_to_id.get(t, UNK_ID) for t in tokens]

    def lookup(self, idx: int) -> str:
        if not 0 <= idx < len(self.tokens):
            raise InvalidInputError(f"id {idx} outside vocabulary of size {len(self.tokens)}")
        return self.tokens[idx]

    @classmethod
    def from_counts(cls, counts: Counter, max_size: int) -> "Vocab":
        """Keep the (max_size - 5) most frequent tokens, ties lexicographic."""
        if max_size <= len(SPECIALS):
            raise InvalidInputError(
                f"max_size must exceed the {len(SPECIALS)} reserved ids, got {max_size}")
        usable = {t: c for t, c in counts.items() if t not in SPECIALS}
        if not usable:
            raise InvalidInputError("no tokens to build a vocabulary from")
        ranked = sorted(usable.items(), key=lambda kv: (-kv[1], kv[0]))
        return cls([t for t, _ in ranked[:max_size - len(SPECIALS)]])

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            for t in self.tokens:
                f.write(t + "\n")

    @classmethod
    def load(cls, path) -> "Vocab":
        with open(path, encoding="utf-8") as f:
            tokens = [line.rstrip("\n") for line in f]
        while tokens and tokens[-1] == "":
            tokens.pop()
        if tuple(tokens[:len(SPECIALS)]) != SPECIALS:
            raise InvalidInputError(
                f"vocab file {path} does not start with the reserved tokens")
        return cls(tokens[len(SPECIALS):])


def build_vocab(source, max_size: int) -> Vocab:
    """Frequency-ranked vocab over the posts and summaries of a corpus.

    ``source`` is a corpus JSONL path or an iterable of CorpusInstance.
    """
    if isinstance(source, (str, Path)):
        source = load_corpus(source)
    counts: Counter = Counter()
    for inst in source:
        for text in list(inst.posts) + list(inst.summaries):
            counts.update(tokenize(text))
    if not counts:
        raise InvalidInputError("empty corpus: nothing to build a vocabulary from")
    return Vocab.from_counts(counts, max_size)


@dataclass(frozen=True)
class Limits:
    """Truncation/padding caps. Defaults cover the hardest preset."""

    word_limit: int = 20      # tokens kept per post
    summary_limit: int = 15   # tokens kept per summary, before EOS
    post_cap: int = 25        # max posts per instance
    thread_cap: int = 5       # max threads per instance
    flat_source_limit: int = 300

    @property
    def flat_target_limit(self) -> int:
        return self.thread_cap * (self.summary_limit + 1)


@dataclass(eq=False)
class EncodedInstance:
    """Numericalized instance: fixed-width id matrices plus boolean masks.

    ``post_ids`` is (n, word_limit) with PAD on the right; ``summary_ids`` is
    (m, summary_limit + 1) where every row ends its real content with EOS.
    Masks are True exactly at non-PAD positions. ``flat_src``/``flat_tgt``
    are the single-sequence forms used by flat-encoder/decoder variants.
    """

    post_ids: np.ndarray
    word_mask: np.ndarray
    post_mask: np.ndarray
    summary_ids: np.ndarray
    summary_mask: np.ndarray
    stop_labels: np.ndarray
    flat_src: np.ndarray
    flat_tgt: np.ndarray

    @property
    def n_posts(self) -> int:
        return self.post_ids.shape[0]

    @property
    def n_threads(self) -> int:
        return self.summary_ids.shape[0]


def encode_instance(instance: CorpusInstance, vocab: Vocab, limits: Limits,
                    source_only: bool = False) -> EncodedInstance:
    """Tokenize, id-encode, truncate and pad one instance.

    With ``source_only`` the summary side is left empty (shape (0, ...)) and
    the thread/post caps are not enforced, which is what generation on
    arbitrary inputs needs. Otherwise instances beyond the caps are rejected;
    derive caps from the corpus when configuring a model.
    """
    if not instance.posts:
        raise InvalidInputError("instance has no posts")
    p = limits.word_limit
    q = limits.summary_limit
    post_rows = []
    for i, post in enumerate(instance.posts):
        tokens = tokenize(post)[:p]
        if not tokens:
            raise InvalidInputError(f"post {i} has no tokens")
        post_rows.append(vocab.encode(tokens))
    n = len(post_rows)
    post_ids = np.full((n, p), PAD_ID, dtype=np.int64)
    word_mask = np.zeros((n, p), dtype=bool)
    for i, row in enumerate(post_rows):
        post_ids[i, :len(row)] = row
        word_mask[i, :len(row)] = True
    post_mask = np.ones(n, dtype=bool)

    flat_src: list[int] = []
    for i, row in enumerate(post_rows):
        if i:
            flat_src.append(SEP_ID)
        flat_src.extend(row)
    flat_src = flat_src[:limits.flat_source_limit]

    if source_only:
        summary_ids = np.zeros((0, q + 1), dtype=np.int64)
        summary_mask = np.zeros((0, q + 1), dtype=bool)
        stop_labels = np.zeros(0, dtype=np.int64)
        flat_tgt: list[int] = []
    else:
        if n > limits.post_cap:
            raise InvalidInputError(
                f"instance has {n} posts, over the cap {limits.post_cap}")
        m = len(instance.summaries)
        if m == 0:
            raise InvalidInputError("instance has no summaries")
        if m > limits.thread_cap:
            raise InvalidInputError(
                f"instance has {m} threads, over the cap {limits.thread_cap}")
        sum_rows = [vocab.encode(tokenize(s)[:q]) + [EOS_ID]
                    for s in instance.summaries]
        summary_ids = np.full((m, q + 1), PAD_ID, dtype=np.int64)
        summary_mask = np.zeros((m, q + 1), dtype=bool)
        for k, row in enumerate(sum_rows):
            summary_ids[k, :len(row)] = row
            summary_mask[k, :len(row)] = True
        stop_labels = np.zeros(m, dtype=np.int64)
        stop_labels[m - 1] = 1

        flat_tgt = []
        for k, row in enumerate(sum_rows):
            if k:
                flat_tgt.append(SEP_ID)
            flat_tgt.extend(row[:-1])  # per-summary EOS only terminates the whole flat form
        flat_tgt = flat_tgt[:limits.flat_target_limit - 1] + [EOS_ID]

    return EncodedInstance(
        post_ids=post_ids, word_mask=word_mask, post_mask=post_mask,
        summary_ids=summary_ids, summary_mask=summary_mask,
        stop_labels=stop_labels,
        flat_src=np.asarray(flat_src, dtype=np.int64),
        flat_tgt=np.asarray(flat_tgt, dtype=np.int64),
    )


def decode_ids(ids, vocab: Vocab) -> str:
    """Ids back to text: stop at EOS, drop PAD/SOS, render UNK as "[UNK]"."""
    words = []
    for idx in np.asarray(ids).tolist():
        token = vocab.lookup(int(idx))
        if idx == EOS_ID:
            break
        if idx in (PAD_ID, SOS_ID):
            continue
        words.append("[UNK]" if idx == UNK_ID else token)
    return " ".join(words)


@dataclass
class Batch:
    """Stacked, right-padded arrays for a list of encoded instances.

    Decoder inputs are the SOS-shifted targets: input row [SOS, w1..] lines
    up with target row [w1.., EOS] under the same mask. Widths are cropped to
    the longest real row in the batch.
    """

    post_ids: np.ndarray      # (B, n, p) int
    word_mask: np.ndarray     # (B, n, p) bool
    post_mask: np.ndarray     # (B, n) bool
    sum_input: np.ndarray     # (B, m, L) int
    sum_target: np.ndarray    # (B, m, L) int
    sum_mask: np.ndarray      # (B, m, L) bool
    stop_labels: np.ndarray   # (B, m) float64
    thread_mask: np.ndarray   # (B, m) bool
    flat_ids: np.ndarray      # (B, S) int
    flat_mask: np.ndarray     # (B, S) bool
    flat_input: np.ndarray    # (B, F) int
    flat_target: np.ndarray   # (B, F) int
    flat_tgt_mask: np.ndarray # (B, F) bool

    @property
    def size(self) -> int:
        return self.post_ids.shape[0]


def _shift_sos(row: np.ndarray) -> np.ndarray:
    return np.concatenate(([SOS_ID], row[:-1])) if len(row) else row


def collate(instances) -> Batch:
    """Stack encoded instances into one padded batch."""
    instances = list(instances)
    if not instances:
        raise InvalidInputError("cannot collate an empty batch")
    batch = len(instances)
    n_max = max(e.n_posts for e in instances)
    p_eff = max(int(e.word_mask.sum(axis=1).max()) for e in instances)
    m_max = max(e.n_threads for e in instances)
    len_sum = max((int(e.summary_mask.sum(axis=1).max()) if e.n_threads else 0)
                  for e in instances)
    len_src = max(len(e.flat_src) for e in instances)
    len_tgt = max(len(e.flat_tgt) for e in instances)

    post_ids = np.full((batch, n_max, p_eff), PAD_ID, dtype=np.int64)
    word_mask = np.zeros((batch, n_max, p_eff), dtype=bool)
    post_mask = np.zeros((batch, n_max), dtype=bool)
    sum_input = np.full((batch, m_max, len_sum), PAD_ID, dtype=np.int64)
    sum_target = np.full((batch, m_max, len_sum), PAD_ID, dtype=np.int64)
    sum_mask = np.zeros((batch, m_max, len_sum), dtype=bool)
    stop_labels = np.zeros((batch, m_max), dtype=np.float64)
    thread_mask = np.zeros((batch, m_max), dtype=bool)
    flat_ids = np.full((batch, max(len_src, 1)), PAD_ID, dtype=np.int64)
    flat_mask = np.zeros((batch, max(len_src, 1)), dtype=bool)
    flat_input = np.full((batch, max(len_tgt, 1)), PAD_ID, dtype=np.int64)
    flat_target = np.full((batch, max(len_tgt, 1)), PAD_ID, dtype=np.int64)
    flat_tgt_mask = np.zeros((batch, max(len_tgt, 1)), dtype=bool)

    for i, e in enumerate(instances):
        n = e.n_posts
        post_ids[i, :n] = e.post_ids[:, :p_eff]
        word_mask[i, :n] = e.word_mask[:, :p_eff]
        post_mask[i, :n] = True
        for k in range(e.n_threads):
            length = int(e.summary_mask[k].sum())
            row = e.summary_ids[k, :length]
            sum_target[i, k, :length] = row
            sum_input[i, k, :length] = _shift_sos(row)
            sum_mask[i, k, :length] = True
        m = e.n_threads
        stop_labels[i, :m] = e.stop_labels
        thread_mask[i, :m] = True
        flat_ids[i, :len(e.flat_src)] = e.flat_src
        flat_mask[i, :len(e.flat_src)] = True
        flat_target[i, :len(e.flat_tgt)] = e.flat_tgt
        flat_input[i, :len(e.flat_tgt)] = _shift_sos(e.flat_tgt)
        flat_tgt_mask[i, :len(e.flat_tgt)] = True

    return Batch(post_ids, word_mask, post_mask, sum_input, sum_target, sum_mask,
                 stop_labels, thread_mask, flat_ids, flat_mask,
                 flat_input, flat_target, flat_tgt_mask)
