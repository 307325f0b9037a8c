"""Hierarchical encoder-decoder summarizer for interleaved post streams.

Four variants share one embedding/attention convention:

=========  ====================  ========================================
variant    encoder               decoder
=========  ====================  ========================================
seq2seq    flat BiLSTM           one word LSTM, softmax attention only
seq2hier   flat BiLSTM           thread LSTM + word LSTM; gate scores
                                 computed per source token
hier2seq   word + post BiLSTMs   one word LSTM; gate scores computed
                                 once from its initial state
hier2hier  word + post BiLSTMs   thread LSTM + word LSTM
=========  ====================  ========================================

Attention has three tiers. ``gamma`` gates whole posts (sigmoid per post,
or softmax in the alternative mode), ``beta`` gates individual source
tokens via fused word+post vectors, and ``alpha`` is a softmax over source
tokens recomputed at every generated word. ``beta_hat = beta * gamma``
scales each token gate by its post's gate, and ``alpha_hat =
beta_hat * alpha`` weights the word memory as-is — deliberately not
renormalized, so a thread step can attend to almost nothing.

The thread-level decoder advances on ``[sum(beta_hat * W); last word
state]``, predicts a stop probability from its state, and produces a
thread vector ``s_k`` that seeds the word decoder. Generation is greedy
and deterministic; dropout applies only to ``s_k`` and only in training.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, fields, replace

import numpy as np

from . import autodiff as ad
from . import nn
from .autodiff import Tensor
from .errors import ConfigurationError
from .nn import BiLstm, FeedForward, Linear, LstmParams, ParamStore, bilstm_encode, lstm_step, masked_mean
from .textproc import EOS_ID, PAD_ID, SEP_ID, SOS_ID, Batch, EncodedInstance, Limits, decode_ids

log = logging.getLogger(__name__)

VARIANTS = ("seq2seq", "seq2hier", "hier2seq", "hier2hier")
GAMMA_MODES = ("sigmoid", "softmax")


@dataclass
class ModelConfig:
    """Architecture and decoding caps; :meth:`validate` rejects contradictions."""

    vocab_size: int
    d: int = 100                 # embedding and hidden width
    variant: str = "hier2hier"
    gamma_enabled: bool = True   # post-level gates
    beta_enabled: bool = True    # token-level gates
    gamma_mode: str = "sigmoid"
    dropout_rate: float = 0.1    # applied to the thread vector s_k
    stop_weight: float = 1.0     # weight of the stop-prediction loss term
    word_limit: int = 20         # tokens kept per post
    summary_limit: int = 15      # words generated per summary
    post_cap: int = 25           # max posts per instance
    thread_cap: int = 5          # max thread steps
    flat_source_limit: int = 300

    @property
    def has_hier_encoder(self) -> bool:
        return self.variant in ("hier2seq", "hier2hier")

    @property
    def has_hier_decoder(self) -> bool:
        return self.variant in ("seq2hier", "hier2hier")

    def validate(self) -> "ModelConfig":
        if self.variant not in VARIANTS:
            raise ConfigurationError(f"unknown variant {self.variant!r}")
        if self.gamma_mode not in GAMMA_MODES:
            raise ConfigurationError(f"unknown gamma_mode {self.gamma_mode!r}")
        if self.d <= 0:
            raise ConfigurationError(f"d must be positive, got {self.d}")
        if self.vocab_size <= 5:
            raise ConfigurationError(
                f"vocab_size {self.vocab_size} leaves no room beyond the special tokens")
        if self.variant == "seq2seq" and (self.gamma_enabled or self.beta_enabled):
            raise ConfigurationError(
                "seq2seq has no gate attentions; gamma_enabled/beta_enabled must be off")
        if self.gamma_mode == "softmax" and not self.gamma_enabled:
            raise ConfigurationError("gamma_mode=softmax requires gamma_enabled")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigurationError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.stop_weight < 0.0:
            raise ConfigurationError(f"stop_weight must be >= 0, got {self.stop_weight}")
        for cap in ("word_limit", "summary_limit", "post_cap", "thread_cap",
                    "flat_source_limit"):
            if getattr(self, cap) < 1:
                raise ConfigurationError(f"{cap} must be >= 1")
        return self

    @classmethod
    def for_variant(cls, variant: str, vocab_size: int, **overrides) -> "ModelConfig":
        """Config with per-variant gate defaults (seq2seq has no gates)."""
        cfg = cls(vocab_size=vocab_size, variant=variant)
        if variant == "seq2seq":
            cfg = replace(cfg, gamma_enabled=False, beta_enabled=False)
        if overrides:
            cfg = replace(cfg, **overrides)
        return cfg.validate()

    def limits(self) -> Limits:
        return Limits(word_limit=self.word_limit, summary_limit=self.summary_limit,
                      post_cap=self.post_cap, thread_cap=self.thread_cap,
                      flat_source_limit=self.flat_source_limit)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigurationError(f"unknown config keys {unknown}")
        return cls(**d).validate()


@dataclass
class EncodedChannel:
    """Source-side representations for one batch.

    ``memory`` holds the word vectors the decoders attend over, flattened to
    (B, K, 2d); rows at PAD tokens are exactly zero. ``fused`` adds each
    token's post vector (hierarchical encoders) or aliases ``memory`` (flat).
    ``posts``/``post_mask`` exist only for hierarchical encoders, where
    K = n_posts * words_per_post.
    """

    memory: Tensor
    mem_mask: np.ndarray
    fused: Tensor
    c_prime: Tensor
    posts: Tensor | None = None
    post_mask: np.ndarray | None = None
    n_posts: int = 0
    words_per_post: int = 0

    @property
    def batch_size(self) -> int:
        return self.memory.shape[0]

    @property
    def hierarchical(self) -> bool:
        return self.posts is not None


@dataclass
class AttentionMaps:
    """Attention values recorded during one thread step (plain arrays).

    Hierarchical channels store ``gamma`` as (B, n) and the token-level maps
    as (B, n, p); flat channels store everything as (B, T). ``alpha`` and
    ``alpha_hat`` collect one entry per generated-word step. seq2seq has no
    gates, so its gamma/beta/beta_hat are None and alpha_hat aliases alpha.
    """

    gamma: np.ndarray | None
    beta: np.ndarray | None
    beta_hat: np.ndarray | None
    alpha: list
    alpha_hat: list


@dataclass
class ForwardResult:
    """Teacher-forced forward pass: differentiable loss pieces plus traces."""

    nll_sum: Tensor                 # scalar; masked word NLL summed over the batch
    token_count: int                # real target tokens behind nll_sum
    stop_logits: Tensor | None      # (B, m) for hierarchical decoders
    maps: list | None = None        # AttentionMaps per thread step


@dataclass
class GenerationResult:
    """Greedy decode of one instance."""

    token_ids: list                 # list of summaries, each a list of word ids
    stop_probs: list                # per thread step (hierarchical decoders)
    forced_stop: bool               # hit the cap without a stop signal / EOS
    maps: list | None = None

    def texts(self, vocab) -> list:
        return [decode_ids(ids, vocab) for ids in self.token_ids]

    def trace(self, vocab, top_k: int = 10) -> dict:
        """JSON-able diagnostic: per thread, the post gates, the strongest
        token gates, and the words that were produced."""
        threads = []
        for k, ids in enumerate(self.token_ids):
            entry = {"words": [vocab.lookup(t) for t in ids]}
            if self.maps:
                m = self.maps[min(k, len(self.maps) - 1)]
                if m.gamma is not None:
                    entry["gamma"] = [round(float(v), 6) for v in m.gamma[0]]
                if m.beta_hat is not None:
                    flat = m.beta_hat[0].reshape(-1)
                    order = np.argsort(-flat, kind="stable")[:top_k]
                    if m.beta_hat.ndim == 3:
                        p = m.beta_hat.shape[2]
                        entry["beta_hat_top"] = [[int(i) // p, int(i) % p] for i in order]
                    else:
                        entry["beta_hat_top"] = [int(i) for i in order]
            threads.append(entry)
        out = {"summaries": self.texts(vocab), "forced_stop": self.forced_stop,
               "threads": threads}
        if self.stop_probs:
            out["stop_probs"] = [round(float(p), 6) for p in self.stop_probs]
        return out


@dataclass
class AttnNet:
    """Additive scoring network: scalar score per (query, key) pair.

    score = w_out . tanh(query @ w_query + key @ w_key + b_hidden) + b_out.
    Key projections depend only on the encoder output, so callers project
    them once per batch and reuse them at every decoding step.
    """

    w_query: Tensor
    w_key: Tensor
    b_hidden: Tensor
    w_out: Tensor
    b_out: Tensor

    @classmethod
    def create(cls, store: ParamStore, prefix: str, query_dim: int, key_dim: int,
               width: int) -> "AttnNet":
        return cls(
            w_query=store.tensor(f"{prefix}.w_query", (query_dim, width)),
            w_key=store.tensor(f"{prefix}.w_key", (key_dim, width)),
            b_hidden=store.tensor(f"{prefix}.b_hidden", (width,)),
            w_out=store.tensor(f"{prefix}.w_out", (width, 1)),
            b_out=store.tensor(f"{prefix}.b_out", (1,)),
        )

    def project_keys(self, keys: Tensor) -> Tensor:
        return ad.add(ad.matmul(keys, self.w_key), self.b_hidden)

    def scores(self, query: Tensor, projected_keys: Tensor) -> Tensor:
        b, k = projected_keys.shape[0], projected_keys.shape[1]
        q = ad.reshape(ad.matmul(query, self.w_query), (b, 1, self.b_hidden.shape[0]))
        hidden = ad.tanh(ad.add(q, projected_keys))
        e = ad.add(ad.matmul(hidden, self.w_out), self.b_out)
        return ad.reshape(e, (b, k))


def _context(weights: Tensor, memory: Tensor) -> Tensor:
    """Weighted sum of memory rows: (B, K) x (B, K, D) -> (B, D)."""
    b, k = weights.shape
    out = ad.matmul(ad.reshape(weights, (b, 1, k)), memory)
    return ad.reshape(out, (b, memory.shape[-1]))


class Summarizer:
    """One model instance: parameters plus the forward passes of its variant."""

    def __init__(self, config: ModelConfig, store: ParamStore):
        self.config = config.validate()
        self.store = store
        self.forced_stops = 0
        self._build()

    @classmethod
    def init(cls, config: ModelConfig, seed: int, dtype=np.float64) -> "Summarizer":
        """Fresh model with normal(0, 0.1) parameters drawn in build order."""
        return cls(config, ParamStore(np.random.default_rng(seed), dtype=dtype))

    @property
    def dtype(self):
        return self.store.dtype

    def param_count(self) -> int:
        return self.store.total_scalars()

    def _build(self) -> None:
        cfg, store = self.config, self.store
        d, d2 = cfg.d, 2 * cfg.d
        self.embed = store.tensor("embed", (cfg.vocab_size, d))
        if cfg.has_hier_encoder:
            self.enc_w2w = BiLstm.create(store, "enc_w2w", d, d)
            self.enc_p2p = BiLstm.create(store, "enc_p2p", d2, d)
        else:
            self.enc_flat = BiLstm.create(store, "enc_flat", d, d)
        if cfg.has_hier_decoder:
            self.init_t2t_h = Linear.create(store, "init_t2t.h", d2, d)
            self.init_t2t_c = Linear.create(store, "init_t2t.c", d2, d)
            self.dec_t2t = LstmParams.create(store, "dec_t2t", d2 + d, d)
            self.stop_head = Linear.create(store, "stop", d, 1)
            self.thread_rep = FeedForward.create(
                store, "thread_rep", [2 * d + d2, d, d], ["tanh", "tanh"])
            # the thread vector s_k seeds both word-decoder states
            self.init_w2w_h = Linear.create(store, "init_w2w.h", d, d)
            self.init_w2w_c = Linear.create(store, "init_w2w.c", d, d)
        else:
            self.init_w2w_h = Linear.create(store, "init_w2w.h", d2, d)
            self.init_w2w_c = Linear.create(store, "init_w2w.c", d2, d)
        self.dec_w2w = LstmParams.create(store, "dec_w2w", d + d2, d)
        self.attn_a = AttnNet.create(store, "attn_a", d, d2, d)
        if cfg.gamma_enabled:
            self.attn_g = AttnNet.create(store, "attn_g", d, d2, d)
        if cfg.beta_enabled:
            self.attn_b = AttnNet.create(store, "attn_b", d, d2, d)
        self.out_proj = Linear.create(store, "out_proj", d + d2, cfg.vocab_size)

    # ------------------------------------------------------------------ encoder

    def _encode_hier(self, post_ids, word_mask, post_mask) -> EncodedChannel:
        b, n, p = post_ids.shape
        d2 = 2 * self.config.d
        ids_t = post_ids.reshape(b * n, p).T          # words become the scan axis
        wmask_t = word_mask.reshape(b * n, p).T
        emb = ad.embedding(self.embed, ids_t)
        words = bilstm_encode(self.enc_w2w, emb, wmask_t)       # (p, B*n, 2d)
        pooled = masked_mean(words, wmask_t, axis=0, allow_empty=True)
        pooled = ad.transpose(ad.reshape(pooled, (b, n, d2)), (1, 0, 2))
        posts = bilstm_encode(self.enc_p2p, pooled, post_mask.T)  # (n, B, 2d)
        c_prime = masked_mean(posts, post_mask.T, axis=0)
        posts_b = ad.transpose(posts, (1, 0, 2))
        mem4 = ad.reshape(ad.transpose(words, (1, 0, 2)), (b, n, p, d2))
        fused4 = ad.add(mem4, ad.reshape(posts_b, (b, n, 1, d2)))
        return EncodedChannel(
            memory=ad.reshape(mem4, (b, n * p, d2)),
            mem_mask=word_mask.reshape(b, n * p),
            fused=ad.reshape(fused4, (b, n * p, d2)),
            c_prime=c_prime,
            posts=posts_b,
            post_mask=post_mask,
            n_posts=n,
            words_per_post=p,
        )

    def _encode_flat(self, flat_ids, flat_mask) -> EncodedChannel:
        emb = ad.embedding(self.embed, flat_ids.T)
        toks = bilstm_encode(self.enc_flat, emb, flat_mask.T)   # (T, B, 2d)
        c_prime = masked_mean(toks, flat_mask.T, axis=0)
        memory = ad.transpose(toks, (1, 0, 2))
        return EncodedChannel(memory=memory, mem_mask=flat_mask, fused=memory,
                              c_prime=c_prime)

    def encode(self, batch: Batch) -> EncodedChannel:
        if self.config.has_hier_encoder:
            return self._encode_hier(batch.post_ids, batch.word_mask, batch.post_mask)
        return self._encode_flat(batch.flat_ids, batch.flat_mask)

    def _proj_caches(self, ch: EncodedChannel) -> dict:
        cache = {"a": self.attn_a.project_keys(ch.fused)}
        if self.config.beta_enabled:
            cache["b"] = self.attn_b.project_keys(ch.fused)
        if self.config.gamma_enabled:
            keys = ch.posts if ch.hierarchical else ch.memory
            cache["g"] = self.attn_g.project_keys(keys)
        return cache

    # ---------------------------------------------------------------- attention

    def _gates(self, ch: EncodedChannel, query: Tensor, cache: dict,
               collect: bool):
        """Post and token gates for one thread step.

        Returns (beta_hat, maps). Disabled gates are constant ones, so the
        rescaling identities (beta_hat = beta*gamma, alpha_hat = beta_hat*alpha)
        hold bitwise in every flag combination.
        """
        cfg = self.config
        b = ch.batch_size
        k = ch.memory.shape[1]
        if cfg.gamma_enabled:
            gmask = ch.post_mask if ch.hierarchical else ch.mem_mask
            scores = self.attn_g.scores(query, cache["g"])
            if cfg.gamma_mode == "softmax":
                gamma = ad.masked_softmax(scores, gmask)
            else:
                gamma = ad.mul(ad.sigmoid(scores), ad.constant(gmask.astype(self.dtype)))
        else:
            rows = ch.n_posts if ch.hierarchical else k
            gamma = ad.constant(np.ones((b, rows), dtype=self.dtype))
        if cfg.beta_enabled:
            scores = self.attn_b.scores(query, cache["b"])
            beta = ad.mul(ad.sigmoid(scores), ad.constant(ch.mem_mask.astype(self.dtype)))
        else:
            beta = ad.constant(np.ones((b, k), dtype=self.dtype))
        if ch.hierarchical:
            n, p = ch.n_posts, ch.words_per_post
            beta3 = ad.reshape(beta, (b, n, p))
            hat3 = ad.mul(beta3, ad.reshape(gamma, (b, n, 1)))
            beta_hat = ad.reshape(hat3, (b, k))
            maps_beta, maps_hat = beta3.data, hat3.data
        else:
            beta_hat = ad.mul(beta, gamma)
            maps_beta, maps_hat = beta.data, beta_hat.data
        maps = AttentionMaps(gamma.data, maps_beta, maps_hat, [], []) if collect else None
        return beta_hat, maps

    def _alpha(self, ch: EncodedChannel, beta_hat: Tensor | None, query: Tensor,
               cache: dict):
        alpha = ad.masked_softmax(self.attn_a.scores(query, cache["a"]), ch.mem_mask)
        if beta_hat is None:        # seq2seq: no gates at all
            return alpha, alpha
        return alpha, ad.mul(alpha, beta_hat)

    def _token_shaped(self, ch: EncodedChannel, arr: np.ndarray) -> np.ndarray:
        if ch.hierarchical:
            return arr.reshape(ch.batch_size, ch.n_posts, ch.words_per_post)
        return arr

    # ----------------------------------------------------------- teacher forcing

    def _teacher_words(self, ch, beta_hat, h, c, inputs, targets, mask, cache, maps):
        """Teacher-forced word decoding over fixed-width id rows.

        State updates are gated per row, so padded positions freeze the state
        and contribute zero loss and zero gradient; ``h`` after the loop is
        each row's state after its last real step.
        """
        nll = ad.constant(np.zeros((), dtype=self.dtype))
        for l in range(inputs.shape[1]):
            alpha, alpha_hat = self._alpha(ch, beta_hat, h, cache)
            if maps is not None:
                maps.alpha.append(self._token_shaped(ch, alpha.data))
                maps.alpha_hat.append(self._token_shaped(ch, alpha_hat.data))
            ctx = _context(alpha_hat, ch.memory)
            emb = ad.embedding(self.embed, inputs[:, l])
            hn, cn = lstm_step(self.dec_w2w, ad.concat([emb, ctx], axis=-1), h, c)
            ml = ad.constant(mask[:, l:l + 1].astype(self.dtype))
            keep = ad.constant(1.0 - ml.data)
            h = hn * ml + h * keep
            c = cn * ml + c * keep
            logits = self.out_proj(ad.concat([h, ctx], axis=-1))
            nll = nll + ad.tsum(ad.cross_entropy_logits(logits, targets[:, l], mask[:, l]))
        return nll, h

    def _teacher_hier(self, ch, batch, cache, training, rng, collect):
        cfg = self.config
        b, m = batch.thread_mask.shape
        h_t = ad.tanh(self.init_t2t_h(ch.c_prime))
        c_t = ad.tanh(self.init_t2t_c(ch.c_prime))
        last_word = ad.constant(np.zeros((b, cfg.d), dtype=self.dtype))
        nll = ad.constant(np.zeros((), dtype=self.dtype))
        stop_cols = []
        maps_list = [] if collect else None
        for k in range(m):
            beta_hat, maps = self._gates(ch, h_t, cache, collect)
            u = _context(beta_hat, ch.memory)
            hn, cn = lstm_step(self.dec_t2t, ad.concat([u, last_word], axis=-1), h_t, c_t)
            mk = ad.constant(batch.thread_mask[:, k:k + 1].astype(self.dtype))
            keep = ad.constant(1.0 - mk.data)
            h_t = hn * mk + h_t * keep
            c_t = cn * mk + c_t * keep
            stop_cols.append(self.stop_head(h_t))
            s = self.thread_rep(ad.concat([h_t, last_word, u], axis=-1))
            s = nn.dropout(s, cfg.dropout_rate, rng, training)
            hw = self.init_w2w_h(s)
            cw = self.init_w2w_c(s)
            nll_k, last_word = self._teacher_words(
                ch, beta_hat, hw, cw, batch.sum_input[:, k], batch.sum_target[:, k],
                batch.sum_mask[:, k], cache, maps)
            nll = nll + nll_k
            if collect:
                maps_list.append(maps)
        stop_logits = ad.concat(stop_cols, axis=-1)
        return ForwardResult(nll, int(batch.sum_mask.sum()), stop_logits, maps_list)

    def _teacher_flat(self, ch, batch, cache, collect):
        h = ad.tanh(self.init_w2w_h(ch.c_prime))
        c = ad.tanh(self.init_w2w_c(ch.c_prime))
        beta_hat, maps = None, None
        if self.config.variant == "hier2seq":
            beta_hat, maps = self._gates(ch, h, cache, collect)
        elif collect:
            maps = AttentionMaps(None, None, None, [], [])
        nll, _ = self._teacher_words(ch, beta_hat, h, c, batch.flat_input,
                                     batch.flat_target, batch.flat_tgt_mask, cache, maps)
        return ForwardResult(nll, int(batch.flat_tgt_mask.sum()), None,
                             [maps] if collect else None)

    def teacher_forward(self, batch: Batch, training: bool = False,
                        rng: np.random.Generator | None = None,
                        collect_maps: bool = False) -> ForwardResult:
        """Forward pass against ground-truth targets; returns summed word NLL
        (and stop logits for hierarchical decoders) ready for a loss."""
        if training and self.config.dropout_rate > 0.0 and rng is None:
            raise ConfigurationError("training forward with dropout needs an rng")
        ch = self.encode(batch)
        cache = self._proj_caches(ch)
        if self.config.has_hier_decoder:
            return self._teacher_hier(ch, batch, cache, training, rng, collect_maps)
        return self._teacher_flat(ch, batch, cache, collect_maps)

    # ----------------------------------------------------------------- inference

    def _greedy_words(self, ch, beta_hat, h, c, max_words, cache, maps):
        """Greedy word decode; mirrors the teacher loop's state advances.

        The step that yields EOS (or the final step at the cap) still advances
        the LSTM, so the returned state matches a teacher-forced run over the
        same words. Ties in the argmax go to the lowest token id.
        """
        words = []
        prev = SOS_ID
        ended = False
        for l in range(max_words + 1):
            alpha, alpha_hat = self._alpha(ch, beta_hat, h, cache)
            if maps is not None:
                maps.alpha.append(self._token_shaped(ch, alpha.data))
                maps.alpha_hat.append(self._token_shaped(ch, alpha_hat.data))
            ctx = _context(alpha_hat, ch.memory)
            emb = ad.embedding(self.embed, np.array([prev]))
            h, c = lstm_step(self.dec_w2w, ad.concat([emb, ctx], axis=-1), h, c)
            logits = self.out_proj(ad.concat([h, ctx], axis=-1))
            tok = int(np.argmax(logits.data[0]))
            if l == max_words:
                break
            if tok == EOS_ID:
                ended = True
                break
            words.append(tok)
            prev = tok
        return words, h, ended

    def _generate_hier(self, ch, cache, collect):
        cfg = self.config
        h_t = ad.tanh(self.init_t2t_h(ch.c_prime))
        c_t = ad.tanh(self.init_t2t_c(ch.c_prime))
        last_word = ad.constant(np.zeros((1, cfg.d), dtype=self.dtype))
        summaries, stops = [], []
        maps_list = [] if collect else None
        stopped = False
        for _ in range(cfg.thread_cap):
            beta_hat, maps = self._gates(ch, h_t, cache, collect)
            u = _context(beta_hat, ch.memory)
            h_t, c_t = lstm_step(self.dec_t2t, ad.concat([u, last_word], axis=-1),
                                 h_t, c_t)
            p_stop = float(ad.sigmoid(self.stop_head(h_t)).data[0, 0])
            stops.append(p_stop)
            s = self.thread_rep(ad.concat([h_t, last_word, u], axis=-1))
            hw = self.init_w2w_h(s)
            cw = self.init_w2w_c(s)
            words, last_word, _ = self._greedy_words(
                ch, beta_hat, hw, cw, cfg.summary_limit, cache, maps)
            summaries.append(words)
            if collect:
                maps_list.append(maps)
            if p_stop > 0.5:        # this thread was the last one
                stopped = True
                break
        if not stopped:
            self.forced_stops += 1
            log.warning("thread decoding hit the cap (%d) without a stop signal",
                        self.config.thread_cap)
        return GenerationResult(summaries, stops, not stopped, maps_list)

    def _generate_flat(self, ch, cache, collect):
        cfg = self.config
        h = ad.tanh(self.init_w2w_h(ch.c_prime))
        c = ad.tanh(self.init_w2w_c(ch.c_prime))
        beta_hat, maps = None, None
        if cfg.variant == "hier2seq":
            beta_hat, maps = self._gates(ch, h, cache, collect)
        elif collect:
            maps = AttentionMaps(None, None, None, [], [])
        cap = cfg.thread_cap * (cfg.summary_limit + 1) - 1
        words, _, ended = self._greedy_words(ch, beta_hat, h, c, cap, cache, maps)
        summaries, current = [], []
        for tok in words:           # the flat target separates summaries by SEP
            if tok == SEP_ID:
                if current:
                    summaries.append(current)
                    current = []
            else:
                current.append(tok)
        if current:
            summaries.append(current)
        if not ended:
            self.forced_stops += 1
            log.warning("flat decoding hit the word cap (%d) without EOS", cap)
        return GenerationResult(summaries, [], not ended,
                                [maps] if collect else None)

    def generate(self, inst: EncodedInstance, collect_maps: bool = False) -> GenerationResult:
        """Greedy decode of one instance's source side. Deterministic."""
        with ad.no_grad():
            if self.config.has_hier_encoder:
                ch = self._encode_hier(inst.post_ids[None], inst.word_mask[None],
                                       inst.post_mask[None])
            else:
                ch = self._encode_flat(inst.flat_src[None],
                                       inst.flat_src[None] != PAD_ID)
            cache = self._proj_caches(ch)
            if self.config.has_hier_decoder:
                return self._generate_hier(ch, cache, collect_maps)
            return self._generate_flat(ch, cache, collect_maps)
