"""Self-contained model checkpoints.

One JSON file carries everything needed to resume or decode: the model
config, the vocabulary, every parameter array, and (optionally) the Adam
state. Arrays are base64-encoded little-endian raw bytes with explicit
shape/dtype, so files are byte-identical across platforms and runs.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import SchemaError
from .model import ModelConfig, Summarizer
from .nn import ParamStore
from .optim import AdamState
from .textproc import SPECIALS, Vocab

FORMAT = "threadsum-checkpoint"
VERSION = 1


def _pack(a: np.ndarray) -> dict:
    le = np.ascontiguousarray(a, dtype=a.dtype.newbyteorder("<"))
    return {
        "shape": list(a.shape),
        "dtype": a.dtype.name,
        "data": base64.b64encode(le.tobytes()).decode("ascii"),
    }


def _unpack(d: dict) -> np.ndarray:
    dtype = np.dtype(d["dtype"])
    raw = np.frombuffer(base64.b64decode(d["data"]), dtype=dtype.newbyteorder("<"))
    return raw.astype(dtype).reshape(d["shape"])  # native order, writable


def save_checkpoint(path, model: Summarizer, vocab: Vocab,
                    adam: AdamState | None = None, meta: dict | None = None) -> None:
    payload = {
        "format": FORMAT,
        "version": VERSION,
        "dtype": np.dtype(model.dtype).name,
        "config": model.config.to_dict(),
        "vocab": list(vocab.tokens),
        "params": {name: _pack(t.data) for name, t in model.store.items()},
        "meta": meta or {},
    }
    if adam is not None:
        payload["optimizer"] = {
            "lr": adam.lr,
            "beta1": adam.beta1,
            "beta2": adam.beta2,
            "eps": adam.eps,
            "step_count": adam.step_count,
            "m": {k: _pack(v) for k, v in adam.m.items()},
            "v": {k: _pack(v) for k, v in adam.v.items()},
        }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


@dataclass
class CheckpointBundle:
    model: Summarizer
    vocab: Vocab
    adam: AdamState | None
    meta: dict


def load_checkpoint(path) -> CheckpointBundle:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from exc
    if data.get("format") != FORMAT:
        raise SchemaError(f"{path}: not a {FORMAT} file")
    if data.get("version", 0) > VERSION:
        raise SchemaError(
            f"{path}: version {data['version']} is newer than supported ({VERSION})")
    tokens = data["vocab"]
    if tokens[:len(SPECIALS)] != list(SPECIALS):
        raise SchemaError(f"{path}: vocabulary does not start with the reserved tokens")
    vocab = Vocab(tokens[len(SPECIALS):])
    config = ModelConfig.from_dict(data["config"])
    if config.vocab_size != len(vocab.tokens):
        raise SchemaError(
            f"{path}: config vocab_size {config.vocab_size} != stored vocabulary "
            f"size {len(vocab.tokens)}")
    dtype = np.dtype(data.get("dtype", "float64"))
    # Build the layout, then overwrite every array with the stored values.
    model = Summarizer(config, ParamStore(np.random.default_rng(0), dtype=dtype))
    stored = data["params"]
    have, want = set(stored), {name for name, _ in model.store.items()}
    if have != want:
        missing, extra = sorted(want - have), sorted(have - want)
        raise SchemaError(f"{path}: parameter set mismatch "
                          f"(missing {missing}, unexpected {extra})")
    for name, t in model.store.items():
        arr = _unpack(stored[name])
        if tuple(arr.shape) != t.shape:
            raise SchemaError(f"{path}: parameter {name} has shape "
                              f"{tuple(arr.shape)}, expected {t.shape}")
        t.data = arr.astype(dtype, copy=False)
    adam = None
    if "optimizer" in data:
        opt = data["optimizer"]
        adam = AdamState(lr=opt["lr"], beta1=opt["beta1"], beta2=opt["beta2"],
                         eps=opt["eps"], step_count=opt["step_count"],
                         m={k: _unpack(v) for k, v in opt["m"].items()},
                         v={k: _unpack(v) for k, v in opt["v"].items()})
    return CheckpointBundle(model=model, vocab=vocab, adam=adam,
                            meta=data.get("meta", {}))
