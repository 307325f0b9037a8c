"""Command-line entry point.

Subcommands: ``synth`` (interleave source documents into a corpus), ``vocab``
(frequency-ranked vocabulary), ``train``, ``generate``, ``eval`` (ROUGE), and
``gradcheck`` (finite-difference verification). A flat ``key = value`` config
file can pre-fill any subcommand's flags; explicit flags win. Progress goes to
stderr; artifact files are byte-identical for identical flags and seed.
Exit codes: 0 success, 1 usage or input error, 2 internal error.
"""

from __future__ import annotations

import argparse
import json
import sys
import traceback
from dataclasses import replace
from pathlib import Path

from .checkpoint import load_checkpoint, save_checkpoint
from .corpus import PRESETS, load_corpus, read_docs_jsonl, synthesize_corpus
from .errors import ThreadsumError
from .gradcheck import check_config, finite_diff_gradcheck
from .model import VARIANTS, ModelConfig, Summarizer
from .rouge import MODES, evaluate_corpus
from .textproc import Vocab, build_vocab
from .training import (TrainSchedule, encode_corpus, fit_limits,
                       generate_summaries, train)

GRADCHECK_TOLERANCE = 1e-4

_TRUTHY = {"true", "yes", "on"}
_FALSY = {"false", "no", "off"}


class UsageError(Exception):
    """Bad command line or config file; printed with usage, exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


def _progress(msg: str) -> None:
    print(msg, file=sys.stderr)


def _dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _write_json(path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_dump_json(obj) + "\n")


def parse_config_file(path) -> list[str]:
    """Flat ``key = value`` lines -> argv tokens (booleans become bare flags)."""
    tokens: list[str] = []
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip().strip("\"'")
        if not sep or not key or not value:
            raise UsageError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        flag = "--" + key.replace("_", "-")
        low = value.lower()
        if low in _TRUTHY:
            tokens.append(flag)
        elif low in _FALSY:
            pass
        else:
            tokens.extend([flag, value])
    return tokens


def _merge_config(argv: list[str]) -> list[str]:
    """Pull ``--config FILE`` out of argv and splice its tokens in after the
    subcommand, so explicit flags (parsed later) override the file."""
    argv = list(argv)
    tokens: list[str] = []
    i = 0
    while i < len(argv):
        arg = argv[i]
        if arg == "--config":
            if i + 1 >= len(argv):
                raise UsageError("--config needs a file path")
            tokens.extend(parse_config_file(argv[i + 1]))
            del argv[i:i + 2]
        elif arg.startswith("--config="):
            tokens.extend(parse_config_file(arg.split("=", 1)[1]))
            del argv[i]
        else:
            i += 1
    if tokens:
        if not argv or argv[0].startswith("-"):
            raise UsageError("--config requires a subcommand")
        argv = [argv[0]] + tokens + argv[1:]
    return argv


def _build_parser() -> _Parser:
    parser = _Parser(prog="threadsum",
                     description="Interleaved-thread summarization toolkit.")
    sub = parser.add_subparsers(dest="command", metavar="command",
                            parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("synth",
                       help="interleave source documents into a corpus",
                       description="Synthesize an interleaved corpus: "
                                   "train/eval/test JSONL splits plus stats.json.")
    p.add_argument("--preset", required=True, choices=sorted(PRESETS),
                   help="difficulty preset")
    p.add_argument("--in", dest="inp", required=True, metavar="DOCS",
                   help="source documents JSONL ({sentences, title} per line)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, required=True, help="RNG seed")
    p.add_argument("--ordering", choices=["first", "density"], default=None,
                   help="summary ordering rule (default: preset's own)")
    p.add_argument("--max-instances", type=int, default=None,
                   help="cap total instances across splits (default: no cap)")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("vocab",
                       help="build a frequency-ranked vocabulary",
                       description="Build a vocabulary file from a corpus.")
    p.add_argument("--corpus", required=True, help="corpus JSONL file")
    p.add_argument("--max-size", type=int, required=True,
                   help="vocabulary size cap including the 5 reserved tokens")
    p.add_argument("--out", required=True, help="output vocabulary file")
    p.set_defaults(func=_cmd_vocab)

    p = sub.add_parser("train",
                       help="train a summarizer",
                       description="Train a model; writes per-epoch checkpoints, "
                                   "checkpoint-final.json, and loss.csv.")
    p.add_argument("--corpus", required=True,
                   help="training corpus: a JSONL file or a synth output "
                        "directory (its train.jsonl is used)")
    p.add_argument("--vocab", required=True, help="vocabulary file")
    p.add_argument("--variant", choices=VARIANTS, default="hier2hier",
                   help="architecture variant (default: %(default)s)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--lr", type=float, default=1e-4,
                   help="Adam learning rate (default: %(default)s)")
    p.add_argument("--batch", type=int, default=64,
                   help="batch size (default: %(default)s)")
    p.add_argument("--epochs", type=int, default=1,
                   help="training epochs (default: %(default)s)")
    p.add_argument("--seed", type=int, default=0,
                   help="RNG seed for init, shuffling, dropout (default: %(default)s)")
    p.add_argument("--dim", type=int, default=100,
                   help="embedding/hidden dimension (default: %(default)s)")
    p.add_argument("--no-gamma", action="store_true",
                   help="disable the post-level gate attention")
    p.add_argument("--no-beta", action="store_true",
                   help="disable the word-level gate attention")
    p.add_argument("--gamma-softmax", action="store_true",
                   help="normalize the post gate with a softmax instead of sigmoids")
    p.add_argument("--lambda", dest="stop_weight", type=float, default=1.0,
                   metavar="WEIGHT",
                   help="weight of the stop-prediction loss term (default: %(default)s)")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("generate",
                       help="greedy-decode summaries with a trained model",
                       description="Decode summaries for each corpus instance "
                                   "into a JSONL file.")
    p.add_argument("--checkpoint", required=True, help="checkpoint JSON file")
    p.add_argument("--input", required=True, help="corpus JSONL to summarize")
    p.add_argument("--out", required=True, help="output JSONL file")
    p.add_argument("--trace", action="store_true",
                   help="include per-thread attention traces in the output")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("eval",
                       help="score generated summaries with ROUGE",
                       description="ROUGE-1/2/L report for generated vs "
                                   "reference summaries.")
    p.add_argument("--gen", required=True, help="generated summaries JSONL")
    p.add_argument("--ref", required=True, help="reference corpus JSONL")
    p.add_argument("--mode", choices=sorted(MODES), default="recall",
                   help="headline component (default: %(default)s)")
    p.add_argument("--budget", type=int, default=None,
                   help="token budget on each candidate (e.g. 150; default: none)")
    p.add_argument("--paired", action="store_true",
                   help="score summary k against reference k instead of "
                        "concatenations")
    p.add_argument("--out", default=None,
                   help="write the JSON report here instead of stdout")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("gradcheck",
                       help="verify gradients against finite differences",
                       description="Exhaustive central-difference check of a "
                                   "small model's gradients.")
    p.add_argument("--variant", choices=VARIANTS, default="hier2hier",
                   help="architecture variant (default: %(default)s)")
    p.add_argument("--dim", type=int, default=8,
                   help="hidden dimension (default: %(default)s)")
    p.add_argument("--seed", type=int, default=0,
                   help="RNG seed (default: %(default)s)")
    p.add_argument("--no-gamma", action="store_true",
                   help="disable the post-level gate attention")
    p.add_argument("--no-beta", action="store_true",
                   help="disable the word-level gate attention")
    p.add_argument("--gamma-softmax", action="store_true",
                   help="normalize the post gate with a softmax")
    p.set_defaults(func=_cmd_gradcheck)
    return parser


def _gate_overrides(ns) -> dict:
    overrides = {}
    if ns.no_gamma:
        overrides["gamma_enabled"] = False
    if ns.no_beta:
        overrides["beta_enabled"] = False
    if ns.gamma_softmax:
        overrides["gamma_mode"] = "softmax"
    return overrides


def _cmd_synth(ns) -> int:
    preset = PRESETS[ns.preset]
    if ns.ordering is not None:
        preset = replace(preset, ordering=ns.ordering)
    docs, skipped = read_docs_jsonl(ns.inp)
    if skipped:
        _progress(f"skipped {skipped} malformed doc records")
    stats = synthesize_corpus(docs, preset, ns.seed, ns.out,
                              max_instances=ns.max_instances)
    _progress(f"wrote {stats['instances']} to {ns.out}")
    return 0


def _cmd_vocab(ns) -> int:
    vocab = build_vocab(load_corpus(ns.corpus), ns.max_size)
    Path(ns.out).parent.mkdir(parents=True, exist_ok=True)
    vocab.save(ns.out)
    _progress(f"wrote {len(vocab)} tokens to {ns.out}")
    return 0


def _train_corpus_path(arg: str) -> Path:
    path = Path(arg)
    return path / "train.jsonl" if path.is_dir() else path


def _cmd_train(ns) -> int:
    instances = load_corpus(_train_corpus_path(ns.corpus))
    vocab = Vocab.load(ns.vocab)
    limits = fit_limits(instances)
    config = ModelConfig.for_variant(
        ns.variant, vocab_size=len(vocab), d=ns.dim,
        word_limit=limits.word_limit, summary_limit=limits.summary_limit,
        post_cap=limits.post_cap, thread_cap=limits.thread_cap,
        flat_source_limit=limits.flat_source_limit,
        stop_weight=ns.stop_weight, **_gate_overrides(ns))
    model = Summarizer.init(config, seed=ns.seed)
    _progress(f"{ns.variant}: {model.param_count()} parameters, "
              f"{len(instances)} instances")
    encoded = encode_corpus(instances, vocab, limits)
    schedule = TrainSchedule(lr=ns.lr, batch_size=ns.batch, epochs=ns.epochs,
                             seed=ns.seed)
    result = train(model, encoded, schedule, out_dir=ns.out, vocab=vocab)
    save_checkpoint(Path(ns.out) / "checkpoint-final.json", model, vocab,
                    meta={"epochs": ns.epochs, "step": result.steps})
    _progress(f"{result.steps} steps in {result.seconds:.1f}s; "
              f"final loss {result.final.total:.4f} "
              f"(nll/token {result.final.nll_word:.4f})")
    return 0


def _cmd_generate(ns) -> int:
    bundle = load_checkpoint(ns.checkpoint)
    instances = load_corpus(ns.input)
    results = generate_summaries(bundle.model, instances, bundle.vocab,
                                 collect_maps=ns.trace)
    out = Path(ns.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        for res in results:
            record = {"summaries": res.texts(bundle.vocab)}
            if ns.trace:
                record["trace"] = res.trace(bundle.vocab)
            fh.write(_dump_json(record) + "\n")
    forced = sum(r.forced_stop for r in results)
    _progress(f"decoded {len(results)} instances to {ns.out}"
              + (f" ({forced} hit the thread cap)" if forced else ""))
    return 0


def _read_summaries(path) -> list[list[str]]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(list(json.loads(line)["summaries"]))
    return out


def _cmd_eval(ns) -> int:
    report = evaluate_corpus(_read_summaries(ns.gen), _read_summaries(ns.ref),
                             mode=ns.mode, budget=ns.budget, paired=ns.paired)
    payload = {
        "mode": report.mode,
        "instances": report.instances,
        "scores": report.scores,
        "headline": report.headline(),
        "count_mismatches": report.count_mismatches,
        "per_instance": report.per_instance,
    }
    if ns.out:
        _write_json(ns.out, payload)
        _progress(f"wrote report to {ns.out}")
    else:
        print(_dump_json(payload))
    return 0


def _cmd_gradcheck(ns) -> int:
    config = check_config(ns.variant, d=ns.dim, **_gate_overrides(ns))
    report = finite_diff_gradcheck(config, seed=ns.seed)
    print(f"max relative error {report.max_rel_error:.6e} over "
          f"{report.param_count} parameters (worst: {report.worst_param})")
    ok = report.passed(GRADCHECK_TOLERANCE)
    print(f"{'PASS' if ok else 'FAIL'} (tolerance {GRADCHECK_TOLERANCE:g})")
    return 0 if ok else 1


def dispatch(argv=None) -> int:
    """Parse and run one command; returns the process exit code."""
    if argv is None:
        argv = sys.argv[1:]
    try:
        parser = _build_parser()
        ns = parser.parse_args(_merge_config(list(argv)))
        return ns.func(ns)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except SystemExit as exc:      # argparse --help
        code = exc.code or 0
        return code if isinstance(code, int) else 1
    except (ThreadsumError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc()
        return 2


def main() -> int:
    return dispatch()


if __name__ == "__main__":
    sys.exit(main())
