"""Watch the gating attention pick threads apart.

Trains a small model with the softmax post gate, then decodes a pair of
documents that never appeared together during training — so the model has to
read the source rather than recite a memorized instance. Per generated
summary we print the post gates (gamma), which shift toward the posts of the
thread being summarized as the thread decoder steps forward, and where the
strongest combined token gates (beta_hat) land.
"""

import numpy as np

from threadsum.corpus import InterleavePreset, SourceDoc, interleave_window, make_rng
from threadsum.model import ModelConfig, Summarizer
from threadsum.textproc import build_vocab, encode_instance
from threadsum.training import TrainSchedule, encode_corpus, fit_limits, train

fillers = ["red", "blue", "green", "grey"]
rng = np.random.default_rng(9)
docs = []
for i in range(12):
    kw = f"topic{i:02d}"
    sents = tuple(f"{kw} {rng.choice(fillers)} {rng.choice(fillers)}"
                  for _ in range(3))
    docs.append(SourceDoc(sents, f"{kw} brief"))
preset = InterleavePreset(2, 2, 2, 3)
# random doc pairs, so the only way to name the right topics is to read the
# source; the (0, 6) combination is held out for the demo below
pair_rng = np.random.default_rng(5)
insts = []
while len(insts) < 96:
    a, b = (int(v) for v in pair_rng.choice(12, size=2, replace=False))
    if {a, b} == {0, 6}:
        continue
    insts.append(interleave_window((docs[a], docs[b]), preset,
                                   make_rng(77, len(insts))))
unseen = interleave_window((docs[0], docs[6]), preset, make_rng(99, 0))

vocab = build_vocab(insts, 60)
limits = fit_limits(insts, word_limit=6, summary_limit=4)
config = ModelConfig.for_variant(
    "hier2hier", vocab_size=len(vocab), d=24, word_limit=6, summary_limit=4,
    post_cap=limits.post_cap, thread_cap=limits.thread_cap,
    flat_source_limit=60, gamma_mode="softmax")
model = Summarizer.init(config, seed=1)
encoded = encode_corpus(insts, vocab, limits)
result = train(model, encoded,
               TrainSchedule(lr=3e-3, batch_size=16, epochs=400, seed=1,
                             target_nll=0.02, max_steps=3000))
print(f"trained for {result.steps} steps, "
      f"word NLL {result.final.nll_word:.3f}\n")

print("unseen instance (thread label on the left):")
for tid, post in zip(unseen.thread_ids, unseen.posts):
    print(f"  [{tid}] {post}")
print("references:", unseen.summaries)

result = model.generate(
    encode_instance(unseen, vocab, limits, source_only=True),
    collect_maps=True)
trace = result.trace(vocab)
print("\ngenerated:", trace["summaries"])
print("stop probabilities per thread step:", trace.get("stop_probs"))
order = unseen.first_occurrence_order()
for k, entry in enumerate(trace["threads"]):
    tid = order[min(k, len(order) - 1)]
    gates = " ".join(f"{g:5.2f}" for g in entry["gamma"])
    marks = " ".join("  ^  " if t == tid else "  .  "
                     for t in unseen.thread_ids)
    own = sum(unseen.thread_ids[p] == tid
              for p, _w in entry["beta_hat_top"][:6])
    print(f"\nsummary {k}: {' '.join(entry['words'])}")
    print(f"  post gates gamma: {gates}")
    print(f"  this thread's posts: {marks}")
    print(f"  {own} of the 6 strongest beta_hat cells sit in this "
          f"thread's posts")
