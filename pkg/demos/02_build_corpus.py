"""Build a synthetic interleaved corpus and look at what comes out.

Documents become threads: each window of documents is interleaved into one
instance whose posts mix the documents' leading sentences, with the document
titles as the reference summaries.
"""

import tempfile
from pathlib import Path

from threadsum.corpus import (PRESETS, CorpusInstance, SourceDoc,
                              density_order, interleave_window, load_corpus,
                              make_rng, synthesize_corpus)

# --- three tiny documents ---------------------------------------------------
docs = [
    SourceDoc(("the kettle is on", "now it whistles", "tea is ready",
               "the pot is empty", "someone refills it"), "tea status"),
    SourceDoc(("the cat wants in", "the cat wants out", "the door stays busy",
               "the cat naps at last", "nobody saw it leave"), "cat door saga"),
    SourceDoc(("rain started at noon", "the gutters overflow",
               "boots by the door", "the sun returns", "puddles remain"),
              "weather report"),
]

# --- one window, interleaved by hand-seeded randomness ----------------------
preset = PRESETS["medium"]          # 2-3 threads, 2-5 posts each
inst = interleave_window(tuple(docs), preset, make_rng(42, 0))
print("one interleaved instance:")
for post, tid in zip(inst.posts, inst.thread_ids):
    print(f"  [thread {tid}] {post}")
print("summaries (first-appearance order):", inst.summaries)

# --- density ordering: summaries sorted by where threads concentrate --------
dense = density_order(inst)
print("\nsummaries after density ordering:", dense.summaries)

# A crafted layout where the orders differ: thread 0 opens the channel but
# its posts cluster late, while thread 1 wraps up early.
crafted = CorpusInstance(
    ["t0 opener", "t1 both", "t1 posts", "t0 burst", "t0 burst", "t0 burst"],
    [0, 1, 1, 0, 0, 0],
    ["thread zero digest", "thread one digest"], {})
print("\ncrafted layout", crafted.thread_ids,
      "-> density order puts the early-finishing thread first:")
print("  first-appearance:", crafted.summaries)
print("  density ordered: ", density_order(crafted).summaries)

# --- a full corpus on disk ---------------------------------------------------
many = [SourceDoc(tuple(f"doc {d} sentence {i} filler" for i in range(6)),
                  f"topic {d} digest") for d in range(20)]
with tempfile.TemporaryDirectory() as tmp:
    stats = synthesize_corpus(many, PRESETS["easy"], seed=7, out_dir=Path(tmp))
    print("\nsynthesize_corpus wrote:", sorted(p.name for p in Path(tmp).iterdir()))
    print("instances per split:", stats["instances"])
    first = load_corpus(Path(tmp) / "train.jsonl")[0]
    print("first training instance has", len(first.posts), "posts and",
          len(first.summaries), "summaries")
