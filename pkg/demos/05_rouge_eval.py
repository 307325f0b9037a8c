"""Overlap metrics on worked examples, then a corpus-level report.

Shows the three scores (unigram, bigram, subsequence), the clipping rule for
repeated words, and how multi-summary instances are scored by concatenation
versus index-paired.
"""

from threadsum.rouge import evaluate_corpus, rouge_l, rouge_n, score_pair

# --- single pairs ------------------------------------------------------------
cand, ref = "the cat sat".split(), "the cat ate".split()
r1 = rouge_n(cand, ref, 1)
print(f"'the cat sat' vs 'the cat ate': unigram recall {r1.recall:.3f} "
      f"(2 of 3 reference words)")

clipped = rouge_n("a a a".split(), "a b".split(), 1)
print(f"'a a a' vs 'a b': recall {clipped.recall:.3f}, precision "
      f"{clipped.precision:.3f} — the repeated 'a' only counts once")

lcs = rouge_l("a c b".split(), "a b c".split())
print(f"'a c b' vs 'a b c': subsequence recall {lcs.recall:.3f} "
      f"(LCS length 2)")

print("\nall three metrics for one pair:")
for name, comp in score_pair("the quick brown fox".split(),
                             "the very quick fox".split()).items():
    print(f"  {name}: recall {comp.recall:.3f}, precision {comp.precision:.3f},"
          f" f1 {comp.f1:.3f}")

# --- corpus level ------------------------------------------------------------
generated = [
    ["tea status update", "cat door saga"],
    ["weather report"],
]
references = [
    ["tea status", "cat door saga"],
    ["weather report today"],
]
report = evaluate_corpus(generated, references, mode="recall")
print(f"\ncorpus of {report.instances} instances, headline (recall):",
      {k: round(v, 3) for k, v in report.headline().items()})
print("per-instance unigram recall:",
      [round(s["rouge_1"]["recall"], 3) for s in report.per_instance])

paired = evaluate_corpus(generated, references, mode="f1", paired=True)
print("paired mode headline (f1):",
      {k: round(v, 3) for k, v in paired.headline().items()})

budgeted = evaluate_corpus(generated, references, mode="recall", budget=2)
print("with a 2-token candidate budget:",
      {k: round(v, 3) for k, v in budgeted.headline().items()})
