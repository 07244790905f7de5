"""
Rank metrics, tie policies, frequency bins, and annotator agreement
===================================================================

Evaluation ranks each positive against its annotated negatives.  The
interesting cases are ties -- a model that scores many candidates equally
should not get credit for alphabetical luck -- and frequency effects: does
the scorer only work for codes it has seen often?
"""

import math
import tempfile
from pathlib import Path

from problink import (
    PlantSpec,
    TiePolicy,
    build_vocabulary,
    cohen_kappa,
    evaluate,
    frequency_bin_report,
    generate,
    ingest,
    load_kb,
    per_problem_report,
    rank_one,
)
from problink.features import importance_score

# ------------------------------------------------------------ tie policies
# One positive, nine negatives; the scorer puts four negatives at 1 (tied
# with a relevant positive) and five at 0.  STRICT charges the positive the
# bottom of its tie group; MEDIAN charges the middle.
neg_scores = [1, 1, 1, 1, 0, 0, 0, 0, 0]
print("one positive vs nine negatives, four ties at the top:")
for policy in TiePolicy:
    relevant = rank_one(1.0, neg_scores, policy)
    irrelevant = rank_one(0.0, neg_scores, policy)
    print(f"  {policy.value:7} rank if positive scores 1: {relevant:5}   if 0: {irrelevant:5}")

# A constant scorer is the degenerate case: STRICT sends every rank to the
# bottom, MEDIAN to the middle -- which is what a random ordering would
# average, so MEDIAN is the fair charge for an uninformative model.
n = 9
print(f"  constant scorer, {n} negatives:"
      f" strict {rank_one(0.5, [0.5] * n, TiePolicy.STRICT):.1f},"
      f" median {rank_one(0.5, [0.5] * n, TiePolicy.MEDIAN):.1f}")

# ------------------------------------------------------- corpus evaluation
# A deliberately noisy corpus: planted orders only show up in 55% of their
# problem's encounters and unrelated orders leak in a third of the time, so
# the pre-model signal has real failure cases to break down.
out = Path(tempfile.mkdtemp(prefix="problink_demo_"))
spec = PlantSpec(
    n_problems=10,
    n_targets_per_kind=30,
    n_patients=50,
    p_in=0.55,
    p_out=0.35,
    n_negatives_per_kind=10,
    seed=7,
)
enc_path, kb_path, _ = generate(spec, out)
store = ingest(enc_path)
kb = load_kb(kb_path)
vocab = build_vocabulary(store, min_count=1)

# Score triplets with the pre-model importance signal and evaluate it as if
# it were a model: rank every positive against its annotated negatives.
scorer = lambda pid, relation, target: importance_score(store, kb.problems[pid], target)
report = evaluate(scorer, kb.triplets, kb, TiePolicy.MEDIAN)
print(f"\nimportance-score baseline over the whole KB:"
      f" MR {report.mr:.2f}  MRR {report.mrr:.3f}"
      f"  hits@1 {report.hits(1):.3f}  hits@5 {report.hits(5):.3f}")

# Per-(problem, kind) hits@5 breakdown: where is the signal weakest?
cells = per_problem_report(report, kb)
worst = sorted(cells.items(), key=lambda kv: kv[1])[:3]
print("\nweakest (problem, kind) cells by hits@5:")
for (pid, kind), h5 in worst:
    print(f"  {pid} / {kind.value:10} hits@5 {h5:.3f}")

# Frequency bins: metrics per log-spaced band of how often the target code
# occurs in the encounter log.  A scorer that only works for frequent codes
# shows a steep falloff in the rare bins.
print("\nmetrics by target-frequency bin (rarest first):")
for b in frequency_bin_report(report, store):
    span = f"{math.exp(b.log_lo):6.1f}..{math.exp(b.log_hi):6.1f}"
    mrr = "   --" if b.n == 0 else f"{b.mrr:.3f}"
    print(f"  occurrence counts {span}:  n={b.n:3}  mrr {mrr}")

# ---------------------------------------------------------- agreement
# Two annotators label the same twelve pairs; kappa corrects raw agreement
# for the agreement their label rates would produce by chance.
ann_a = [1, 1, 0, 0, 1, 0, 1, 0, 0, 0, 1, 1]
ann_b = [1, 0, 0, 0, 1, 0, 1, 1, 0, 0, 1, 1]
raw = sum(x == y for x, y in zip(ann_a, ann_b)) / len(ann_a)
print(f"\nannotator agreement: raw {raw:.3f},"
      f" kappa {cohen_kappa(ann_a, ann_b):.3f}")
print(f"identical annotators: kappa {cohen_kappa(ann_a, ann_a):.1f}")
