"""
Co-occurrence features and the round-1 candidate queue
======================================================

Before any model exists, annotation has to start somewhere.  This demo walks
the pre-model machinery: the four nested co-occurrence definitions, the
importance score that ranks a problem's likely orders, and the candidate
list the first annotation round reads from.
"""

import tempfile
from pathlib import Path

from problink import (
    PlantSpec,
    RelationKind,
    build_vocabulary,
    cooccurrence,
    generate,
    importance_score,
    ingest,
    load_kb,
)
from problink.features import COOC_CHAIN, build_features, candidate_list

out = Path(tempfile.mkdtemp(prefix="problink_demo_"))
spec = PlantSpec(
    n_problems=10,
    n_targets_per_kind=30,
    n_patients=120,
    n_negatives_per_kind=10,
    seed=7,
)
enc_path, kb_path, truth_path = generate(spec, out)
store = ingest(enc_path)
kb = load_kb(kb_path)
vocab = build_vocabulary(store, min_count=5)
problems = list(kb.problems.values())

# ---------------------------------------------------------------- the chain
# Four ways to say "this order happened near this problem", from strictest
# to loosest.  Each wider definition can only add patients, so for any
# (problem, target) pair the four values are non-decreasing.
p0 = kb.problems["P000"]
planted_med = next(iter(sorted(
    c for c in vocab.by_kind[RelationKind.MEDICATION] if c.id == "M000"
)))
print(f"co-occurrence of ({p0.problem_id}, {planted_med.token}) under each definition:")
for definition in COOC_CHAIN:
    value = cooccurrence(store, [p0], definition).get((p0.problem_id, planted_med), 0.0)
    print(f"  {definition.value:18} {value:.3f}")

# ------------------------------------------------------------- importance
# Smoothed log-ratio of how much likelier a target is in encounters carrying
# the problem's diagnosis than in encounters without it.  Planted targets
# should float to the top.
truth_meds = {"RXNORM:M000", "RXNORM:M001", "RXNORM:M002"}
scored = sorted(
    (
        (importance_score(store, p0, c), c.token)
        for c in vocab.by_kind[RelationKind.MEDICATION]
    ),
    reverse=True,
)
print("\ntop 6 medications for P000 by importance (planted marked *):")
for value, token in scored[:6]:
    mark = "*" if token in truth_meds else " "
    print(f"  {mark} {token:12} {value:+.3f}")

# --------------------------------------------------------------- round 1
# The annotation queue is just the top-n of that ranking, minus anything
# already annotated.  Here the KB already covers the planted positives and
# sampled negatives, so excluding them leaves the unlabeled middle.
queue = candidate_list(
    lambda problem, c: importance_score(store, problem, c),
    p0,
    RelationKind.MEDICATION,
    vocab,
    top_n=5,
)
print("\nround-1 queue (top 5, nothing excluded):")
print(" ", [c.token for c in queue])

annotated = {t.target for t in kb.triplets if t.problem_id == "P000"}
queue2 = candidate_list(
    lambda problem, c: importance_score(store, problem, c),
    p0,
    RelationKind.MEDICATION,
    vocab,
    top_n=5,
    exclude=annotated,
)
print("round-1 queue with annotated pairs excluded:")
print(" ", [c.token for c in queue2])

# ---------------------------------------------------------- feature cache
# build_features rolls all of it (chain values, patient counts, specialty
# profiles) into one persistent FeatureSet the model trains against.
features = build_features(store, problems, vocab)
pf = features.pair("P000", planted_med)
print(f"\npair features for (P000, {planted_med.token}):")
print(f"  explicit={pf.explicit:.3f}  same_encounter={pf.same_encounter:.3f}")
print(f"  two_week_same_facility={pf.two_week_same_facility:.3f}"
      f"  two_week_any_facility={pf.two_week_any_facility:.3f}")
print(f"  problem_patients={pf.problem_patients}  target_patients={pf.target_patients}")

features_dir = out / "features"
features.save(features_dir)
print(f"\nfeature cache saved under {features_dir.name}/:",
      sorted(p.name for p in features_dir.iterdir()))
