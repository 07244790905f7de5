"""
Planting a synthetic encounter corpus
=====================================

Every other demo needs data, so this one starts at the source: generate a
corpus with known problem -> order structure planted in it, ingest it back,
and look at what the store and vocabulary see.
"""

import json
import tempfile
from pathlib import Path

from problink import PlantSpec, build_vocabulary, generate, ingest, load_kb

out = Path(tempfile.mkdtemp(prefix="problink_demo_"))
print(f"writing to {out}\n")

# Ten problems, each owning a contiguous block of medications, procedures,
# and labs.  Orders inside a problem's block appear in 90% of its encounters;
# everything else leaks in 5% of the time as noise.
spec = PlantSpec(
    n_problems=10,
    n_targets_per_kind=30,
    n_patients=120,
    p_in=0.9,
    p_out=0.05,
    n_negatives_per_kind=10,
    seed=7,
)
enc_path, kb_path, truth_path = generate(spec, out)

# The generator writes three files: an encounter log, an annotated knowledge
# base, and the planted ground truth the KB was sampled from.
for path in (enc_path, kb_path, truth_path):
    print(f"{path.name:18} {path.stat().st_size:8,} bytes")

# One encounter, verbatim: a patient visit with one diagnosis and the orders
# placed during it.  Some orders carry an explicit diagnosis link.
first = json.loads(enc_path.read_text().splitlines()[0])
print("\nfirst encounter record:")
print(json.dumps(first, indent=2)[:600], "...")

# Ingest validates every record (dates, code systems, link consistency) and
# builds the indexes everything downstream reads.
store = ingest(enc_path)
print(f"\ningested {len(store.encounters)} encounters"
      f" from {len(store.patients)} patients")
print(f"distinct codes seen: {len(store.code_occurrences)}")

# The vocabulary keeps codes seen at least min_count times, split by kind.
vocab = build_vocabulary(store, min_count=5)
for kind, codes in sorted(vocab.by_kind.items(), key=lambda kv: kv[0].value):
    print(f"  {kind.value:10} {len(codes):3} codes in vocabulary")

# The KB holds the expert-style annotations the trainer will learn from:
# planted targets as positives, sampled non-planted ones as negatives.
kb = load_kb(kb_path)
positives = sum(1 for t in kb.triplets if int(t.label) == 1)
print(f"\nknowledge base: {len(kb.problems)} problems, "
      f"{len(kb.triplets)} triplets ({positives} positive)")

# Ground truth for the first problem -- the block the generator planted.
truth = json.loads(truth_path.read_text())
print("\nplanted truth for P000:")
for kind, tokens in truth["P000"].items():
    print(f"  {kind:10} {tokens}")
