"""
The annotation service: queues, event-sourced writes, retraining
================================================================

The loop that actually grows the knowledge base: an HTTP service hands
annotators ranked candidates, records their 0/1 judgments in an append-only
event log, recomputes agreement, and retrains the model in the background.
This demo drives the whole loop in-process with a test client.
"""

import json
import tempfile
import time
import warnings
from pathlib import Path

import numpy as np
from fastapi.testclient import TestClient

from problink import (
    PlantSpec,
    TrainConfig,
    build_vocabulary,
    generate,
    ingest,
    init_params,
    load_kb,
    save_model,
)
from problink.embeddings import EmbeddingSource, EmbeddingTable
from problink.features import build_features
from problink.service import ServiceState, create_app

# ----------------------------------------------------------- artifacts
# The service reads everything the pipeline produced: encounter log, KB,
# feature cache, and (optionally) a trained model for round-2 suggestions.
out = Path(tempfile.mkdtemp(prefix="problink_demo_"))
spec = PlantSpec(
    n_problems=6, n_targets_per_kind=20, n_patients=60,
    n_negatives_per_kind=4, seed=7,
)
enc_path, kb_path, _ = generate(spec, out / "data")
store = ingest(enc_path)
vocab = build_vocabulary(store, min_count=1)
kb = load_kb(kb_path)
features = build_features(store, kb.problems.values(), vocab)
features_dir = out / "features"
features.save(features_dir)

target_codes = set(vocab.all_targets) | {t.target for t in kb.triplets}
tokens = sorted({c.token for c in target_codes}
                | {c.token for p in kb.problems.values() for c in p.definition})
rng = np.random.default_rng(0)
table = EmbeddingTable(
    dim=24,
    vectors={t: rng.uniform(-0.5 / 24, 0.5 / 24, 24) for t in tokens},
    source_tag=EmbeddingSource.SITE_SPECIFIC,
)
params = init_params(kb.problems.values(), target_codes, table, features, seed=0)
model_path = out / "model.json"
save_model(params, TrainConfig(seed=0, max_epochs=20, patience=4), [], model_path)

events_path = out / "events.jsonl"
state = ServiceState(
    kb_path=kb_path,
    encounters_path=enc_path,
    features_dir=features_dir,
    events_path=events_path,
    model_path=model_path,
    min_count=1,
)
client = TestClient(create_app(state))

# -------------------------------------------------------------- browsing
obj = client.get("/problems").json()
print(f"service exposes {len(obj['problems'])} problems"
      f" (schema v{obj['schema_version']})")
print(f"guideline shown to annotators: \"{obj['guideline'][:70]}...\"\n")

queue = client.get(
    "/problems/P000/candidates", params={"kind": "medication", "round": 1}
).json()["candidates"]
print(f"round-1 medication queue for P000 ({len(queue)} items, by importance):")
for row in queue[:4]:
    print(f"  {row['token']:12} score {row['score']:+.3f}")

# ------------------------------------------------------------ annotating
# Two annotators work the same queue.  Each keystroke becomes one POST with
# an idempotency key; the service appends one event per accepted write.
for annotator in ("alice", "bob"):
    for i, row in enumerate(queue[:4]):
        label = 1 if i < 2 else 0  # both accept the top of the queue
        if annotator == "bob" and i == 3:
            label = 1 - label  # ... but bob disagrees on one pair
        resp = client.post("/annotations", json={
            "annotator_id": annotator,
            "problem_id": "P000",
            "relation": "medication",
            "target": row["target"],
            "label": label,
            "round": 1,
            "event_id": f"{annotator}-{row['token']}",
        })
        assert resp.status_code == 201

n_lines = len(events_path.read_text().splitlines())
print(f"\nevent log now holds {n_lines} events"
      f" ({events_path.stat().st_size} bytes, append-only JSONL)")

# Replaying a duplicate event id is a no-op -- the retry path after a
# network failure cannot double-count.
dup = client.post("/annotations", json={
    "annotator_id": "alice", "problem_id": "P000", "relation": "medication",
    "target": queue[0]["target"], "label": 1, "round": 1,
    "event_id": f"alice-{queue[0]['token']}",
})
print(f"duplicate event id -> status {dup.json()['status']},"
      f" log still {len(events_path.read_text().splitlines())} events")

# ------------------------------------------------------------- agreement
agreement = client.get("/agreement", params={"a": "alice", "b": "bob"}).json()
print(f"\nalice vs bob: kappa {agreement['kappa']:.3f}"
      f" over {agreement['n_shared']} shared pairs,"
      f" {len(agreement['conflicts'])} conflict(s)")
for c in agreement["conflicts"]:
    print(f"  conflict on {c['target']}: {c['labels']}")

# ------------------------------------------------------------- retraining
# POST /retrain answers 202 immediately and trains on a KB snapshot in a
# background thread; the finished model swaps in atomically.
with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    assert client.post("/retrain").status_code == 202
    while client.get("/status").json()["retrain"] == "running":
        time.sleep(0.05)
print(f"\nretrain finished: status {client.get('/status').json()['retrain']}")

queue2 = client.get(
    "/problems/P000/candidates", params={"kind": "medication", "round": 2}
).json()["candidates"]
print(f"round-2 queue (model-ranked, annotated pairs excluded): "
      f"{[row['token'] for row in queue2[:5]]} ...")

# ------------------------------------------------------------ crash replay
# Kill the service, start a fresh one over the same event log: the KB is
# reconstructed exactly and no annotation is lost.
reborn = ServiceState(
    kb_path=kb_path,
    encounters_path=enc_path,
    features_dir=features_dir,
    events_path=events_path,
    model_path=model_path,
    min_count=1,
)
from problink.kb import kb_to_json

assert kb_to_json(reborn.kb) == kb_to_json(state.kb)
listed = TestClient(create_app(reborn)).get("/annotations").json()["annotations"]
print(f"\nafter simulated crash: replayed {reborn.n_events} events,"
      f" KB identical, {len(listed)} annotations listed")
