"""Shared builders for the test suite.

Everything here constructs small, fully hand-specified fixtures so tests can
state expected values exactly.  Oracles (independent re-implementations used
to check the library) live in the test modules that use them, next to the
assertions they back.
"""

from __future__ import annotations

import datetime as dt
import json

import numpy as np

from problink import (
    Code,
    EncounterRecord,
    EncounterStore,
    KnowledgeBase,
    Label,
    Order,
    Problem,
    RelationKind,
    Setting,
    Triplet,
)
from problink.embeddings import EmbeddingSource, EmbeddingTable
from problink.features import FeatureSet, PairFeatures


def code(token: str) -> Code:
    return Code.from_token(token)


def day(iso: str) -> dt.date:
    return dt.date.fromisoformat(iso)


def enc(
    patient: str,
    encounter: str,
    date: str,
    dx=(),
    orders=(),
    facility: str = "F1",
    setting: Setting = Setting.OUTPATIENT,
    specialty: str | None = None,
) -> EncounterRecord:
    """Encounter with codes given as tokens; orders as (kind, token[, linked])."""
    built = []
    for item in orders:
        kind, tok = item[0], item[1]
        linked = code(item[2]) if len(item) > 2 and item[2] else None
        built.append(Order(kind=kind, code=code(tok), linked_diagnosis=linked))
    return EncounterRecord(
        patient_id=patient,
        encounter_id=encounter,
        date=day(date),
        facility_id=facility,
        setting=setting,
        diagnoses=frozenset(code(t) for t in dx),
        orders=tuple(built),
        provider_specialty=specialty,
    )


def make_store(records, strict_links: bool = True) -> EncounterStore:
    return EncounterStore(records, strict_links=strict_links)


def problem(pid: str, *dx_tokens: str, name: str | None = None) -> Problem:
    return Problem(
        problem_id=pid,
        name=name or pid.replace("_", " "),
        definition=frozenset(code(t) for t in dx_tokens),
    )


def triplet(
    pid: str,
    kind: RelationKind,
    target_token: str,
    label: int,
    round: int = 1,
) -> Triplet:
    return Triplet(
        problem_id=pid,
        relation=kind,
        target=code(target_token),
        label=Label(label),
        round=round,
    )


def make_kb(problems, triplets) -> KnowledgeBase:
    return KnowledgeBase(
        problems={p.problem_id: p for p in problems}, triplets=tuple(triplets)
    )


def random_table(tokens, dim: int, seed: int) -> EmbeddingTable:
    """Uniform [-0.5/dim, +0.5/dim) vectors for each token."""
    rng = np.random.default_rng(seed)
    return EmbeddingTable(
        dim=dim,
        vectors={t: rng.uniform(-0.5 / dim, 0.5 / dim, dim) for t in sorted(tokens)},
        source_tag=EmbeddingSource.SITE_SPECIFIC,
    )


def store_tokens(store: EncounterStore):
    return {
        c.token
        for rec in store.encounters
        for c in rec.diagnoses | rec.order_codes()
    }


def toy_features(problems, targets, spec_dim: int = 3, seed: int = 0) -> FeatureSet:
    """A FeatureSet with random but fixed per-pair values for every pair."""
    rng = np.random.default_rng(seed)
    cooc = {}
    from problink.features import COOC_CHAIN

    for definition in COOC_CHAIN:
        table = {}
        for p in problems:
            for t in targets:
                table[(p.problem_id, t)] = float(rng.uniform(0.0, 1.0))
        cooc[definition] = table
    problem_patients = {p.problem_id: int(rng.integers(1, 60)) for p in problems}
    target_patients = {t: int(rng.integers(1, 60)) for t in targets}
    specialty_vocab = tuple(f"spec{i}" for i in range(spec_dim))
    spec_problems = {
        p.problem_id: rng.uniform(0.0, 1.0, spec_dim) for p in problems
    }
    spec_targets = {t: rng.uniform(0.0, 1.0, spec_dim) for t in targets}
    return FeatureSet(
        cooc=cooc,
        problem_patients=problem_patients,
        target_patients=target_patients,
        specialty_vocab=specialty_vocab,
        spec_problems=spec_problems,
        spec_targets=spec_targets,
    )


def write_jsonl(path, rows) -> None:
    with open(path, "w") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")


def encounter_row(rec: EncounterRecord) -> dict:
    row = {
        "patient_id": rec.patient_id,
        "encounter_id": rec.encounter_id,
        "date": rec.date.isoformat(),
        "facility_id": rec.facility_id,
        "setting": rec.setting.value,
        "diagnoses": [c.to_json() for c in sorted(rec.diagnoses)],
        "orders": [
            {
                "kind": o.kind.value,
                "code": o.code.to_json(),
                **(
                    {"linked_diagnosis": o.linked_diagnosis.to_json()}
                    if o.linked_diagnosis
                    else {}
                ),
            }
            for o in rec.orders
        ],
    }
    if rec.provider_specialty is not None:
        row["provider_specialty"] = rec.provider_specialty
    return row


def write_encounters(path, records) -> None:
    write_jsonl(path, [encounter_row(r) for r in records])
