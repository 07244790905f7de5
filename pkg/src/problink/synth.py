"""Deterministic synthetic encounter logs with planted problem-target blocks.

Each problem owns a disjoint block of targets per kind.  Every encounter is
attributed to one of its patient's assigned problems and carries that
problem's definition diagnosis; the problem's block targets are ordered with
probability ``p_in`` and everything else with ``p_out``, so block membership
is recoverable from co-occurrence alone and the knowledge-base labels agree
with the planted ground truth by construction.  Identical seeds produce
byte-identical output files.
"""

from __future__ import annotations

import datetime
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .kb import (
    Code,
    CodeSystem,
    KBError,
    KnowledgeBase,
    Label,
    Problem,
    RelationKind,
    RELATION_ORDER,
    Triplet,
    save_kb,
)

KIND_SYSTEM = {
    RelationKind.MEDICATION: CodeSystem.RXNORM,
    RelationKind.PROCEDURE: CodeSystem.CPT,
    RelationKind.LAB: CodeSystem.LOINC,
}
KIND_PREFIX = {
    RelationKind.MEDICATION: "M",
    RelationKind.PROCEDURE: "C",
    RelationKind.LAB: "L",
}


@dataclass(frozen=True)
class PlantSpec:
    n_problems: int = 20
    n_targets_per_kind: int = 60
    n_patients: int = 500
    p_in: float = 0.9
    p_out: float = 0.05
    seed: int = 0
    n_negatives_per_kind: int = 40
    explicit_link_fraction: float = 0.5
    n_facilities: int = 6
    home_facility_prob: float = 0.8
    min_encounters: int = 3
    max_encounters: int = 8
    n_specialties: int = 24
    specialty_fidelity: float = 0.7
    year: int = 2023

    def __post_init__(self):
        if not (0 < self.p_in <= 1):
            raise KBError(f"p_in must be in (0, 1], got {self.p_in}")
        if not (0 <= self.p_out < 1):
            raise KBError(f"p_out must be in [0, 1), got {self.p_out}")
        if self.p_in <= self.p_out:
            raise KBError(f"p_in ({self.p_in}) must exceed p_out ({self.p_out})")
        if self.n_problems < 1 or self.n_targets_per_kind < self.n_problems:
            raise KBError("need at least one target per problem per kind")


def _definition_code(i: int) -> Code:
    return Code(CodeSystem.ICD10, f"D{i:03d}")


def _target_code(kind: RelationKind, j: int) -> Code:
    return Code(KIND_SYSTEM[kind], f"{KIND_PREFIX[kind]}{j:03d}")


def planted_blocks(spec: PlantSpec) -> dict:
    """problem index -> kind -> tuple of that problem's relevant targets."""
    block = spec.n_targets_per_kind // spec.n_problems
    out = {}
    for i in range(spec.n_problems):
        out[i] = {
            kind: tuple(
                _target_code(kind, j) for j in range(i * block, (i + 1) * block)
            )
            for kind in RELATION_ORDER
        }
    return out


def _build_kb(spec: PlantSpec, blocks: dict, rng) -> KnowledgeBase:
    problems = {}
    triplets = []
    for i in range(spec.n_problems):
        pid = f"P{i:03d}"
        problems[pid] = Problem(
            problem_id=pid,
            name=f"problem-{i:03d}",
            definition=frozenset({_definition_code(i)}),
        )
        for kind in RELATION_ORDER:
            relevant = blocks[i][kind]
            for code in relevant:
                triplets.append(
                    Triplet(pid, kind, code, Label.POSITIVE, round=1)
                )
            others = [
                _target_code(kind, j)
                for j in range(spec.n_targets_per_kind)
                if _target_code(kind, j) not in relevant
            ]
            n_neg = min(spec.n_negatives_per_kind, len(others))
            picks = rng.choice(len(others), size=n_neg, replace=False)
            for idx in sorted(picks):
                triplets.append(
                    Triplet(pid, kind, others[int(idx)], Label.NEGATIVE, round=1)
                )
    return KnowledgeBase(problems=problems, triplets=tuple(triplets))


def _encounter_rows(spec: PlantSpec, blocks: dict, rng):
    all_targets = [
        _target_code(kind, j)
        for kind in RELATION_ORDER
        for j in range(spec.n_targets_per_kind)
    ]
    target_kind = {}
    target_owner = {}
    for kind in RELATION_ORDER:
        for j in range(spec.n_targets_per_kind):
            target_kind[_target_code(kind, j)] = kind
    for i, kinds in blocks.items():
        for kind, codes in kinds.items():
            for code in codes:
                target_owner[code] = i

    settings = ["outpatient", "inpatient", "ed"]
    base_date = datetime.date(spec.year, 1, 1)
    enc_counter = 0
    rows = []
    for pt in range(spec.n_patients):
        patient_id = f"pt{pt:04d}"
        n_assigned = 1 + int(rng.integers(0, 2))
        assigned = sorted(
            int(i) for i in rng.choice(spec.n_problems, size=n_assigned, replace=False)
        )
        home = int(rng.integers(0, spec.n_facilities))
        n_enc = int(rng.integers(spec.min_encounters, spec.max_encounters + 1))
        for _ in range(n_enc):
            p = assigned[int(rng.integers(0, len(assigned)))]
            date = base_date + datetime.timedelta(days=int(rng.integers(0, 365)))
            if rng.random() < spec.home_facility_prob:
                facility = home
            else:
                facility = int(rng.integers(0, spec.n_facilities))
            spec_idx = (
                p % spec.n_specialties
                if rng.random() < spec.specialty_fidelity
                else int(rng.integers(0, spec.n_specialties))
            )
            relevant = set()
            for kind in RELATION_ORDER:
                relevant.update(blocks[p][kind])
            draws = rng.random(len(all_targets))
            orders = []
            for code, u in zip(all_targets, draws):
                prob = spec.p_in if code in relevant else spec.p_out
                if u < prob:
                    order = {"kind": target_kind[code].value, "code": code.to_json()}
                    if code in relevant and rng.random() < spec.explicit_link_fraction:
                        order["linked_diagnosis"] = _definition_code(p).to_json()
                    orders.append(order)
            rows.append(
                {
                    "patient_id": patient_id,
                    "encounter_id": f"enc{enc_counter:06d}",
                    "date": date.isoformat(),
                    "facility_id": f"F{facility}",
                    "setting": settings[int(rng.integers(0, len(settings)))],
                    "diagnoses": [_definition_code(p).to_json()],
                    "orders": orders,
                    "provider_specialty": f"spec-{spec_idx:02d}",
                }
            )
            enc_counter += 1
    return rows


def generate(spec: PlantSpec, outdir) -> tuple:
    """Write encounters.jsonl, kb.json, and truth.json under outdir.

    Returns the three paths.  The truth file maps each problem id to its
    planted relevant targets per kind; every KB positive is planted and
    every KB negative is not.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(spec.seed)
    blocks = planted_blocks(spec)

    kb = _build_kb(spec, blocks, rng)
    rows = _encounter_rows(spec, blocks, rng)

    enc_path = outdir / "encounters.jsonl"
    with open(enc_path, "w") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")

    kb_path = outdir / "kb.json"
    save_kb(kb, kb_path)

    truth = {
        f"P{i:03d}": {
            kind.value: sorted(code.token for code in blocks[i][kind])
            for kind in RELATION_ORDER
        }
        for i in range(spec.n_problems)
    }
    truth_path = outdir / "truth.json"
    with open(truth_path, "w") as fh:
        json.dump(truth, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return enc_path, kb_path, truth_path
