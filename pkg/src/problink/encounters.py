"""Encounter-log ingest and the derived vocabularies and count indexes.

The encounter log is JSONL, one encounter per line: patient and encounter
ids, a day-resolution date, facility, care setting, a set of diagnosis codes,
typed orders (each optionally carrying an explicitly linked diagnosis), and an
optional provider specialty.  The store is read-only after ingest; everything
downstream (features, importance scores, skip-gram corpora) reads from its
indexes.
"""

from __future__ import annotations

import json
import warnings
from collections import Counter, defaultdict
from dataclasses import dataclass
from datetime import date
from enum import Enum
from pathlib import Path

from .kb import Code, KBError, RelationKind


class IngestError(KBError):
    """Raised for malformed or inconsistent encounter data."""


class Setting(str, Enum):
    INPATIENT = "inpatient"
    OUTPATIENT = "outpatient"
    ED = "ed"


@dataclass(frozen=True)
class Order:
    kind: RelationKind
    code: Code
    linked_diagnosis: Code | None = None

    def __post_init__(self):
        if self.linked_diagnosis is not None and not self.linked_diagnosis.is_diagnosis:
            raise IngestError(
                f"order {self.code.token}: linked diagnosis "
                f"{self.linked_diagnosis.token} is not from a diagnosis system"
            )


@dataclass(frozen=True)
class EncounterRecord:
    patient_id: str
    encounter_id: str
    date: date
    facility_id: str
    setting: Setting
    diagnoses: frozenset
    orders: tuple
    provider_specialty: str | None = None

    def order_codes(self) -> set:
        return {o.code for o in self.orders}


class EncounterStore:
    """Validated, indexed view over a list of encounter records.

    With ``strict_links`` (the default) an order's linked diagnosis must also
    appear in its encounter's diagnosis set; this is what makes the explicit
    co-occurrence a subset of the same-encounter one.  Set it False to
    downgrade the check to a warning for data that violates it.
    """

    def __init__(self, records, strict_links: bool = True):
        self.encounters = tuple(records)
        seen_ids = set()
        self.code_kind: dict = {}
        self.code_occurrences: Counter = Counter()
        self.diagnosis_occurrences: Counter = Counter()
        self.code_patients: dict = defaultdict(set)
        self.diagnosis_patients: dict = defaultdict(set)
        by_patient = defaultdict(list)

        for rec in self.encounters:
            if rec.encounter_id in seen_ids:
                raise IngestError(f"duplicate encounter_id {rec.encounter_id!r}")
            seen_ids.add(rec.encounter_id)
            by_patient[rec.patient_id].append(rec)
            for dx in rec.diagnoses:
                self.diagnosis_occurrences[dx] += 1
                self.diagnosis_patients[dx].add(rec.patient_id)
            for order in rec.orders:
                known = self.code_kind.get(order.code)
                if known is not None and known != order.kind:
                    raise IngestError(
                        f"code {order.code.token} appears as both "
                        f"{known.value} and {order.kind.value}"
                    )
                self.code_kind[order.code] = order.kind
                self.code_occurrences[order.code] += 1
                self.code_patients[order.code].add(rec.patient_id)
                if order.linked_diagnosis is not None and (
                    order.linked_diagnosis not in rec.diagnoses
                ):
                    msg = (
                        f"encounter {rec.encounter_id}: linked diagnosis "
                        f"{order.linked_diagnosis.token} not in the encounter's "
                        f"diagnosis set"
                    )
                    if strict_links:
                        raise IngestError(msg)
                    warnings.warn(msg)

        self.by_patient = {
            pid: tuple(sorted(recs, key=lambda r: (r.date, r.encounter_id)))
            for pid, recs in by_patient.items()
        }

    def __len__(self) -> int:
        return len(self.encounters)

    @property
    def patients(self):
        return self.by_patient.keys()

    def patient_count(self, code: Code) -> int:
        """Distinct patients with the code as an order (falls back to diagnosis use)."""
        if code in self.code_patients:
            return len(self.code_patients[code])
        return len(self.diagnosis_patients.get(code, ()))

    def problem_patient_count(self, problem) -> int:
        pats = set()
        for dx in problem.definition:
            pats |= self.diagnosis_patients.get(dx, set())
        return len(pats)


def _parse_encounter(obj: dict, lineno: int) -> EncounterRecord:
    where = f"line {lineno}"
    try:
        diagnoses = frozenset(Code.from_json(c) for c in obj.get("diagnoses", []))
        for dx in diagnoses:
            if not dx.is_diagnosis:
                raise IngestError(f"{dx.token} is not from a diagnosis system")
        orders = []
        for o in obj.get("orders", []):
            linked = o.get("linked_diagnosis")
            orders.append(
                Order(
                    kind=RelationKind(o["kind"]),
                    code=Code.from_json(o["code"]),
                    linked_diagnosis=None if linked is None else Code.from_json(linked),
                )
            )
        return EncounterRecord(
            patient_id=str(obj["patient_id"]),
            encounter_id=str(obj["encounter_id"]),
            date=date.fromisoformat(obj["date"]),
            facility_id=str(obj["facility_id"]),
            setting=Setting(obj["setting"]),
            diagnoses=diagnoses,
            orders=tuple(orders),
            provider_specialty=obj.get("provider_specialty"),
        )
    except (KeyError, ValueError, KBError, IngestError) as exc:
        raise IngestError(f"{where}: {exc}") from exc


def ingest(path, strict_links: bool = True) -> EncounterStore:
    """Read an encounter JSONL file into a validated store."""
    records = []
    with open(Path(path)) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise IngestError(f"line {lineno}: {exc.msg}") from exc
            records.append(_parse_encounter(obj, lineno))
    return EncounterStore(records, strict_links=strict_links)


@dataclass(frozen=True)
class Vocabulary:
    """Per-kind target code sets (frequency-thresholded) plus all diagnosis codes."""

    by_kind: dict
    diagnoses: frozenset
    min_count: int

    def kind_of(self, code: Code) -> RelationKind | None:
        for kind, codes in self.by_kind.items():
            if code in codes:
                return kind
        return None

    def __contains__(self, code: Code) -> bool:
        return self.kind_of(code) is not None or code in self.diagnoses

    @property
    def all_targets(self) -> frozenset:
        out = frozenset()
        for codes in self.by_kind.values():
            out |= codes
        return out


def build_vocabulary(store: EncounterStore, min_count: int = 5) -> Vocabulary:
    """Codes whose total order count reaches ``min_count``, grouped by kind."""
    if min_count < 0:
        raise IngestError(f"min_count must be >= 0, got {min_count}")
    by_kind = {kind: set() for kind in RelationKind}
    for code, count in store.code_occurrences.items():
        if count >= min_count:
            by_kind[store.code_kind[code]].add(code)
    return Vocabulary(
        by_kind={k: frozenset(v) for k, v in by_kind.items()},
        diagnoses=frozenset(store.diagnosis_occurrences),
        min_count=min_count,
    )
