"""Domain types and storage for the annotated problem knowledge base.

A knowledge base maps named medical problems (each defined by a set of
diagnosis codes) to annotated (problem, relation, target) triplets, where the
relation says whether the target is a medication, procedure, or lab code and
the label says whether an expert judged it relevant.  The KB is an immutable
value: loading validates everything up front, and annotation returns a new KB
plus an audit entry rather than mutating in place.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from enum import Enum, IntEnum
from pathlib import Path

import numpy as np


class KBError(ValueError):
    """Raised for any knowledge-base format or invariant violation."""


class CodeSystem(str, Enum):
    RXNORM = "RXNORM"
    LOINC = "LOINC"
    CPT = "CPT"
    ICD9 = "ICD9"
    ICD10 = "ICD10"
    SNOMED = "SNOMED"
    INTERNAL = "INTERNAL"


#: systems that may appear in a problem definition or an encounter diagnosis list
DIAGNOSIS_SYSTEMS = frozenset(
    {CodeSystem.ICD9, CodeSystem.ICD10, CodeSystem.SNOMED, CodeSystem.INTERNAL}
)


@dataclass(frozen=True, order=True)
class Code:
    """A coded concept; identity is the (system, id) pair after normalization."""

    system: CodeSystem
    id: str

    def __post_init__(self):
        norm = self.id.strip().upper()
        if not norm:
            raise KBError(f"empty code id for system {self.system.value}")
        object.__setattr__(self, "id", norm)
        if not isinstance(self.system, CodeSystem):
            object.__setattr__(self, "system", CodeSystem(self.system))

    @property
    def token(self) -> str:
        return f"{self.system.value}:{self.id}"

    @classmethod
    def from_token(cls, token: str) -> "Code":
        system, _, ident = token.partition(":")
        return cls(CodeSystem(system), ident)

    @property
    def is_diagnosis(self) -> bool:
        return self.system in DIAGNOSIS_SYSTEMS

    def to_json(self) -> dict:
        return {"system": self.system.value, "id": self.id}

    @classmethod
    def from_json(cls, obj: dict) -> "Code":
        try:
            system = CodeSystem(obj["system"])
        except (KeyError, ValueError) as exc:
            raise KBError(f"bad code object {obj!r}: {exc}") from exc
        if "id" not in obj:
            raise KBError(f"bad code object {obj!r}: missing id")
        return cls(system, str(obj["id"]))


class RelationKind(str, Enum):
    MEDICATION = "medication"
    PROCEDURE = "procedure"
    LAB = "lab"


#: fixed ordering used everywhere a relation indexes an array row
RELATION_ORDER = (RelationKind.MEDICATION, RelationKind.PROCEDURE, RelationKind.LAB)


class Label(IntEnum):
    NEGATIVE = 0
    POSITIVE = 1


@dataclass(frozen=True)
class Problem:
    """A named problem defined as a nonempty set of diagnosis codes."""

    problem_id: str
    name: str
    definition: frozenset

    def __post_init__(self):
        if not self.definition:
            raise KBError(f"problem {self.problem_id!r} has an empty definition")
        object.__setattr__(self, "definition", frozenset(self.definition))
        for code in self.definition:
            if not code.is_diagnosis:
                raise KBError(
                    f"problem {self.problem_id!r}: definition code {code.token} "
                    f"is not from a diagnosis system"
                )


@dataclass(frozen=True)
class Triplet:
    """One annotated (problem, relation, target) edge with a 0/1 label."""

    problem_id: str
    relation: RelationKind
    target: Code
    label: Label
    round: int = 1

    def __post_init__(self):
        if self.round < 1:
            raise KBError(f"triplet round must be >= 1, got {self.round}")

    @property
    def key(self) -> tuple:
        return (self.problem_id, self.relation, self.target)

    @property
    def is_positive(self) -> bool:
        return self.label == Label.POSITIVE


@dataclass(frozen=True)
class AuditEntry:
    """One annotation event: an insert or a replacement of an existing key."""

    timestamp: str
    annotator: str
    triplet: Triplet
    replaced_label: Label | None = None

    def to_json(self) -> dict:
        return {
            "timestamp": self.timestamp,
            "annotator_id": self.annotator,
            "problem_id": self.triplet.problem_id,
            "relation": self.triplet.relation.value,
            "target": self.triplet.target.to_json(),
            "label": int(self.triplet.label),
            "round": self.triplet.round,
            "replaced_label": None
            if self.replaced_label is None
            else int(self.replaced_label),
        }


@dataclass(frozen=True)
class KnowledgeBase:
    problems: dict
    triplets: tuple
    audit: tuple = ()

    def __post_init__(self):
        seen = {}
        for i, t in enumerate(self.triplets):
            if t.problem_id not in self.problems:
                raise KBError(
                    f"triplets[{i}]: unknown problem {t.problem_id!r}"
                )
            if t.key in seen:
                raise KBError(
                    f"triplets[{i}]: duplicate key "
                    f"({t.problem_id}, {t.relation.value}, {t.target.token}), "
                    f"first at triplets[{seen[t.key]}]"
                )
            seen[t.key] = i

    def triplet_by_key(self, key) -> Triplet | None:
        for t in self.triplets:
            if t.key == key:
                return t
        return None

    def positives(self, problem_id=None, relation=None):
        return [
            t
            for t in self.triplets
            if t.is_positive
            and (problem_id is None or t.problem_id == problem_id)
            and (relation is None or t.relation == relation)
        ]

    def negatives(self, problem_id=None, relation=None):
        return [
            t
            for t in self.triplets
            if not t.is_positive
            and (problem_id is None or t.problem_id == problem_id)
            and (relation is None or t.relation == relation)
        ]

    def annotated_targets(self, problem_id, relation) -> frozenset:
        return frozenset(
            t.target
            for t in self.triplets
            if t.problem_id == problem_id and t.relation == relation
        )


class SplitMode(str, Enum):
    RANDOM_TRIPLET = "random_triplet"
    HELD_OUT_PROBLEM = "held_out_problem"


@dataclass(frozen=True)
class Split:
    """Disjoint, exhaustive train/validation/test triplet sets."""

    train: frozenset
    validation: frozenset
    test: frozenset
    mode: SplitMode
    seed: int

    def __post_init__(self):
        parts = [self.train, self.validation, self.test]
        total = sum(len(p) for p in parts)
        union = self.train | self.validation | self.test
        if len(union) != total:
            raise KBError("split parts are not pairwise disjoint")


def _parse_triplet(obj: dict, index: int, problems: dict) -> Triplet:
    where = f"triplets[{index}]"
    if not isinstance(obj, dict):
        raise KBError(f"{where}: expected an object, got {type(obj).__name__}")
    for key in ("problem", "relation", "target", "label"):
        if key not in obj:
            raise KBError(f"{where}: missing field {key!r}")
    try:
        relation = RelationKind(obj["relation"])
    except ValueError:
        raise KBError(f"{where}: unknown relation kind {obj['relation']!r}")
    target = Code.from_json(obj["target"])
    label_raw = obj["label"]
    if label_raw not in (0, 1):
        raise KBError(f"{where}: label must be 0 or 1, got {label_raw!r}")
    rnd = int(obj.get("round", 1))
    t = Triplet(str(obj["problem"]), relation, target, Label(label_raw), rnd)
    if t.problem_id not in problems:
        raise KBError(f"{where}: unknown problem {t.problem_id!r}")
    return t


def load_kb(path) -> KnowledgeBase:
    """Parse and validate a KB JSON file.

    Replaces same-key entries of unequal rounds with the latest round; two
    entries with equal key and equal round are a duplicate-key error.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise KBError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(raw, dict) or "problems" not in raw:
        raise KBError(f"{path}: expected an object with 'problems' and 'triplets'")

    problems = {}
    for i, obj in enumerate(raw.get("problems", [])):
        where = f"problems[{i}]"
        try:
            definition = frozenset(
                Code.from_json(c) for c in obj.get("definition", [])
            )
            problem = Problem(str(obj["id"]), str(obj.get("name", obj["id"])), definition)
        except KeyError as exc:
            raise KBError(f"{path}: {where}: missing field {exc}") from exc
        except KBError as exc:
            raise KBError(f"{path}: {where}: {exc}") from exc
        if problem.problem_id in problems:
            raise KBError(f"{path}: {where}: duplicate problem id {problem.problem_id!r}")
        problems[problem.problem_id] = problem

    by_key: dict = {}
    order: list = []
    for i, obj in enumerate(raw.get("triplets", [])):
        try:
            t = _parse_triplet(obj, i, problems)
        except KBError as exc:
            raise KBError(f"{path}: {exc}") from exc
        if t.key in by_key:
            prev = by_key[t.key]
            if prev.round == t.round:
                raise KBError(
                    f"{path}: triplets[{i}]: duplicate key "
                    f"({t.problem_id}, {t.relation.value}, {t.target.token}) "
                    f"with equal round {t.round}"
                )
            if t.round > prev.round:
                by_key[t.key] = t
        else:
            by_key[t.key] = t
            order.append(t.key)
    return KnowledgeBase(problems=problems, triplets=tuple(by_key[k] for k in order))


def _triplet_sort_key(t: Triplet):
    return (t.problem_id, t.relation.value, t.target.system.value, t.target.id)


def kb_to_json(kb: KnowledgeBase) -> dict:
    """Canonical JSON form: problems by id, definition and triplets sorted."""
    problems = [
        {
            "id": p.problem_id,
            "name": p.name,
            "definition": [c.to_json() for c in sorted(p.definition)],
        }
        for p in sorted(kb.problems.values(), key=lambda p: p.problem_id)
    ]
    triplets = [
        {
            "problem": t.problem_id,
            "relation": t.relation.value,
            "target": t.target.to_json(),
            "label": int(t.label),
            "round": t.round,
        }
        for t in sorted(kb.triplets, key=_triplet_sort_key)
    ]
    return {"problems": problems, "triplets": triplets}


def save_kb(kb: KnowledgeBase, path) -> None:
    Path(path).write_text(json.dumps(kb_to_json(kb), indent=2, sort_keys=True) + "\n")


def split_random(kb: KnowledgeBase, fractions=(0.70, 0.15, 0.15), seed: int = 0) -> Split:
    """Seeded uniform shuffle, partitioned by cumulative fraction.

    Validation and test sizes are floored; the remainder goes to train.
    """
    if any(f <= 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise KBError(f"fractions must be positive and sum to 1, got {fractions}")
    n = len(kb.triplets)
    if n < 3:
        raise KBError(f"need at least 3 triplets to split, have {n}")
    n_val = int(np.floor(fractions[1] * n))
    n_test = int(np.floor(fractions[2] * n))
    n_train = n - n_val - n_test
    perm = np.random.default_rng(seed).permutation(n)
    return Split(
        train=frozenset(kb.triplets[int(i)] for i in perm[:n_train]),
        validation=frozenset(
            kb.triplets[int(i)] for i in perm[n_train : n_train + n_val]
        ),
        test=frozenset(kb.triplets[int(i)] for i in perm[n_train + n_val :]),
        mode=SplitMode.RANDOM_TRIPLET,
        seed=seed,
    )


def split_by_problem(
    kb: KnowledgeBase, n_val_problems: int = 5, n_test_problems: int = 5, seed: int = 0
) -> Split:
    """Hold out whole problems: every triplet of a held-out problem moves with it."""
    ids = sorted(kb.problems)
    if len(ids) <= n_val_problems + n_test_problems:
        raise KBError(
            f"need more than {n_val_problems + n_test_problems} problems, have {len(ids)}"
        )
    perm = np.random.default_rng(seed).permutation(len(ids))
    shuffled = [ids[i] for i in perm]
    test_ids = set(shuffled[:n_test_problems])
    val_ids = set(shuffled[n_test_problems : n_test_problems + n_val_problems])
    train, val, test = set(), set(), set()
    for t in kb.triplets:
        if t.problem_id in test_ids:
            test.add(t)
        elif t.problem_id in val_ids:
            val.add(t)
        else:
            train.add(t)
    return Split(
        train=frozenset(train),
        validation=frozenset(val),
        test=frozenset(test),
        mode=SplitMode.HELD_OUT_PROBLEM,
        seed=seed,
    )


def add_annotation(
    kb: KnowledgeBase,
    triplet: Triplet,
    vocabulary=None,
    annotator: str = "anonymous",
    timestamp: str | None = None,
) -> KnowledgeBase:
    """Insert or replace by key; the returned KB carries one more audit entry.

    When a vocabulary is given, the target must be a known code of the
    triplet's relation kind.
    """
    if triplet.problem_id not in kb.problems:
        raise KBError(f"unknown problem {triplet.problem_id!r}")
    if vocabulary is not None:
        kind = vocabulary.kind_of(triplet.target)
        if kind is None:
            raise KBError(f"target {triplet.target.token} not in vocabulary")
        if kind != triplet.relation:
            raise KBError(
                f"target {triplet.target.token} has kind {kind.value}, "
                f"triplet says {triplet.relation.value}"
            )
    if timestamp is None:
        timestamp = datetime.now(timezone.utc).isoformat(timespec="seconds")

    replaced = None
    triplets = list(kb.triplets)
    for i, t in enumerate(triplets):
        if t.key == triplet.key:
            replaced = t.label
            triplets[i] = triplet
            break
    else:
        triplets.append(triplet)
    entry = AuditEntry(timestamp, annotator, triplet, replaced)
    return replace(kb, triplets=tuple(triplets), audit=kb.audit + (entry,))


def append_audit_log(path, entries) -> None:
    """Append audit entries to a JSONL log, one event per line."""
    with open(path, "a") as fh:
        for entry in entries:
            fh.write(json.dumps(entry.to_json(), sort_keys=True) + "\n")


def parse_annotation_event(obj: dict) -> AuditEntry:
    """One event-log line back into an AuditEntry."""
    try:
        triplet = Triplet(
            problem_id=obj["problem_id"],
            relation=RelationKind(obj["relation"]),
            target=Code.from_json(obj["target"]),
            label=Label(int(obj["label"])),
            round=int(obj.get("round", 1)),
        )
        replaced = obj.get("replaced_label")
        return AuditEntry(
            timestamp=obj["timestamp"],
            annotator=obj["annotator_id"],
            triplet=triplet,
            replaced_label=None if replaced is None else Label(int(replaced)),
        )
    except (KeyError, ValueError) as exc:
        raise KBError(f"malformed annotation event: {exc}") from exc


def load_annotation_log(path):
    """All events from a JSONL log, in file order."""
    events = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise KBError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            events.append(parse_annotation_event(obj))
    return events


def replay_annotations(kb: KnowledgeBase, events, vocabulary=None) -> KnowledgeBase:
    """Fold an event sequence into the KB; later events win on the same key."""
    for event in events:
        kb = add_annotation(
            kb,
            event.triplet,
            vocabulary=vocabulary,
            annotator=event.annotator,
            timestamp=event.timestamp,
        )
    return kb
