"""Rule-based relevance baselines built from terminology mapping files.

Medication relevance: a precomposed medication -> treatable-diagnoses map is
intersected with the problem's definition codes.  Procedure relevance: the
procedure's hierarchy parent maps to a clinical discipline, which must match
the discipline of some definition code's chapter range.  Both produce 0/1
scores, meant to be ranked with the median tie policy.  Unknown codes are
simply "not relevant" — the maps are user-supplied files and coverage is
reported, not assumed.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

from .kb import Code, KBError, Label, Problem, RelationKind


class BaselineError(KBError):
    pass


@dataclass(frozen=True)
class ChapterRange:
    """Diagnosis-code prefix range (inclusive) mapped to a discipline.

    A definition code matches when its id's prefix of the range-bound length
    sorts within [lo, hi]; e.g. range I00-I99 captures I25 and I2510.
    """

    system: str
    lo: str
    hi: str
    discipline: str

    def contains(self, code: Code) -> bool:
        if code.system.value != self.system:
            return False
        prefix = code.id[: len(self.lo)]
        return self.lo <= prefix <= self.hi


@dataclass(frozen=True)
class OntologyMaps:
    med_to_diagnoses: dict = field(default_factory=dict)
    proc_parent: dict = field(default_factory=dict)
    parent_discipline: dict = field(default_factory=dict)
    chapter_ranges: tuple = ()

    def supports(self, kind: RelationKind) -> bool:
        return kind in (RelationKind.MEDICATION, RelationKind.PROCEDURE)


def load_med_map(path) -> dict:
    """CSV columns: med_system, med_id, dx_system, dx_id."""
    out: dict = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            med = Code.from_token(f"{row['med_system']}:{row['med_id']}")
            dx = Code.from_token(f"{row['dx_system']}:{row['dx_id']}")
            out.setdefault(med, set()).add(dx)
    return {med: frozenset(dxs) for med, dxs in out.items()}


def load_hierarchy(path):
    """CSV columns: proc_system, proc_id, parent_id, discipline.

    Yields both the procedure -> parent map and the parent -> discipline map.
    """
    proc_parent, parent_discipline = {}, {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            proc = Code.from_token(f"{row['proc_system']}:{row['proc_id']}")
            proc_parent[proc] = row["parent_id"]
            existing = parent_discipline.get(row["parent_id"])
            if existing is not None and existing != row["discipline"]:
                raise BaselineError(
                    f"parent {row['parent_id']!r} mapped to two disciplines: "
                    f"{existing!r} and {row['discipline']!r}"
                )
            parent_discipline[row["parent_id"]] = row["discipline"]
    return proc_parent, parent_discipline


def load_chapters(path) -> tuple:
    """CSV columns: system, chapter_lo, chapter_hi, discipline."""
    ranges = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            ranges.append(
                ChapterRange(
                    system=row["system"].strip().upper(),
                    lo=row["chapter_lo"].strip().upper(),
                    hi=row["chapter_hi"].strip().upper(),
                    discipline=row["discipline"],
                )
            )
    return tuple(ranges)


def load_ontology_maps(med_path, hierarchy_path, chapters_path) -> OntologyMaps:
    med = load_med_map(med_path)
    proc_parent, parent_discipline = load_hierarchy(hierarchy_path)
    chapters = load_chapters(chapters_path)
    return OntologyMaps(
        med_to_diagnoses=med,
        proc_parent=proc_parent,
        parent_discipline=parent_discipline,
        chapter_ranges=chapters,
    )


def med_relevant(maps: OntologyMaps, med: Code, problem: Problem) -> bool:
    """True iff the medication treats or prevents any definition diagnosis."""
    return bool(maps.med_to_diagnoses.get(med, frozenset()) & problem.definition)


def _problem_disciplines(maps: OntologyMaps, problem: Problem) -> set:
    out = set()
    for dx in problem.definition:
        for rng in maps.chapter_ranges:
            if rng.contains(dx):
                out.add(rng.discipline)
    return out


def proc_relevant(maps: OntologyMaps, proc: Code, problem: Problem) -> bool:
    """True iff the procedure's parent discipline matches a definition chapter's."""
    parent = maps.proc_parent.get(proc)
    if parent is None:
        return False
    discipline = maps.parent_discipline.get(parent)
    if discipline is None:
        return False
    return discipline in _problem_disciplines(maps, problem)


def baseline_scorer(maps: OntologyMaps, kb):
    """0/1 scorer over triplets; rank with the MEDIAN tie policy.

    Lab relevance has no rule basis in the maps, so scoring a lab triplet
    raises; callers evaluating against a KB should filter lab triplets out
    first (see ``supported_part``).
    """

    def scorer(problem_id: str, relation: RelationKind, target: Code) -> float:
        if not maps.supports(relation):
            raise BaselineError("the ontology baseline does not cover lab relations")
        problem = kb.problems[problem_id]
        if relation == RelationKind.MEDICATION:
            return 1.0 if med_relevant(maps, target, problem) else 0.0
        return 1.0 if proc_relevant(maps, target, problem) else 0.0

    return scorer


def supported_part(maps: OntologyMaps, part):
    """The split part restricted to relations the baseline can score."""
    return frozenset(t for t in part if maps.supports(t.relation))


@dataclass(frozen=True)
class CoverageStats:
    n_meds: int
    n_mapped: int
    n_matching_any_problem: int

    @property
    def mapped_fraction(self) -> float:
        return self.n_mapped / self.n_meds if self.n_meds else 0.0

    @property
    def matching_fraction(self) -> float:
        return self.n_matching_any_problem / self.n_meds if self.n_meds else 0.0

    def to_json(self) -> dict:
        return {
            "n_meds": self.n_meds,
            "n_mapped": self.n_mapped,
            "n_matching_any_problem": self.n_matching_any_problem,
            "mapped_fraction": self.mapped_fraction,
            "matching_fraction": self.matching_fraction,
        }


def med_coverage(maps: OntologyMaps, meds, problems) -> CoverageStats:
    """How much of the medication vocabulary the map can say anything about."""
    meds = sorted(set(meds))
    mapped = [m for m in meds if maps.med_to_diagnoses.get(m)]
    matching = [
        m for m in mapped if any(med_relevant(maps, m, p) for p in problems)
    ]
    return CoverageStats(
        n_meds=len(meds), n_mapped=len(mapped), n_matching_any_problem=len(matching)
    )
