"""Usage features mined from the encounter log.

Four co-occurrence families (explicit link, same encounter, two-week window
at the same facility, two-week window anywhere), provider-specialty count
vectors, per-patient counts, the log-likelihood-ratio importance score used
to rank first-round annotation candidates, and the assembled per-pair feature
vectors consumed by the scoring model.

All co-occurrences count each patient at most once and are normalized by the
number of distinct patients carrying the target code, so values live in
[0, 1] and are monotone along the explicit -> same-encounter -> two-week
chain.
"""

from __future__ import annotations

import csv
import math
import warnings
from collections import Counter, defaultdict
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .encounters import EncounterStore, Vocabulary
from .kb import Code, Problem, RelationKind

TWO_WEEKS_DAYS = 14


class CoocDefinition(Enum):
    EXPLICIT = "explicit"
    SAME_ENCOUNTER = "same_encounter"
    TWO_WEEKS_SAME_FACILITY = "two_weeks_same_facility"
    TWO_WEEKS_ANY_FACILITY = "two_weeks_any_facility"


#: subset-chain order, loosest last
COOC_CHAIN = (
    CoocDefinition.EXPLICIT,
    CoocDefinition.SAME_ENCOUNTER,
    CoocDefinition.TWO_WEEKS_SAME_FACILITY,
    CoocDefinition.TWO_WEEKS_ANY_FACILITY,
)


def _cooc_patient_sets(store: EncounterStore, problem: Problem, definition: CoocDefinition):
    """Per target code: the set of patients co-occurring with the problem."""
    defn = problem.definition
    out = defaultdict(set)
    for pid, recs in store.by_patient.items():
        if definition == CoocDefinition.EXPLICIT:
            for rec in recs:
                for order in rec.orders:
                    if order.linked_diagnosis is not None and order.linked_diagnosis in defn:
                        out[order.code].add(pid)
        elif definition == CoocDefinition.SAME_ENCOUNTER:
            for rec in recs:
                if rec.diagnoses & defn:
                    for code in rec.order_codes():
                        out[code].add(pid)
        else:
            same_fac = definition == CoocDefinition.TWO_WEEKS_SAME_FACILITY
            dx_visits = [
                (rec.date, rec.facility_id) for rec in recs if rec.diagnoses & defn
            ]
            if not dx_visits:
                continue
            for rec in recs:
                codes = rec.order_codes()
                if not codes:
                    continue
                for dx_date, dx_fac in dx_visits:
                    if abs((rec.date - dx_date).days) <= TWO_WEEKS_DAYS and (
                        not same_fac or rec.facility_id == dx_fac
                    ):
                        for code in codes:
                            out[code].add(pid)
                        break
    return out


def cooccurrence(store: EncounterStore, problems, definition: CoocDefinition) -> dict:
    """Normalized co-occurrence per (problem_id, target code).

    value = |patients where the problem and target co-occur| /
            |patients with the target|; pairs with a zero denominator are
    simply absent from the map (read as 0 downstream).
    """
    out = {}
    for problem in problems:
        sets = _cooc_patient_sets(store, problem, definition)
        for code, patients in sets.items():
            denom = len(store.code_patients.get(code, ()))
            if denom > 0:
                out[(problem.problem_id, code)] = len(patients) / denom
    return out


def build_specialty_vocab(store: EncounterStore, n: int = 24) -> tuple:
    """Top-n specialties by encounter coverage; ties broken lexicographically."""
    counts = Counter(
        rec.provider_specialty
        for rec in store.encounters
        if rec.provider_specialty is not None
    )
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return tuple(name for name, _ in ranked[:n])


def _encounter_has_token(rec, token) -> bool:
    if isinstance(token, Problem):
        return bool(rec.diagnoses & token.definition)
    return token in rec.diagnoses or token in rec.order_codes()


def specialty_vector(store: EncounterStore, token, specialty_vocab) -> np.ndarray:
    """Encounter counts per specialty for a code or a problem.

    Counts encounters (not patients) that contain the token and list the
    specialty; encounters with no or out-of-vocabulary specialty contribute
    nothing.
    """
    index = {name: i for i, name in enumerate(specialty_vocab)}
    vec = np.zeros(len(specialty_vocab))
    for rec in store.encounters:
        if rec.provider_specialty is None:
            continue
        i = index.get(rec.provider_specialty)
        if i is None:
            continue
        if _encounter_has_token(rec, token):
            vec[i] += 1
    return vec


def importance_score(
    store: EncounterStore, problem: Problem, target: Code, include_undiagnosed: bool = False
) -> float:
    """log p(target present | problem present) - log p(target | problem absent).

    Probabilities are estimated over encounters with add-1 smoothing on both
    the numerator and denominator; presence is binary per encounter.
    Encounters without any diagnosis code are excluded from both strata
    unless ``include_undiagnosed``.
    """
    n_with = n_without = hits_with = hits_without = 0
    for rec in store.encounters:
        if not rec.diagnoses and not include_undiagnosed:
            continue
        has_target = target in rec.order_codes()
        if rec.diagnoses & problem.definition:
            n_with += 1
            hits_with += has_target
        else:
            n_without += 1
            hits_without += has_target
    if n_with == 0:
        warnings.warn(
            f"problem {problem.problem_id!r} has no qualifying encounters; "
            f"importance score degenerates to 0"
        )
        return 0.0
    p_with = (hits_with + 1) / (n_with + 1)
    p_without = (hits_without + 1) / (n_without + 1)
    return math.log(p_with) - math.log(p_without)


def candidate_list(
    scorer, problem: Problem, kind: RelationKind, vocabulary: Vocabulary, top_n: int, exclude=frozenset()
):
    """Top-n codes of a kind by descending score.

    ``scorer(problem, code)`` gives the score; ties break on (system, id) so
    reruns return the same prefix.  ``exclude`` drops already-annotated codes
    for second-round candidate generation.
    """
    eligible = sorted(vocabulary.by_kind.get(kind, frozenset()) - frozenset(exclude))
    scored = [(scorer(problem, code), code) for code in eligible]
    scored.sort(key=lambda sc: (-sc[0], sc[1].system.value, sc[1].id))
    return [code for _, code in scored[:top_n]]


@dataclass(frozen=True)
class PairFeatures:
    """The engineered features for one (problem, target) pair."""

    explicit: float
    same_encounter: float
    two_week_same_facility: float
    two_week_any_facility: float
    problem_patients: int
    target_patients: int

    @property
    def log_problem_patients(self) -> float:
        return math.log1p(self.problem_patients)

    @property
    def log_target_patients(self) -> float:
        return math.log1p(self.target_patients)

    def vector(self) -> np.ndarray:
        return np.array(
            [
                self.explicit,
                self.same_encounter,
                self.two_week_same_facility,
                self.two_week_any_facility,
                self.log_problem_patients,
                self.log_target_patients,
            ]
        )


N_PAIR_FEATURES = 6

_ZERO_SPEC_CACHE: dict = {}


class FeatureSet:
    """Precomputed feature caches for a fixed problem set and vocabulary.

    Holds the four co-occurrence maps, per-token patient counts, and raw
    specialty count vectors for every problem and target.  ``pair`` and the
    specialty accessors never fail: unseen pairs read as zeros.
    """

    def __init__(self, cooc, problem_patients, target_patients, specialty_vocab,
                 spec_problems, spec_targets):
        self.cooc = cooc
        self.problem_patients = problem_patients
        self.target_patients = target_patients
        self.specialty_vocab = tuple(specialty_vocab)
        self.spec_problems = spec_problems
        self.spec_targets = spec_targets

    @property
    def spec_dim(self) -> int:
        return len(self.specialty_vocab)

    def pair(self, problem_id: str, target: Code) -> PairFeatures:
        key = (problem_id, target)
        return PairFeatures(
            explicit=self.cooc[CoocDefinition.EXPLICIT].get(key, 0.0),
            same_encounter=self.cooc[CoocDefinition.SAME_ENCOUNTER].get(key, 0.0),
            two_week_same_facility=self.cooc[
                CoocDefinition.TWO_WEEKS_SAME_FACILITY
            ].get(key, 0.0),
            two_week_any_facility=self.cooc[
                CoocDefinition.TWO_WEEKS_ANY_FACILITY
            ].get(key, 0.0),
            problem_patients=self.problem_patients.get(problem_id, 0),
            target_patients=self.target_patients.get(target, 0),
        )

    def _zero_spec(self) -> np.ndarray:
        return np.zeros(self.spec_dim)

    def spec_problem(self, problem_id: str) -> np.ndarray:
        return self.spec_problems.get(problem_id, self._zero_spec())

    def spec_target(self, target: Code) -> np.ndarray:
        return self.spec_targets.get(target, self._zero_spec())

    @staticmethod
    def normalize_spec(vec: np.ndarray) -> np.ndarray:
        """L1-normalize then log1p; raw encounter counts span orders of magnitude."""
        total = vec.sum()
        if total <= 0:
            return np.zeros_like(vec, dtype=float)
        return np.log1p(vec / total)

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        pairs = sorted(
            {key for m in self.cooc.values() for key in m},
            key=lambda key: (key[0], key[1].system.value, key[1].id),
        )
        with open(directory / "pair_features.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                [
                    "problem_id", "system", "id",
                    "explicit", "same_encounter",
                    "two_week_same_facility", "two_week_any_facility",
                    "problem_patients", "target_patients",
                ]
            )
            for problem_id, code in pairs:
                pf = self.pair(problem_id, code)
                writer.writerow(
                    [
                        problem_id, code.system.value, code.id,
                        repr(float(pf.explicit)), repr(float(pf.same_encounter)),
                        repr(float(pf.two_week_same_facility)),
                        repr(float(pf.two_week_any_facility)),
                        pf.problem_patients, pf.target_patients,
                    ]
                )
        with open(directory / "specialties.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["token_type", "token"] + list(self.specialty_vocab))
            for problem_id in sorted(self.spec_problems):
                row = self.spec_problems[problem_id]
                writer.writerow(["problem", problem_id] + [repr(float(x)) for x in row])
            for code in sorted(self.spec_targets):
                row = self.spec_targets[code]
                writer.writerow(["code", code.token] + [repr(float(x)) for x in row])
        # patient counts for tokens that never co-occur still matter
        with open(directory / "patient_counts.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["token_type", "token", "patients"])
            for problem_id in sorted(self.problem_patients):
                writer.writerow(["problem", problem_id, self.problem_patients[problem_id]])
            for code in sorted(self.target_patients):
                writer.writerow(["code", code.token, self.target_patients[code]])

    @classmethod
    def load(cls, directory) -> "FeatureSet":
        directory = Path(directory)
        cooc = {definition: {} for definition in CoocDefinition}
        problem_patients, target_patients = {}, {}
        with open(directory / "pair_features.csv", newline="") as fh:
            columns = {
                CoocDefinition.EXPLICIT: "explicit",
                CoocDefinition.SAME_ENCOUNTER: "same_encounter",
                CoocDefinition.TWO_WEEKS_SAME_FACILITY: "two_week_same_facility",
                CoocDefinition.TWO_WEEKS_ANY_FACILITY: "two_week_any_facility",
            }
            for row in csv.DictReader(fh):
                code = Code.from_token(f"{row['system']}:{row['id']}")
                key = (row["problem_id"], code)
                for definition, column in columns.items():
                    value = float(row[column])
                    # the builder stores only observed co-occurrence, so keep
                    # zero entries implicit on the way back in
                    if value != 0.0:
                        cooc[definition][key] = value
        with open(directory / "patient_counts.csv", newline="") as fh:
            for row in csv.DictReader(fh):
                if row["token_type"] == "problem":
                    problem_patients[row["token"]] = int(row["patients"])
                else:
                    target_patients[Code.from_token(row["token"])] = int(row["patients"])
        spec_problems, spec_targets = {}, {}
        with open(directory / "specialties.csv", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            specialty_vocab = tuple(header[2:])
            for row in reader:
                vec = np.array([float(x) for x in row[2:]])
                if row[0] == "problem":
                    spec_problems[row[1]] = vec
                else:
                    spec_targets[Code.from_token(row[1])] = vec
        return cls(
            cooc, problem_patients, target_patients, specialty_vocab,
            spec_problems, spec_targets,
        )


def build_features(
    store: EncounterStore,
    problems,
    vocabulary: Vocabulary,
    specialty_n: int = 24,
    threads: int = 1,
) -> FeatureSet:
    """Compute every feature family for the given problems and vocabulary."""
    problems = list(problems)
    cooc = {}
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = {
                definition: pool.submit(cooccurrence, store, problems, definition)
                for definition in CoocDefinition
            }
            cooc = {definition: fut.result() for definition, fut in futures.items()}
    else:
        for definition in CoocDefinition:
            cooc[definition] = cooccurrence(store, problems, definition)

    problem_patients = {p.problem_id: store.problem_patient_count(p) for p in problems}
    target_patients = {
        code: len(pats) for code, pats in store.code_patients.items()
    }
    specialty_vocab = build_specialty_vocab(store, n=specialty_n)
    spec_index = {name: i for i, name in enumerate(specialty_vocab)}
    targets = sorted(vocabulary.all_targets)
    target_set = set(targets)
    spec_problems = {
        p.problem_id: np.zeros(len(specialty_vocab)) for p in problems
    }
    spec_targets = {code: np.zeros(len(specialty_vocab)) for code in targets}
    # single pass: each encounter contributes once per contained token
    for rec in store.encounters:
        if rec.provider_specialty is None:
            continue
        i = spec_index.get(rec.provider_specialty)
        if i is None:
            continue
        tokens = (rec.diagnoses | rec.order_codes()) & target_set
        for code in tokens:
            spec_targets[code][i] += 1
        for p in problems:
            if rec.diagnoses & p.definition:
                spec_problems[p.problem_id][i] += 1
    return FeatureSet(
        cooc, problem_patients, target_patients, specialty_vocab,
        spec_problems, spec_targets,
    )
