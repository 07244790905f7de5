"""Co-occurrence, specialty, and importance features.

The co-occurrence checks compare the library against ``cooc_oracle`` below: a
deliberately slow, loop-everything re-derivation of each definition straight
from patient timelines, written independently of the implementation.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from problink import (
    CoocDefinition,
    RelationKind,
    build_vocabulary,
    candidate_list,
    cooccurrence,
    importance_score,
)
from problink.features import (
    COOC_CHAIN,
    FeatureSet,
    N_PAIR_FEATURES,
    build_features,
    build_specialty_vocab,
    specialty_vector,
)
from problink.synth import PlantSpec, generate
from problink import ingest, load_kb

from util import code, enc, make_store, problem

MED = RelationKind.MEDICATION
LAB = RelationKind.LAB


# --------------------------------------------------------------- the oracle


def cooc_oracle(store, prob, target, definition):
    """Patient-level co-occurrence fraction, re-derived by brute force.

    Walks every pair of encounters per patient and applies the definition
    verbatim; returns None where the target has no patients at all.
    """
    target_patients = set()
    co_patients = set()
    for pid, recs in store.by_patient.items():
        has_target = any(target in r.order_codes() for r in recs)
        if has_target:
            target_patients.add(pid)
        else:
            continue
        hit = False
        if definition == CoocDefinition.EXPLICIT:
            for r in recs:
                for o in r.orders:
                    if (
                        o.code == target
                        and o.linked_diagnosis is not None
                        and o.linked_diagnosis in prob.definition
                    ):
                        hit = True
        elif definition == CoocDefinition.SAME_ENCOUNTER:
            for r in recs:
                if r.diagnoses & prob.definition and target in r.order_codes():
                    hit = True
        else:
            for r1 in recs:  # the encounter carrying a problem diagnosis
                if not (r1.diagnoses & prob.definition):
                    continue
                for r2 in recs:  # the encounter carrying the target order
                    if target not in r2.order_codes():
                        continue
                    if abs((r2.date - r1.date).days) > 14:
                        continue
                    if (
                        definition == CoocDefinition.TWO_WEEKS_SAME_FACILITY
                        and r1.facility_id != r2.facility_id
                    ):
                        continue
                    hit = True
        if hit:
            co_patients.add(pid)
    if not target_patients:
        return None
    return len(co_patients) / len(target_patients)


def assert_matches_oracle(store, problems, targets):
    for definition in COOC_CHAIN:
        table = cooccurrence(store, problems, definition)
        for p in problems:
            for t in targets:
                expected = cooc_oracle(store, p, t, definition)
                got = table.get((p.problem_id, t))
                if expected in (None, 0.0):
                    assert not got, (definition, p.problem_id, t.token, got)
                else:
                    assert got == pytest.approx(expected, abs=1e-12), (
                        definition,
                        p.problem_id,
                        t.token,
                    )


class TestCooccurrence:
    def test_single_patient_same_encounter_is_one(self):
        store = make_store(
            [
                enc("p1", "e1", "2023-03-01", dx=("ICD10:I10",),
                    orders=((MED, "RXNORM:M1"),)),
            ]
        )
        p = problem("htn", "ICD10:I10")
        table = cooccurrence(store, [p], CoocDefinition.SAME_ENCOUNTER)
        assert table[("htn", code("RXNORM:M1"))] == 1.0

    def test_explicit_requires_linked_diagnosis(self):
        store = make_store(
            [
                enc("p1", "e1", "2023-03-01", dx=("ICD10:I10",),
                    orders=((MED, "RXNORM:M1"),)),
            ]
        )
        p = problem("htn", "ICD10:I10")
        table = cooccurrence(store, [p], CoocDefinition.EXPLICIT)
        assert ("htn", code("RXNORM:M1")) not in table

    def test_two_of_four_medication_patients_within_window(self):
        """Six patients; 4 take the med, 2 of those also carry the diagnosis
        within 14 days at the same facility; value must be 2/4."""
        d, m = "ICD10:I10", "RXNORM:M1"
        records = [
            # co-occurring within the window, same facility
            enc("p1", "p1dx", "2023-03-01", dx=(d,)),
            enc("p1", "p1rx", "2023-03-10", orders=((MED, m),)),
            enc("p2", "p2dx", "2023-03-01", dx=(d,)),
            enc("p2", "p2rx", "2023-03-15", orders=((MED, m),)),
            # med patient, diagnosis too far away in time
            enc("p3", "p3dx", "2023-03-01", dx=(d,)),
            enc("p3", "p3rx", "2023-04-20", orders=((MED, m),)),
            # med patient, window satisfied only at a different facility
            enc("p4", "p4dx", "2023-03-01", dx=(d,), facility="F9"),
            enc("p4", "p4rx", "2023-03-05", orders=((MED, m),)),
            # diagnosis-only patients
            enc("p5", "p5dx", "2023-03-01", dx=(d,)),
            enc("p6", "p6dx", "2023-03-01", dx=(d,)),
        ]
        store = make_store(records)
        p = problem("htn", d)
        table = cooccurrence(store, [p], CoocDefinition.TWO_WEEKS_SAME_FACILITY)
        assert table[("htn", code(m))] == 0.5
        # sanity: loosening to any-facility picks up the fourth patient
        any_fac = cooccurrence(store, [p], CoocDefinition.TWO_WEEKS_ANY_FACILITY)
        assert any_fac[("htn", code(m))] == 0.75
        assert_matches_oracle(store, [p], [code(m)])

    def test_window_boundary_is_inclusive(self):
        d, m = "ICD10:I10", "RXNORM:M1"
        records = [
            enc("p1", "e1", "2023-03-01", dx=(d,)),
            enc("p1", "e2", "2023-03-15", orders=((MED, m),)),  # +14 days
            enc("p2", "e3", "2023-03-01", dx=(d,)),
            enc("p2", "e4", "2023-03-16", orders=((MED, m),)),  # +15 days
        ]
        store = make_store(records)
        p = problem("htn", d)
        table = cooccurrence(store, [p], CoocDefinition.TWO_WEEKS_ANY_FACILITY)
        assert table[("htn", code(m))] == 0.5

    def test_window_is_symmetric(self):
        d, m = "ICD10:I10", "RXNORM:M1"
        records = [
            enc("p1", "e1", "2023-03-15", dx=(d,)),
            enc("p1", "e2", "2023-03-01", orders=((MED, m),)),  # order precedes dx
        ]
        store = make_store(records)
        p = problem("htn", d)
        table = cooccurrence(store, [p], CoocDefinition.TWO_WEEKS_ANY_FACILITY)
        assert table[("htn", code(m))] == 1.0

    def test_oracle_agreement_on_generated_store(self, mini_data):
        store = mini_data.store
        kb = mini_data.kb
        problems = list(kb.problems.values())[:3]
        targets = sorted(store.code_patients)[:12]
        assert_matches_oracle(store, problems, targets)

    def test_chain_monotone_on_generated_stores(self, tmp_path):
        for seed in range(3):
            spec = PlantSpec(
                n_problems=4,
                n_targets_per_kind=8,
                n_patients=30,
                n_negatives_per_kind=4,
                seed=100 + seed,
            )
            enc_path, kb_path, _ = generate(spec, tmp_path / f"s{seed}")
            store = ingest(enc_path)
            kb = load_kb(kb_path)
            problems = list(kb.problems.values())
            tables = {
                d: cooccurrence(store, problems, d) for d in COOC_CHAIN
            }
            keys = set().union(*(t.keys() for t in tables.values()))
            for key in keys:
                values = [tables[d].get(key, 0.0) for d in COOC_CHAIN]
                assert values == sorted(values), (key, values)


class TestSpecialties:
    def test_top_n_by_count_with_name_tiebreak(self):
        records = [
            enc("p1", "e1", "2023-01-01", specialty="cardiology"),
            enc("p1", "e2", "2023-01-02", specialty="cardiology"),
            enc("p2", "e3", "2023-01-03", specialty="nephrology"),
            enc("p2", "e4", "2023-01-04", specialty="audiology"),
            enc("p3", "e5", "2023-01-05"),
        ]
        store = make_store(records)
        assert build_specialty_vocab(store, n=2) == ("cardiology", "audiology")
        assert build_specialty_vocab(store, n=10) == (
            "cardiology",
            "audiology",
            "nephrology",
        )

    def test_vector_counts_encounters_with_token(self):
        m = "RXNORM:M1"
        records = [
            enc("p1", "e1", "2023-01-01", dx=("ICD10:I10",),
                orders=((MED, m),), specialty="cardiology"),
            enc("p1", "e2", "2023-01-02", dx=("ICD10:I10",),
                orders=((MED, m),), specialty="cardiology"),
            enc("p2", "e3", "2023-01-03", dx=("ICD10:I10",),
                orders=((MED, m),)),
            enc("p2", "e4", "2023-01-04", specialty="cardiology"),
        ]
        store = make_store(records)
        vocab = ("cardiology", "nephrology")
        np.testing.assert_array_equal(
            specialty_vector(store, code(m), vocab), [2.0, 0.0]
        )
        np.testing.assert_array_equal(
            specialty_vector(store, code("LOINC:NONE"), vocab), [0.0, 0.0]
        )

    def test_vector_dimension_matches_vocab(self):
        store = make_store([enc("p1", "e1", "2023-01-01")])
        assert specialty_vector(store, code("RXNORM:M1"), ("a", "b", "c")).shape == (3,)


class TestImportance:
    def build(self, n_hits_with, n_with, n_hits_without, n_without):
        d, other, t = "ICD10:I10", "ICD10:Z99", "RXNORM:M1"
        records = []
        for i in range(n_with):
            orders = ((MED, t),) if i < n_hits_with else ()
            records.append(enc("p", f"w{i}", "2023-01-01", dx=(d,), orders=orders))
        for i in range(n_without):
            orders = ((MED, t),) if i < n_hits_without else ()
            records.append(enc("p", f"o{i}", "2023-01-01", dx=(other,), orders=orders))
        return make_store(records), problem("htn", d), code(t)

    def test_always_with_never_without_gives_log_eleven(self):
        store, p, t = self.build(10, 10, 0, 10)
        score = importance_score(store, p, t)
        assert score == pytest.approx(math.log(11), abs=1e-12)

    def test_equal_rates_give_zero(self):
        store, p, t = self.build(4, 8, 4, 8)
        assert importance_score(store, p, t) == pytest.approx(0.0, abs=1e-12)

    def test_only_without_gives_negative(self):
        store, p, t = self.build(0, 8, 5, 8)
        assert importance_score(store, p, t) < 0

    def test_degenerate_problem_warns_and_returns_zero(self):
        store, _, t = self.build(2, 4, 2, 4)
        ghost = problem("ghost", "ICD10:X99")
        with pytest.warns(UserWarning, match="no qualifying encounters"):
            assert importance_score(store, ghost, t) == 0.0

    def test_undiagnosed_encounters_excluded_by_default(self):
        d, t = "ICD10:I10", "RXNORM:M1"
        records = [
            enc("p", "w1", "2023-01-01", dx=(d,), orders=((MED, t),)),
            enc("p", "o1", "2023-01-01", dx=("ICD10:Z99",)),
            # no diagnosis at all: invisible unless include_undiagnosed
            enc("p", "u1", "2023-01-01", orders=((MED, t),)),
            enc("p", "u2", "2023-01-01", orders=((MED, t),)),
        ]
        store = make_store(records)
        p = problem("htn", d)
        base = importance_score(store, p, code(t))
        widened = importance_score(store, p, code(t), include_undiagnosed=True)
        # with the two undiagnosed hit encounters folded into y=0, the
        # contrast shrinks: (2/2) vs (1/2) -> log(2) then (2/2) vs (3/4)
        assert base == pytest.approx(math.log(2), abs=1e-12)
        assert widened == pytest.approx(math.log(1.0) - math.log(0.75), abs=1e-12)

    def test_planted_pairs_beat_non_planted(self, mini_data):
        """In-block pairs outscore out-of-block ones on planted data.

        Light per-pair smoke check; the full all-pairs claim at default scale
        is covered with the generator's own tests.
        """
        store, kb = mini_data.store, mini_data.kb
        from problink.synth import planted_blocks

        blocks = planted_blocks(mini_data.spec)
        worst_in, best_out = math.inf, -math.inf
        for i, pid in enumerate(sorted(kb.problems)):
            p = kb.problems[pid]
            members = {c for c in blocks[i][MED] if c in store.code_patients}
            others = {
                c
                for j in blocks
                if j != i
                for c in blocks[j][MED]
                if c in store.code_patients
            }
            for m in members:
                worst_in = min(worst_in, importance_score(store, p, m))
            for o in sorted(others)[:6]:
                best_out = max(best_out, importance_score(store, p, o))
        assert worst_in > best_out


class TestCandidateList:
    def test_orders_by_score_then_code(self):
        store = make_store(
            [
                enc("p1", "e1", "2023-01-01", dx=("ICD10:I10",),
                    orders=((MED, "RXNORM:A"), (MED, "RXNORM:B"), (MED, "RXNORM:C"))),
            ]
        )
        vocab = build_vocabulary(store, min_count=1)
        p = problem("htn", "ICD10:I10")
        scores = {"A": 2.0, "B": 2.0, "C": 5.0}

        def scorer(prob, c):
            return scores[c.id]

        got = candidate_list(scorer, p, MED, vocab, top_n=2)
        assert [c.id for c in got] == ["C", "A"]

    def test_exclusion_removes_annotated(self):
        store = make_store(
            [
                enc("p1", "e1", "2023-01-01", dx=("ICD10:I10",),
                    orders=((MED, "RXNORM:A"), (MED, "RXNORM:B"))),
            ]
        )
        vocab = build_vocabulary(store, min_count=1)
        p = problem("htn", "ICD10:I10")
        got = candidate_list(
            lambda prob, c: 1.0, p, MED, vocab, top_n=5,
            exclude={code("RXNORM:A")},
        )
        assert [c.id for c in got] == ["B"]

    def test_empty_kind_gives_empty_list(self):
        store = make_store([enc("p1", "e1", "2023-01-01", dx=("ICD10:I10",))])
        vocab = build_vocabulary(store, min_count=1)
        p = problem("htn", "ICD10:I10")
        assert candidate_list(lambda prob, c: 1.0, p, LAB, vocab, top_n=5) == []


class TestFeatureSet:
    def test_pair_reads_zero_for_unseen(self, mini_data):
        fs = mini_data.features
        pf = fs.pair("P000", code("RXNORM:NEVERSEEN"))
        assert pf.explicit == 0.0
        assert pf.same_encounter == 0.0
        assert pf.target_patients == 0

    def test_vector_has_fixed_width(self, mini_data):
        fs = mini_data.features
        some_problem = next(iter(mini_data.kb.problems))
        vec = fs.pair(some_problem, code("RXNORM:M000")).vector()
        assert vec.shape == (N_PAIR_FEATURES,)

    def test_log_features_are_log1p_counts(self, mini_data):
        fs = mini_data.features
        pid = next(iter(mini_data.kb.problems))
        target = next(iter(mini_data.store.code_patients))
        pf = fs.pair(pid, target)
        assert pf.log_problem_patients == pytest.approx(
            math.log1p(fs.problem_patients[pid])
        )
        assert pf.log_target_patients == pytest.approx(
            math.log1p(fs.target_patients[target])
        )

    def test_build_matches_direct_cooccurrence(self, mini_data):
        """The threaded bulk builder and one-shot calls must agree exactly."""
        store, kb, vocab = mini_data.store, mini_data.kb, mini_data.vocab
        fs = mini_data.features
        for definition in COOC_CHAIN:
            direct = cooccurrence(store, kb.problems.values(), definition)
            bulk = {
                k: v
                for k, v in fs.cooc[definition].items()
                if v != 0.0
            }
            assert bulk == direct

    def test_save_load_round_trip_exact(self, tmp_path, mini_data):
        fs = mini_data.features
        fs.save(tmp_path)
        loaded = FeatureSet.load(tmp_path)
        assert loaded.specialty_vocab == fs.specialty_vocab
        assert loaded.problem_patients == fs.problem_patients
        assert loaded.target_patients == fs.target_patients
        for definition in COOC_CHAIN:
            assert loaded.cooc[definition] == fs.cooc[definition]
        for pid, vec in fs.spec_problems.items():
            np.testing.assert_array_equal(loaded.spec_problems[pid], vec)
        for t, vec in fs.spec_targets.items():
            np.testing.assert_array_equal(loaded.spec_targets[t], vec)

    def test_normalize_spec_is_log1p_of_share(self):
        vec = np.array([3.0, 1.0, 0.0])
        out = FeatureSet.normalize_spec(vec)
        np.testing.assert_allclose(out, np.log1p(vec / 4.0))
        np.testing.assert_array_equal(
            FeatureSet.normalize_spec(np.zeros(3)), np.zeros(3)
        )

    def test_specialty_vectors_match_single_token_queries(self, mini_data):
        store, fs = mini_data.store, mini_data.features
        some = sorted(fs.spec_targets)[:5]
        for t in some:
            np.testing.assert_array_equal(
                fs.spec_targets[t],
                specialty_vector(store, t, fs.specialty_vocab),
            )
