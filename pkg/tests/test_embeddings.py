"""Embedding tables, the skip-gram trainer, and cross-vocabulary transfer."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from problink import RelationKind, build_vocabulary
from problink.embeddings import (
    EmbeddingError,
    EmbeddingSource,
    EmbeddingTable,
    InitWeighting,
    combine_tables,
    cosine,
    init_problem_embedding,
    knn_transfer,
    load_embeddings,
    save_embeddings,
    train_skipgram,
    vocab_intersection,
)
from problink.features import CoocDefinition  # noqa: F401  (import sanity)

from util import code, enc, make_store, problem, random_table

MED = RelationKind.MEDICATION


def table_of(mapping, dim, tag=EmbeddingSource.EXTERNAL):
    return EmbeddingTable(
        dim=dim,
        vectors={k: np.asarray(v, dtype=float) for k, v in mapping.items()},
        source_tag=tag,
    )


class TestEmbeddingTable:
    def test_lookup_by_code_or_token(self):
        t = table_of({"RXNORM:M1": [1.0, 2.0]}, 2)
        np.testing.assert_array_equal(t[code("RXNORM:M1")], [1.0, 2.0])
        np.testing.assert_array_equal(t["RXNORM:M1"], [1.0, 2.0])
        assert code("RXNORM:M1") in t
        assert code("RXNORM:NOPE") not in t
        assert t.get(code("RXNORM:NOPE")) is None
        assert len(t) == 1

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(EmbeddingError):
            table_of({"RXNORM:M1": [1.0, 2.0, 3.0]}, 2)

    def test_save_load_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        t = table_of(
            {f"RXNORM:M{i}": rng.standard_normal(4) for i in range(10)}, 4
        )
        path = tmp_path / "emb.txt"
        save_embeddings(t, path)
        loaded = load_embeddings(path, dim=4)
        assert set(loaded.vectors) == set(t.vectors)
        for tok, vec in t.vectors.items():
            np.testing.assert_array_equal(loaded.vectors[tok], vec)

    def test_load_rejects_wrong_dimension(self, tmp_path):
        path = tmp_path / "emb.txt"
        save_embeddings(table_of({"RXNORM:M1": [1.0, 2.0]}, 2), path)
        with pytest.raises(EmbeddingError):
            load_embeddings(path, dim=3)

    def test_load_reports_duplicate_token_line(self, tmp_path):
        path = tmp_path / "emb.txt"
        path.write_text("2 2\nRXNORM:M1 1.0 2.0\nRXNORM:M1 3.0 4.0\n")
        with pytest.raises(EmbeddingError, match=r":3: duplicate token"):
            load_embeddings(path, dim=2)


def tiny_corpus():
    """Two disjoint 4-code clusters; codes within a cluster always co-occur."""
    records = []
    for i in range(40):
        records.append(
            enc("p1", f"g1{i}", "2023-01-01", dx=("ICD10:A",),
                orders=((MED, "RXNORM:B"), (MED, "RXNORM:X1"), (MED, "RXNORM:X2")))
        )
        records.append(
            enc("p2", f"g2{i}", "2023-01-01", dx=("ICD10:C",),
                orders=((MED, "RXNORM:D"), (MED, "RXNORM:Y1"), (MED, "RXNORM:Y2")))
        )
    return make_store(records)


class TestSkipgram:
    def test_deterministic_for_fixed_seed(self):
        store = tiny_corpus()
        a = train_skipgram(store, dim=8, epochs=2, seed=3)
        b = train_skipgram(store, dim=8, epochs=2, seed=3)
        assert set(a.vectors) == set(b.vectors)
        for tok in a.vectors:
            np.testing.assert_array_equal(a.vectors[tok], b.vectors[tok])

    def test_seed_changes_vectors(self):
        store = tiny_corpus()
        a = train_skipgram(store, dim=8, epochs=1, seed=0)
        b = train_skipgram(store, dim=8, epochs=1, seed=1)
        assert any(
            not np.array_equal(a.vectors[tok], b.vectors[tok]) for tok in a.vectors
        )

    def test_covers_full_encounter_vocabulary(self):
        store = tiny_corpus()
        t = train_skipgram(store, dim=4, epochs=1, seed=0)
        assert set(t.vectors) == {
            "ICD10:A", "RXNORM:B", "RXNORM:X1", "RXNORM:X2",
            "ICD10:C", "RXNORM:D", "RXNORM:Y1", "RXNORM:Y2",
        }
        assert t.source_tag is EmbeddingSource.SITE_SPECIFIC

    def test_cooccurring_pair_more_similar_than_disjoint_pair(self):
        store = tiny_corpus()
        t = train_skipgram(store, dim=16, epochs=5, seed=0)
        together = cosine(t["ICD10:A"], t["RXNORM:B"])
        apart = cosine(t["ICD10:A"], t["RXNORM:D"])
        assert together > apart

    def test_empty_store_rejected(self):
        with pytest.raises(EmbeddingError):
            train_skipgram(make_store([]), dim=4)

    def test_threaded_run_completes(self):
        store = tiny_corpus()
        t = train_skipgram(store, dim=4, epochs=1, seed=0, threads=2)
        assert len(t) == 8


class TestProblemInit:
    def test_uniform_mean_of_present_codes(self):
        t = table_of({"ICD10:A": [2.0, 0.0], "ICD10:B": [0.0, 4.0]}, 2)
        p = problem("pb", "ICD10:A", "ICD10:B")
        np.testing.assert_allclose(init_problem_embedding(p, t), [1.0, 2.0])

    def test_missing_codes_dropped_before_normalizing(self):
        t = table_of({"ICD10:A": [2.0, 0.0]}, 2)
        p = problem("pb", "ICD10:A", "ICD10:B")
        np.testing.assert_allclose(init_problem_embedding(p, t), [2.0, 0.0])

    def test_frequency_weighting(self):
        t = table_of({"ICD10:A": [1.0, 0.0], "ICD10:B": [0.0, 1.0]}, 2)
        p = problem("pb", "ICD10:A", "ICD10:B")
        freqs = {code("ICD10:A"): 3, code("ICD10:B"): 1}
        got = init_problem_embedding(
            p, t, weighting=InitWeighting.FREQUENCY, code_frequencies=freqs
        )
        np.testing.assert_allclose(got, [0.75, 0.25])

    def test_frequency_weighting_requires_counts(self):
        t = table_of({"ICD10:A": [1.0, 0.0]}, 2)
        p = problem("pb", "ICD10:A")
        with pytest.raises(EmbeddingError):
            init_problem_embedding(p, t, weighting=InitWeighting.FREQUENCY)

    def test_all_missing_falls_back_to_random_with_warning(self):
        t = table_of({"ICD10:Z": [1.0, 0.0]}, 2)
        p = problem("pb", "ICD10:A")
        with pytest.warns(UserWarning, match="falling back"):
            a = init_problem_embedding(p, t, rng=np.random.default_rng(5))
        with pytest.warns(UserWarning):
            b = init_problem_embedding(p, t, rng=np.random.default_rng(5))
        np.testing.assert_array_equal(a, b)
        assert a.shape == (2,)

    @settings(max_examples=30, deadline=None)
    @given(
        seed=st.integers(min_value=0, max_value=10_000),
        n_codes=st.integers(min_value=1, max_value=6),
    )
    def test_init_stays_inside_componentwise_hull(self, seed, n_codes):
        """A convex combination can never leave the per-dimension envelope."""
        rng = np.random.default_rng(seed)
        vectors = {f"ICD10:C{i}": rng.standard_normal(5) for i in range(n_codes)}
        t = table_of(vectors, 5)
        p = problem("pb", *vectors.keys())
        freqs = {code(tok): int(rng.integers(1, 10)) for tok in vectors}
        for kwargs in (
            {},
            {"weighting": InitWeighting.FREQUENCY, "code_frequencies": freqs},
        ):
            got = init_problem_embedding(p, t, **kwargs)
            stacked = np.stack(list(vectors.values()))
            assert np.all(got >= stacked.min(axis=0) - 1e-12)
            assert np.all(got <= stacked.max(axis=0) + 1e-12)


class TestKnnTransfer:
    def setup_tables(self):
        internal = table_of(
            {
                "RXNORM:Q": [1.0, 0.0],
                "RXNORM:N1": [0.9, 0.1],   # nearest to Q
                "RXNORM:N2": [0.5, 0.5],
                "RXNORM:N3": [-1.0, 0.0],  # farthest
            },
            2,
        )
        external = table_of(
            {
                "RXNORM:N1": [10.0, 20.0, 30.0],
                "RXNORM:N2": [40.0, 50.0, 60.0],
                "RXNORM:N3": [70.0, 80.0, 90.0],
            },
            3,
        )
        return internal, external

    def test_k1_copies_nearest_neighbor_exactly(self):
        internal, external = self.setup_tables()
        got = knn_transfer(code("RXNORM:Q"), internal, external, k=1)
        np.testing.assert_array_equal(got, [10.0, 20.0, 30.0])

    def test_k2_is_mean_of_two_nearest(self):
        internal, external = self.setup_tables()
        got = knn_transfer(code("RXNORM:Q"), internal, external, k=2)
        np.testing.assert_allclose(got, [25.0, 35.0, 45.0])

    def test_neighbors_without_external_vectors_ineligible(self):
        internal, external = self.setup_tables()
        # give the internal space a decoy closer than every eligible token
        internal.vectors["RXNORM:DECOY"] = np.array([1.0, 0.001])
        got = knn_transfer(code("RXNORM:Q"), internal, external, k=1)
        np.testing.assert_array_equal(got, [10.0, 20.0, 30.0])

    def test_k_larger_than_pool_warns_and_uses_all(self):
        internal, external = self.setup_tables()
        with pytest.warns(UserWarning, match="eligible neighbors"):
            got = knn_transfer(code("RXNORM:Q"), internal, external, k=9)
        np.testing.assert_allclose(got, [40.0, 50.0, 60.0])

    def test_missing_internal_vector_falls_back_random(self):
        internal, external = self.setup_tables()
        with pytest.warns(UserWarning, match="no internal vector"):
            got = knn_transfer(
                code("RXNORM:GHOST"), internal, external, k=1,
                rng=np.random.default_rng(0),
            )
        assert got.shape == (3,)

    @settings(max_examples=20, deadline=None)
    @given(scale=st.floats(min_value=0.1, max_value=50.0), seed=st.integers(0, 999))
    def test_scaling_internal_space_changes_nothing(self, scale, seed):
        """Cosine neighborhoods are scale-free, so the transfer must be too."""
        rng = np.random.default_rng(seed)
        internal = table_of(
            {f"RXNORM:T{i}": rng.standard_normal(4) for i in range(6)}, 4
        )
        external = table_of(
            {f"RXNORM:T{i}": rng.standard_normal(3) for i in range(1, 6)}, 3
        )
        base = knn_transfer(code("RXNORM:T0"), internal, external, k=3)
        scaled = table_of(
            {tok: vec * scale for tok, vec in internal.vectors.items()}, 4
        )
        got = knn_transfer(code("RXNORM:T0"), scaled, external, k=3)
        np.testing.assert_allclose(got, base)


class TestCombineTables:
    def test_external_vectors_win_and_rest_are_transferred(self):
        internal = table_of(
            {"RXNORM:A": [1.0, 0.0], "RXNORM:B": [0.9, 0.1]}, 2
        )
        external = table_of({"RXNORM:A": [5.0, 6.0, 7.0]}, 3)
        combined = combine_tables(internal, external, k=1)
        assert combined.dim == 3
        assert combined.source_tag is EmbeddingSource.COMBINED
        np.testing.assert_array_equal(combined["RXNORM:A"], [5.0, 6.0, 7.0])
        # B's only eligible neighbor is A, so it borrows A's external vector
        np.testing.assert_array_equal(combined["RXNORM:B"], [5.0, 6.0, 7.0])


class TestVocabIntersection:
    def test_counts_by_kind(self):
        records = [
            enc("p1", "e1", "2023-01-01", dx=("ICD10:I10",),
                orders=(
                    (MED, "RXNORM:M1"),
                    (MED, "RXNORM:M2"),
                    (RelationKind.LAB, "LOINC:L1"),
                )),
        ]
        vocab = build_vocabulary(make_store(records), min_count=1)
        external = table_of(
            {"RXNORM:M1": [1.0], "RXNORM:M9": [2.0], "LOINC:L1": [3.0]}, 1
        )
        rows = {r.kind: r for r in vocab_intersection(vocab, external)}
        med = rows[MED]
        assert (med.internal_count, med.external_count, med.present_count) == (2, 2, 1)
        assert med.fraction == 0.5
        lab = rows[RelationKind.LAB]
        assert (lab.internal_count, lab.present_count) == (1, 1)
        proc = rows[RelationKind.PROCEDURE]
        assert proc.internal_count == 0 and proc.fraction == 0.0


class TestRandomTableHelper:
    def test_is_deterministic_and_bounded(self):
        t1 = random_table(["A:1", "B:2"], dim=4, seed=9)
        t2 = random_table(["B:2", "A:1"], dim=4, seed=9)
        for tok in t1.vectors:
            np.testing.assert_array_equal(t1.vectors[tok], t2.vectors[tok])
            assert np.all(np.abs(t1.vectors[tok]) <= 0.5 / 4)
