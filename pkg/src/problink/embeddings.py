"""Embedding tables and the trainers/transfers that populate them.

Covers the word2vec-style text format, a from-scratch skip-gram
negative-sampling trainer that treats each encounter's full code set as the
context window, composition of problem vectors from definition-code vectors,
k-nearest-neighbor transfer of vectors across vocabularies, and
vocabulary-intersection reporting.
"""

from __future__ import annotations

import csv
import warnings
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .encounters import EncounterStore, Vocabulary
from .kb import Code, KBError, Problem, RelationKind

MAX_ENCOUNTER_CODES = 64


class EmbeddingSource(Enum):
    EXTERNAL = "external"
    SITE_SPECIFIC = "site_specific"
    COMBINED = "combined"


class EmbeddingError(KBError):
    pass


@dataclass
class EmbeddingTable:
    """Immutable-by-convention map from token to a fixed-dimension vector."""

    dim: int
    vectors: dict = field(default_factory=dict)
    source_tag: EmbeddingSource = EmbeddingSource.SITE_SPECIFIC

    def __post_init__(self):
        for token, vec in self.vectors.items():
            vec = np.asarray(vec, dtype=float)
            if vec.shape != (self.dim,):
                raise EmbeddingError(
                    f"vector for {token!r} has shape {vec.shape}, expected ({self.dim},)"
                )
            if not np.all(np.isfinite(vec)):
                raise EmbeddingError(f"non-finite entries in vector for {token!r}")
            self.vectors[token] = vec

    def __contains__(self, token) -> bool:
        return self._key(token) in self.vectors

    def __len__(self) -> int:
        return len(self.vectors)

    @staticmethod
    def _key(token) -> str:
        return token.token if isinstance(token, Code) else token

    def get(self, token):
        return self.vectors.get(self._key(token))

    def __getitem__(self, token) -> np.ndarray:
        key = self._key(token)
        if key not in self.vectors:
            raise EmbeddingError(f"no embedding for token {key!r}")
        return self.vectors[key]

    def tokens(self):
        return sorted(self.vectors)


def load_embeddings(path, dim: int, source_tag=EmbeddingSource.EXTERNAL) -> EmbeddingTable:
    """Read the text format: header "N dim", then "token v1 ... vdim" lines."""
    path = Path(path)
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise EmbeddingError(f"{path}: malformed header {header!r}")
        try:
            n, file_dim = int(header[0]), int(header[1])
        except ValueError:
            raise EmbeddingError(f"{path}: non-integer header {header!r}") from None
        if file_dim != dim:
            raise EmbeddingError(f"{path}: file dimension {file_dim} != requested {dim}")
        vectors = {}
        for lineno, line in enumerate(fh, start=2):
            parts = line.split()
            if not parts:
                continue
            token, values = parts[0], parts[1:]
            if len(values) != dim:
                raise EmbeddingError(
                    f"{path}:{lineno}: {len(values)} components, expected {dim}"
                )
            if token in vectors:
                raise EmbeddingError(f"{path}:{lineno}: duplicate token {token!r}")
            try:
                vectors[token] = np.array([float(v) for v in values])
            except ValueError:
                raise EmbeddingError(f"{path}:{lineno}: non-numeric component") from None
    if len(vectors) != n:
        raise EmbeddingError(f"{path}: header says {n} vectors, found {len(vectors)}")
    return EmbeddingTable(dim=dim, vectors=vectors, source_tag=source_tag)


def save_embeddings(table: EmbeddingTable, path) -> None:
    path = Path(path)
    with open(path, "w") as fh:
        fh.write(f"{len(table)} {table.dim}\n")
        for token in table.tokens():
            comps = " ".join(repr(float(v)) for v in table.vectors[token])
            fh.write(f"{token} {comps}\n")


def _random_vector(dim: int, rng) -> np.ndarray:
    return rng.uniform(-0.5 / dim, 0.5 / dim, size=dim)


def train_skipgram(
    store: EncounterStore,
    dim: int = 100,
    epochs: int = 5,
    neg_samples: int = 5,
    lr: float = 0.025,
    seed: int = 0,
    threads: int = 1,
) -> EmbeddingTable:
    """Skip-gram with negative sampling over whole-encounter contexts.

    Every code in an encounter is a context of every other code in the same
    encounter — there is no positional window.  Negatives are drawn from the
    unigram distribution raised to 3/4.  Input vectors start uniform in
    [-0.5/dim, 0.5/dim], output vectors at zero; the input vectors are
    returned.  Deterministic for a given seed when threads == 1; the
    multi-threaded path updates shared weights lock-free and gives up
    determinism for speed.
    """
    if not store.encounters:
        raise EmbeddingError("cannot train embeddings on an empty encounter store")
    rng = np.random.default_rng(seed)

    vocab = sorted({c for rec in store.encounters for c in rec.diagnoses | rec.order_codes()})
    index = {code: i for i, code in enumerate(vocab)}
    counts = Counter()
    for rec in store.encounters:
        for code in rec.diagnoses | rec.order_codes():
            counts[code] += 1
    noise = np.array([counts[c] for c in vocab], dtype=float) ** 0.75
    noise_cdf = np.cumsum(noise / noise.sum())

    w_in = rng.uniform(-0.5 / dim, 0.5 / dim, size=(len(vocab), dim))
    w_out = np.zeros((len(vocab), dim))

    encounter_codes = [
        np.array(sorted(index[c] for c in rec.diagnoses | rec.order_codes()))
        for rec in store.encounters
    ]
    encounter_codes = [codes for codes in encounter_codes if len(codes) >= 2]

    def run_epoch(order, epoch_rng):
        for enc_i in order:
            codes = encounter_codes[enc_i]
            if len(codes) > MAX_ENCOUNTER_CODES:
                codes = epoch_rng.choice(codes, size=MAX_ENCOUNTER_CODES, replace=False)
            n = len(codes)
            for pos in range(n):
                center = codes[pos]
                contexts = np.delete(codes, pos)
                negs = np.searchsorted(
                    noise_cdf, epoch_rng.random(len(contexts) * neg_samples)
                )
                rows = np.concatenate([contexts, negs])
                labels = np.zeros(len(rows))
                labels[: len(contexts)] = 1.0
                h = w_in[center]
                scores = np.clip(w_out[rows] @ h, -30.0, 30.0)
                sig = 1.0 / (1.0 + np.exp(-scores))
                g = sig - labels
                grad_in = g @ w_out[rows]
                np.add.at(w_out, rows, -lr * g[:, None] * h[None, :])
                w_in[center] -= lr * grad_in

    for _ in range(epochs):
        order = rng.permutation(len(encounter_codes))
        if threads > 1:
            from concurrent.futures import ThreadPoolExecutor

            chunks = np.array_split(order, threads)
            seeds = rng.integers(0, 2**31, size=threads)
            with ThreadPoolExecutor(max_workers=threads) as pool:
                list(
                    pool.map(
                        run_epoch, chunks, [np.random.default_rng(int(s)) for s in seeds]
                    )
                )
        else:
            run_epoch(order, rng)

    vectors = {code.token: w_in[i].copy() for code, i in index.items()}
    return EmbeddingTable(dim=dim, vectors=vectors, source_tag=EmbeddingSource.SITE_SPECIFIC)


class InitWeighting(Enum):
    FREQUENCY = "frequency"
    UNIFORM = "uniform"


def init_problem_embedding(
    problem: Problem,
    table: EmbeddingTable,
    weighting: InitWeighting = InitWeighting.UNIFORM,
    code_frequencies=None,
    rng=None,
) -> np.ndarray:
    """Convex combination of the problem's definition-code vectors.

    Definition codes without a vector are dropped before the weights are
    normalized.  FREQUENCY weighting uses ``code_frequencies`` counts;
    UNIFORM averages the surviving codes equally.  A problem whose
    definition is entirely out of vocabulary falls back to a seeded random
    vector with a warning.
    """
    present = sorted(c for c in problem.definition if c in table)
    if not present:
        warnings.warn(
            f"no definition code of problem {problem.problem_id!r} has an embedding; "
            f"falling back to random initialization"
        )
        if rng is None:
            rng = np.random.default_rng(0)
        return _random_vector(table.dim, rng)
    if weighting == InitWeighting.FREQUENCY:
        if code_frequencies is None:
            raise EmbeddingError("FREQUENCY weighting requires code_frequencies")
        weights = np.array([float(code_frequencies.get(c, 0)) for c in present])
        if weights.sum() <= 0:
            weights = np.ones(len(present))
    else:
        weights = np.ones(len(present))
    weights = weights / weights.sum()
    stacked = np.stack([table[c] for c in present])
    return weights @ stacked


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))


def knn_transfer(
    missing: Code,
    internal: EmbeddingTable,
    external: EmbeddingTable,
    k: int = 5,
    rng=None,
) -> np.ndarray:
    """Borrow an external-space vector for a code absent from the external table.

    Finds the k nearest neighbors of the code in the internal space (cosine),
    restricted to codes that do have external vectors, and returns the
    element-wise mean of those neighbors' external vectors.  k defaults to 5,
    the value picked on validation.
    """
    query = internal.get(missing)
    if query is None:
        warnings.warn(
            f"{missing.token} has no internal vector; falling back to random initialization"
        )
        if rng is None:
            rng = np.random.default_rng(0)
        return _random_vector(external.dim, rng)
    eligible = [
        tok for tok in internal.tokens() if tok in external.vectors and tok != missing.token
    ]
    if not eligible:
        warnings.warn(f"no eligible neighbors for {missing.token}; random initialization")
        if rng is None:
            rng = np.random.default_rng(0)
        return _random_vector(external.dim, rng)
    if len(eligible) < k:
        warnings.warn(
            f"only {len(eligible)} eligible neighbors for {missing.token} (k={k}); using all"
        )
    sims = sorted(
        ((cosine(query, internal.vectors[tok]), tok) for tok in eligible),
        key=lambda st: (-st[0], st[1]),
    )
    chosen = [tok for _, tok in sims[:k]]
    return np.mean([external.vectors[tok] for tok in chosen], axis=0)


def combine_tables(
    internal: EmbeddingTable, external: EmbeddingTable, k: int = 5, rng=None
) -> EmbeddingTable:
    """External-space table covering the internal vocabulary.

    Tokens present in the external table keep their external vector; the
    rest are filled in by k-NN transfer from the internal space.
    """
    vectors = {}
    for token in internal.tokens():
        if token in external.vectors:
            vectors[token] = external.vectors[token]
        else:
            vectors[token] = knn_transfer(Code.from_token(token), internal, external, k, rng)
    return EmbeddingTable(dim=external.dim, vectors=vectors, source_tag=EmbeddingSource.COMBINED)


#: which code system carries each target kind in external vocabularies
KIND_SYSTEMS = {
    RelationKind.MEDICATION: ("RXNORM",),
    RelationKind.PROCEDURE: ("CPT",),
    RelationKind.LAB: ("LOINC",),
}


@dataclass(frozen=True)
class IntersectionRow:
    kind: RelationKind
    internal_count: int
    external_count: int
    present_count: int

    @property
    def fraction(self) -> float:
        if self.internal_count == 0:
            return 0.0
        return self.present_count / self.internal_count


def vocab_intersection(internal_vocab: Vocabulary, external: EmbeddingTable):
    """Per-kind overlap between the site vocabulary and an external table."""
    rows = []
    for kind in RelationKind:
        internal = internal_vocab.by_kind.get(kind, frozenset())
        present = sum(1 for code in internal if code in external)
        systems = KIND_SYSTEMS[kind]
        external_count = sum(
            1 for tok in external.vectors if tok.split(":", 1)[0] in systems
        )
        rows.append(
            IntersectionRow(
                kind=kind,
                internal_count=len(internal),
                external_count=external_count,
                present_count=present,
            )
        )
    return rows


def save_intersection_report(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["kind", "internal_count", "external_count", "present_count", "fraction"])
        for row in rows:
            writer.writerow(
                [
                    row.kind.value, row.internal_count, row.external_count,
                    row.present_count, repr(row.fraction),
                ]
            )
