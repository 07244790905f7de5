"""Ranking metrics, breakdowns, and inter-annotator agreement.

Each positive triplet is ranked against the annotated negatives that share
its problem and relation within the same split part.  Ties are handled
pessimistically for model scores (positive placed after tied negatives) and
by the median-position rule for 0/1 baseline scores, where whole tie groups
share the median of the positions they occupy.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .kb import KBError, KnowledgeBase, Label, RELATION_ORDER


class EvalError(KBError):
    pass


class TiePolicy(Enum):
    STRICT = "strict"
    MEDIAN = "median"


def rank_one(pos_score: float, neg_scores, tie_policy: TiePolicy = TiePolicy.STRICT) -> float:
    """Rank of the positive among its negatives (1 = best).

    STRICT counts every tied negative as ranked above the positive.  MEDIAN
    assigns the positive the median position of its tie group: with g items
    tied starting at position p, the rank is p + (g - 1) / 2.
    """
    neg_scores = [float(s) for s in neg_scores]
    if not math.isfinite(pos_score) or not all(math.isfinite(s) for s in neg_scores):
        raise EvalError("non-finite score in ranking")
    greater = sum(1 for s in neg_scores if s > pos_score)
    equal = sum(1 for s in neg_scores if s == pos_score)
    if tie_policy == TiePolicy.STRICT:
        return float(1 + greater + equal)
    start = 1 + greater
    group = 1 + equal
    return start + (group - 1) / 2


@dataclass(frozen=True)
class KindMetrics:
    n: int
    mrr: float
    hits1: float
    hits5: float

    def to_json(self) -> dict:
        return {"n": self.n, "mrr": self.mrr, "hits1": self.hits1, "hits5": self.hits5}


@dataclass(frozen=True)
class EvalReport:
    """Per-positive ranks plus the aggregates derived from them."""

    ranks: tuple  # of (Triplet, rank)
    n_excluded: int
    tie_policy: TiePolicy

    @property
    def n(self) -> int:
        return len(self.ranks)

    @property
    def mr(self) -> float:
        return float(np.mean([r for _, r in self.ranks])) if self.ranks else float("nan")

    @property
    def mrr(self) -> float:
        return (
            float(np.mean([1.0 / r for _, r in self.ranks])) if self.ranks else float("nan")
        )

    def hits(self, k: int) -> float:
        if not self.ranks:
            return float("nan")
        return float(np.mean([1.0 if r <= k else 0.0 for _, r in self.ranks]))

    def per_kind(self) -> dict:
        out = {}
        for kind in RELATION_ORDER:
            rs = [r for t, r in self.ranks if t.relation == kind]
            if not rs:
                continue
            arr = np.array(rs)
            out[kind] = KindMetrics(
                n=len(rs),
                mrr=float(np.mean(1.0 / arr)),
                hits1=float(np.mean(arr <= 1)),
                hits5=float(np.mean(arr <= 5)),
            )
        return out

    def to_json(self) -> dict:
        return {
            "tie_policy": self.tie_policy.value,
            "n": self.n,
            "n_excluded": self.n_excluded,
            "mr": self.mr,
            "mrr": self.mrr,
            "hits1": self.hits(1),
            "hits5": self.hits(5),
            "per_kind": {k.value: m.to_json() for k, m in self.per_kind().items()},
            "ranks": [
                {
                    "problem": t.problem_id,
                    "relation": t.relation.value,
                    "target": t.target.token,
                    "rank": r,
                }
                for t, r in self.ranks
            ],
        }

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def evaluate(scorer, part, kb: KnowledgeBase, tie_policy: TiePolicy = TiePolicy.STRICT) -> EvalReport:
    """Rank every positive in the split part against its same-(problem,
    relation) negatives from the same part.

    Positives with no such negatives are excluded and counted.  ``scorer``
    maps (problem_id, relation, target) to a real score.
    """
    groups = {}
    for t in sorted(part, key=lambda t: t.key):
        groups.setdefault((t.problem_id, t.relation), []).append(t)
    ranks = []
    n_excluded = 0
    for key in sorted(groups, key=lambda k: (k[0], k[1].value)):
        triplets = groups[key]
        positives = [t for t in triplets if t.label == Label.POSITIVE]
        negatives = [t for t in triplets if t.label == Label.NEGATIVE]
        if not positives:
            continue
        if not negatives:
            n_excluded += len(positives)
            continue
        neg_scores = [scorer(t.problem_id, t.relation, t.target) for t in negatives]
        for pos in positives:
            pos_score = scorer(pos.problem_id, pos.relation, pos.target)
            ranks.append((pos, rank_one(pos_score, neg_scores, tie_policy)))
    return EvalReport(ranks=tuple(ranks), n_excluded=n_excluded, tie_policy=tie_policy)


def per_problem_report(report: EvalReport, kb: KnowledgeBase) -> dict:
    """(problem_id, kind) -> Hits@5 over that cell's positives; absent cells omitted."""
    cells = {}
    for t, r in report.ranks:
        cells.setdefault((t.problem_id, t.relation), []).append(r)
    return {
        key: float(np.mean([1.0 if r <= 5 else 0.0 for r in rs]))
        for key, rs in cells.items()
    }


def save_per_problem_csv(table: dict, kb: KnowledgeBase, path) -> None:
    problem_ids = sorted({pid for pid, _ in table})
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["problem_id", "name"] + [k.value for k in RELATION_ORDER])
        for pid in problem_ids:
            name = kb.problems[pid].name if pid in kb.problems else ""
            row = [pid, name]
            for kind in RELATION_ORDER:
                value = table.get((pid, kind))
                row.append("" if value is None else repr(value))
            writer.writerow(row)


@dataclass(frozen=True)
class FrequencyBin:
    log_lo: float
    log_hi: float
    n: int
    mrr: float
    hits5: float

    def to_json(self) -> dict:
        return {
            "log_lo": self.log_lo,
            "log_hi": self.log_hi,
            "n": self.n,
            "mrr": self.mrr,
            "hits5": self.hits5,
        }


def frequency_bin_report(report: EvalReport, store, n_bins: int = 5):
    """Metrics per equal-width bin of log target-occurrence count.

    Bins span the log-count range of the evaluated positives' targets; a
    target never seen in the encounter log counts as 1 occurrence so its
    logarithm is defined.  When every count is equal there is a single bin.
    """
    if not report.ranks:
        return []
    logs = np.array(
        [
            math.log(max(store.code_occurrences.get(t.target, 0), 1))
            for t, _ in report.ranks
        ]
    )
    ranks = np.array([r for _, r in report.ranks])
    lo, hi = float(logs.min()), float(logs.max())
    if hi == lo:
        return [
            FrequencyBin(
                log_lo=lo,
                log_hi=hi,
                n=len(ranks),
                mrr=float(np.mean(1.0 / ranks)),
                hits5=float(np.mean(ranks <= 5)),
            )
        ]
    width = (hi - lo) / n_bins
    idx = np.minimum(((logs - lo) / width).astype(int), n_bins - 1)
    out = []
    for b in range(n_bins):
        mask = idx == b
        rs = ranks[mask]
        out.append(
            FrequencyBin(
                log_lo=lo + b * width,
                log_hi=lo + (b + 1) * width,
                n=int(mask.sum()),
                mrr=float(np.mean(1.0 / rs)) if len(rs) else float("nan"),
                hits5=float(np.mean(rs <= 5)) if len(rs) else float("nan"),
            )
        )
    return out


def save_bins_csv(bins, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["log_lo", "log_hi", "n", "mrr", "hits5"])
        for b in bins:
            writer.writerow([repr(b.log_lo), repr(b.log_hi), b.n, repr(b.mrr), repr(b.hits5)])


def nearest_problems(params, problem_id: str, k: int = 5):
    """Top-k other problems by cosine similarity of problem embeddings."""
    from .embeddings import cosine

    i = params.problem_row(problem_id)
    query = params.problem_emb[i]
    sims = [
        (cosine(query, params.problem_emb[j]), pid)
        for j, pid in enumerate(params.problem_ids)
        if pid != problem_id
    ]
    sims.sort(key=lambda sp: (-sp[0], sp[1]))
    return [(pid, sim) for sim, pid in sims[:k]]


def cohen_kappa(labels_a, labels_b) -> float:
    """Chance-corrected agreement between two aligned binary label sequences."""
    a = [int(x) for x in labels_a]
    b = [int(x) for x in labels_b]
    if len(a) != len(b):
        raise EvalError(f"label sequences differ in length: {len(a)} vs {len(b)}")
    if not a:
        raise EvalError("empty label sequences")
    n = len(a)
    p_o = sum(1 for x, y in zip(a, b) if x == y) / n
    pa1 = sum(a) / n
    pb1 = sum(b) / n
    p_e = pa1 * pb1 + (1 - pa1) * (1 - pb1)
    if p_e == 1.0:
        return 1.0
    return (p_o - p_e) / (1 - p_e)
