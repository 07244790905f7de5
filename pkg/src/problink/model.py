"""Bilinear scoring model, analytic gradients, Adam, and the training loop.

The score of a (problem, relation, target) triplet is a three-way dot
product over embedding dimensions; a second bilinear term over provider
specialty vectors and a handful of engineered pair features are combined by
a linear head whose initialization makes the full score collapse to the
plain embedding score.  Training minimizes a margin ranking (hinge) loss
between annotated positives and negatives with Adam, supports freezing any
parameter group for ablations, and early-stops on validation mean rank.
"""

from __future__ import annotations

import itertools
import json
import warnings
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .embeddings import EmbeddingTable, InitWeighting, init_problem_embedding
from .features import N_PAIR_FEATURES, FeatureSet, PairFeatures
from .kb import (
    Code,
    KBError,
    KnowledgeBase,
    Label,
    RelationKind,
    RELATION_ORDER,
    Split,
    Triplet,
)

REL_INDEX = {kind: i for i, kind in enumerate(RELATION_ORDER)}


class ModelError(KBError):
    pass


class Ablation(Enum):
    FULL = "full"
    FROZEN = "frozen"
    PROBLEM_ONLY = "problem_only"
    RELATION_ONLY = "relation_only"
    RELATION_PLUS_TARGET = "relation_plus_target"


class NegativeStrategy(Enum):
    ANNOTATED = "annotated"
    RANDOM_VOCAB = "random_vocab"


@dataclass(frozen=True)
class FreezeFlags:
    """True means the group receives no updates (and zero gradients)."""

    problems: bool = False
    targets: bool = False
    relations: bool = False
    spec_relations: bool = False
    head: bool = False

    def all_frozen(self) -> bool:
        return all(
            (self.problems, self.targets, self.relations, self.spec_relations, self.head)
        )


def freeze_for(ablation: Ablation, use_features: bool) -> FreezeFlags:
    """Freeze-flag set for an ablation regime.

    The embedding-table groups follow the regime name.  With features in
    use, the per-relation specialty vectors thaw together with the relation
    embeddings (they are relation parameters), and the linear head trains in
    every regime except FROZEN — with the head pinned at its initialization
    the feature terms could never influence the score.  With features off
    both are unused and stay frozen.
    """
    no_feat = not use_features
    if ablation == Ablation.FROZEN:
        return FreezeFlags(True, True, True, True, True)
    if ablation == Ablation.FULL:
        return FreezeFlags(False, False, False, no_feat, no_feat)
    if ablation == Ablation.PROBLEM_ONLY:
        return FreezeFlags(False, True, True, True, no_feat)
    if ablation == Ablation.RELATION_ONLY:
        return FreezeFlags(True, True, False, no_feat, no_feat)
    if ablation == Ablation.RELATION_PLUS_TARGET:
        return FreezeFlags(True, False, False, no_feat, no_feat)
    raise ModelError(f"unknown ablation {ablation!r}")


@dataclass
class TrainConfig:
    margin: float = 1.0
    lr: float = 0.05
    batch_size: int = 64
    max_epochs: int = 200
    patience: int = 10
    negative_strategy: NegativeStrategy = NegativeStrategy.ANNOTATED
    negatives_per_positive: int = 4
    seed: int = 0
    ablation: Ablation = Ablation.FULL
    use_features: bool = True

    def __post_init__(self):
        if self.margin <= 0:
            raise ModelError(f"margin must be positive, got {self.margin}")
        if self.patience < 1:
            raise ModelError(f"patience must be >= 1, got {self.patience}")

    def to_json(self) -> dict:
        return {
            "margin": self.margin,
            "lr": self.lr,
            "batch_size": self.batch_size,
            "max_epochs": self.max_epochs,
            "patience": self.patience,
            "negative_strategy": self.negative_strategy.value,
            "negatives_per_positive": self.negatives_per_positive,
            "seed": self.seed,
            "ablation": self.ablation.value,
            "use_features": self.use_features,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TrainConfig":
        obj = dict(obj)
        obj["negative_strategy"] = NegativeStrategy(obj["negative_strategy"])
        obj["ablation"] = Ablation(obj["ablation"])
        return cls(**obj)


@dataclass
class ModelParams:
    """All trainable tables plus the fixed feature buffers they score against.

    ``spec_problems``/``spec_targets``/``pair_feats`` are data, not
    parameters: normalized specialty vectors and engineered features aligned
    with the embedding tables so batched scoring is pure array indexing.
    """

    problem_ids: tuple
    target_codes: tuple
    problem_emb: np.ndarray  # (P, d)
    target_emb: np.ndarray  # (T, d)
    relation_emb: np.ndarray  # (|relations|, d)
    spec_relation: np.ndarray  # (|relations|, m)
    head: np.ndarray  # (2 + n_features,)
    spec_problems: np.ndarray  # (P, m)
    spec_targets: np.ndarray  # (T, m)
    pair_feats: np.ndarray  # (P, T, n_features)
    freeze: FreezeFlags = field(default_factory=FreezeFlags)

    def __post_init__(self):
        self.problem_index = {pid: i for i, pid in enumerate(self.problem_ids)}
        self.target_index = {code: i for i, code in enumerate(self.target_codes)}
        for name in (
            "problem_emb", "target_emb", "relation_emb",
            "spec_relation", "head", "spec_problems", "spec_targets", "pair_feats",
        ):
            arr = np.asarray(getattr(self, name), dtype=float)
            if not np.all(np.isfinite(arr)):
                raise ModelError(f"non-finite values in {name}")
            setattr(self, name, arr)

    @property
    def dim(self) -> int:
        return self.problem_emb.shape[1]

    @property
    def spec_dim(self) -> int:
        return self.spec_relation.shape[1]

    @property
    def n_features(self) -> int:
        return len(self.head) - 2

    def copy(self) -> "ModelParams":
        return ModelParams(
            problem_ids=self.problem_ids,
            target_codes=self.target_codes,
            problem_emb=self.problem_emb.copy(),
            target_emb=self.target_emb.copy(),
            spec_relation=self.spec_relation.copy(),
            relation_emb=self.relation_emb.copy(),
            head=self.head.copy(),
            spec_problems=self.spec_problems,
            spec_targets=self.spec_targets,
            pair_feats=self.pair_feats,
            freeze=self.freeze,
        )

    def problem_row(self, problem_id: str) -> int:
        if problem_id not in self.problem_index:
            raise ModelError(f"no embedding for problem {problem_id!r}")
        return self.problem_index[problem_id]

    def target_row(self, target: Code) -> int:
        if target not in self.target_index:
            raise ModelError(f"no embedding for target {target.token}")
        return self.target_index[target]


def init_params(
    problems,
    target_codes,
    table: EmbeddingTable,
    features: FeatureSet,
    weighting: InitWeighting = InitWeighting.UNIFORM,
    code_frequencies=None,
    seed: int = 0,
    n_features: int = N_PAIR_FEATURES,
) -> ModelParams:
    """Fresh parameters: composed problem vectors, table-backed target vectors,
    all-ones relation vectors, and a head of (1, 0, ..., 0)."""
    problems = sorted(problems, key=lambda p: p.problem_id)
    target_codes = tuple(sorted(target_codes))
    rng = np.random.default_rng(seed)
    dim = table.dim

    problem_emb = np.stack(
        [
            init_problem_embedding(p, table, weighting, code_frequencies, rng)
            for p in problems
        ]
    )
    target_rows = []
    missing = []
    for code in target_codes:
        vec = table.get(code)
        if vec is None:
            missing.append(code.token)
            vec = rng.uniform(-0.5 / dim, 0.5 / dim, size=dim)
        target_rows.append(vec)
    if missing:
        warnings.warn(
            f"{len(missing)} target codes lack embeddings; initialized randomly "
            f"(first few: {missing[:3]})"
        )
    target_emb = np.stack(target_rows) if target_rows else np.zeros((0, dim))

    m = features.spec_dim
    spec_problems = np.stack(
        [FeatureSet.normalize_spec(features.spec_problem(p.problem_id)) for p in problems]
    ) if problems else np.zeros((0, m))
    spec_targets = np.stack(
        [FeatureSet.normalize_spec(features.spec_target(c)) for c in target_codes]
    ) if target_codes else np.zeros((0, m))
    pair_feats = np.zeros((len(problems), len(target_codes), n_features))
    for i, p in enumerate(problems):
        for j, c in enumerate(target_codes):
            pair_feats[i, j] = features.pair(p.problem_id, c).vector()

    return ModelParams(
        problem_ids=tuple(p.problem_id for p in problems),
        target_codes=target_codes,
        problem_emb=problem_emb,
        target_emb=target_emb,
        relation_emb=np.ones((len(RELATION_ORDER), dim)),
        spec_relation=np.ones((len(RELATION_ORDER), m)),
        head=np.concatenate([[1.0], np.zeros(1 + n_features)]),
        spec_problems=spec_problems,
        spec_targets=spec_targets,
        pair_feats=pair_feats,
    )


# ---------------------------------------------------------------- scoring


def score_emb(params: ModelParams, problem_id: str, relation: RelationKind, target: Code) -> float:
    """Three-way dot product of problem, relation, and target vectors."""
    es = params.problem_emb[params.problem_row(problem_id)]
    er = params.relation_emb[REL_INDEX[relation]]
    et = params.target_emb[params.target_row(target)]
    return float(np.sum(es * er * et))


def score_spec(params: ModelParams, spec_s: np.ndarray, relation: RelationKind, spec_t: np.ndarray) -> float:
    """Bilinear specialty term with a per-relation weight vector."""
    vr = params.spec_relation[REL_INDEX[relation]]
    spec_s, spec_t = np.asarray(spec_s, dtype=float), np.asarray(spec_t, dtype=float)
    if spec_s.shape != vr.shape or spec_t.shape != vr.shape:
        raise ModelError(
            f"specialty dimension mismatch: {spec_s.shape}, {spec_t.shape} vs {vr.shape}"
        )
    return float(np.sum(spec_s * vr * spec_t))


def score_full(
    params: ModelParams,
    problem_id: str,
    relation: RelationKind,
    target: Code,
    features: PairFeatures,
) -> float:
    """Linear head over [embedding score, specialty score, pair features]."""
    f = features.vector()
    if len(f) != params.n_features:
        raise ModelError(f"feature vector length {len(f)} != {params.n_features}")
    g_emb = score_emb(params, problem_id, relation, target)
    g_spec = score_spec(
        params,
        params.spec_problems[params.problem_row(problem_id)],
        relation,
        params.spec_targets[params.target_row(target)],
    )
    return float(params.head[0] * g_emb + params.head[1] * g_spec + params.head[2:] @ f)


def margin_loss(pos_score: float, neg_score: float, margin: float) -> float:
    """Hinge: max(0, margin - pos + neg)."""
    return max(0.0, margin - pos_score + neg_score)


def make_scorer(params: ModelParams, use_features: bool):
    """(problem_id, relation, target) -> score, matching the training objective."""

    def scorer(problem_id: str, relation: RelationKind, target: Code) -> float:
        if not use_features:
            return score_emb(params, problem_id, relation, target)
        i, j = params.problem_row(problem_id), params.target_row(target)
        pf_vec = params.pair_feats[i, j]
        g_emb = score_emb(params, problem_id, relation, target)
        g_spec = score_spec(
            params, params.spec_problems[i], relation, params.spec_targets[j]
        )
        return float(params.head[0] * g_emb + params.head[1] * g_spec + params.head[2:] @ pf_vec)

    return scorer


def _scores_idx(params: ModelParams, s, r, t, use_features: bool):
    es, er, et = params.problem_emb[s], params.relation_emb[r], params.target_emb[t]
    g_emb = np.einsum("bd,bd,bd->b", es, er, et)
    if not use_features:
        return g_emb, None, None
    vs, vr, vt = params.spec_problems[s], params.spec_relation[r], params.spec_targets[t]
    g_spec = np.einsum("bm,bm,bm->b", vs, vr, vt)
    f = params.pair_feats[s, t]
    total = params.head[0] * g_emb + params.head[1] * g_spec + f @ params.head[2:]
    return total, g_emb, g_spec


# --------------------------------------------------------------- gradients


@dataclass
class Grads:
    problem_emb: np.ndarray
    target_emb: np.ndarray
    relation_emb: np.ndarray
    spec_relation: np.ndarray
    head: np.ndarray

    GROUPS = ("problem_emb", "target_emb", "relation_emb", "spec_relation", "head")

    @classmethod
    def zeros_like(cls, params: ModelParams) -> "Grads":
        return cls(
            problem_emb=np.zeros_like(params.problem_emb),
            target_emb=np.zeros_like(params.target_emb),
            relation_emb=np.zeros_like(params.relation_emb),
            spec_relation=np.zeros_like(params.spec_relation),
            head=np.zeros_like(params.head),
        )


_FREEZE_OF_GROUP = {
    "problem_emb": "problems",
    "target_emb": "targets",
    "relation_emb": "relations",
    "spec_relation": "spec_relations",
    "head": "head",
}


def _triplet_indices(params: ModelParams, triplets) -> tuple:
    s = np.array([params.problem_row(t.problem_id) for t in triplets], dtype=int)
    r = np.array([REL_INDEX[t.relation] for t in triplets], dtype=int)
    t_ = np.array([params.target_row(t.target) for t in triplets], dtype=int)
    return s, r, t_


def gradients(params: ModelParams, batch, config: TrainConfig) -> Grads:
    """Analytic gradients of the mean hinge loss over (positive, negative) pairs.

    Frozen groups come back identically zero; a pair sitting exactly at the
    margin is treated as inactive.
    """
    if not batch:
        raise ModelError("gradient batch is empty")
    pos, neg = zip(*batch)
    ps, pr, pt = _triplet_indices(params, pos)
    ns, nr, nt = _triplet_indices(params, neg)
    return _gradients_idx(params, (ps, pr, pt), (ns, nr, nt), config)


def _gradients_idx(params: ModelParams, pos_idx, neg_idx, config: TrainConfig) -> Grads:
    use_features = config.use_features
    ps, pr, pt = pos_idx
    ns, nr, nt = neg_idx
    n_pairs = len(ps)
    pos_scores, pos_gemb, pos_gspec = _scores_idx(params, ps, pr, pt, use_features)
    neg_scores, neg_gemb, neg_gspec = _scores_idx(params, ns, nr, nt, use_features)
    active = (config.margin - pos_scores + neg_scores) > 0.0

    grads = Grads.zeros_like(params)
    if not np.any(active):
        return grads
    w_emb = params.head[0] if use_features else 1.0
    w_spec = params.head[1] if use_features else 0.0

    for sign, (s, r, t), gemb, gspec in (
        (-1.0, (ps, pr, pt), pos_gemb, pos_gspec),
        (+1.0, (ns, nr, nt), neg_gemb, neg_gspec),
    ):
        s, r, t = s[active], r[active], t[active]
        coef = sign / n_pairs
        es, er, et = params.problem_emb[s], params.relation_emb[r], params.target_emb[t]
        grad_s = coef * w_emb * er * et
        grad_t = coef * w_emb * er * es
        grad_r = coef * w_emb * es * et
        np.add.at(grads.problem_emb, s, grad_s)
        np.add.at(grads.target_emb, t, grad_t)
        np.add.at(grads.relation_emb, r, grad_r)
        if use_features:
            vs, vt = params.spec_problems[s], params.spec_targets[t]
            np.add.at(grads.spec_relation, r, coef * w_spec * vs * vt)
            f = params.pair_feats[s, t]
            grads.head[0] += coef * np.sum(gemb[active])
            grads.head[1] += coef * np.sum(gspec[active])
            grads.head[2:] += coef * f.sum(axis=0)

    for group in Grads.GROUPS:
        if getattr(params.freeze, _FREEZE_OF_GROUP[group]):
            getattr(grads, group).fill(0.0)
    return grads


# -------------------------------------------------------------------- Adam


@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0

    @classmethod
    def init(cls, params: ModelParams) -> "AdamState":
        zeros = Grads.zeros_like(params)
        return cls(
            m={g: getattr(zeros, g).copy() for g in Grads.GROUPS},
            v={g: getattr(zeros, g).copy() for g in Grads.GROUPS},
        )


def adam_step(
    params: ModelParams,
    grads: Grads,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One in-place Adam update with bias correction; frozen groups untouched."""
    state.t += 1
    for group in Grads.GROUPS:
        if getattr(params.freeze, _FREEZE_OF_GROUP[group]):
            continue
        g = getattr(grads, group)
        m, v = state.m[group], state.v[group]
        m *= beta1
        m += (1 - beta1) * g
        v *= beta2
        v += (1 - beta2) * g * g
        m_hat = m / (1 - beta1**state.t)
        v_hat = v / (1 - beta2**state.t)
        arr = getattr(params, group)
        arr -= lr * m_hat / (np.sqrt(v_hat) + eps)


# -------------------------------------------------------- negative sampling


def known_positive_targets(kb: KnowledgeBase, problem_id: str, relation: RelationKind):
    return {
        t.target
        for t in kb.triplets
        if t.problem_id == problem_id and t.relation == relation and t.label == Label.POSITIVE
    }


def sample_negatives(
    strategy: NegativeStrategy,
    kb: KnowledgeBase,
    vocabulary,
    positive: Triplet,
    n: int,
    rng,
    pool=None,
):
    """Negative triplets to pair with one positive.

    ANNOTATED draws from the annotated negatives sharing the positive's
    problem and relation (``pool`` restricts the source, e.g. to the training
    split); RANDOM_VOCAB draws codes uniformly from the kind's vocabulary,
    excluding every known positive target of that (problem, relation).
    """
    if strategy == NegativeStrategy.ANNOTATED:
        source = pool if pool is not None else kb.triplets
        group = [
            t
            for t in source
            if t.problem_id == positive.problem_id
            and t.relation == positive.relation
            and t.label == Label.NEGATIVE
        ]
        if not group:
            warnings.warn(
                f"no annotated negatives for ({positive.problem_id}, "
                f"{positive.relation.value}); positive skipped"
            )
            return []
        order = rng.permutation(len(group))
        return [group[order[i % len(group)]] for i in range(n)]

    kind_vocab = sorted(vocabulary.by_kind.get(positive.relation, frozenset()))
    exclude = known_positive_targets(kb, positive.problem_id, positive.relation)
    eligible = [c for c in kind_vocab if c not in exclude]
    if not eligible:
        warnings.warn(
            f"no eligible random negatives for ({positive.problem_id}, "
            f"{positive.relation.value}); positive skipped"
        )
        return []
    picks = rng.choice(len(eligible), size=n, replace=len(eligible) < n)
    return [
        replace(positive, target=eligible[int(i)], label=Label.NEGATIVE) for i in picks
    ]


# ----------------------------------------------------------------- training


@dataclass
class HistoryEntry:
    epoch: int
    train_loss: float | None
    val_mr: float
    val_mrr: float

    def to_json(self) -> dict:
        return {
            "epoch": self.epoch,
            "train_loss": self.train_loss,
            "val_mr": self.val_mr,
            "val_mrr": self.val_mrr,
        }


def _annotated_pairs(positives, neg_groups, rng):
    """Round-robin pairing: each positive gets one negative from its group."""
    cyclers = {}
    pairs = []
    for p in positives:
        key = (p.problem_id, p.relation)
        if key not in neg_groups:
            continue
        if key not in cyclers:
            group = neg_groups[key]
            order = rng.permutation(len(group))
            cyclers[key] = itertools.cycle(order)
        pairs.append((p, neg_groups[key][next(cyclers[key])]))
    return pairs


def train(
    kb: KnowledgeBase,
    split: Split,
    table: EmbeddingTable,
    features: FeatureSet,
    config: TrainConfig,
    params: ModelParams | None = None,
    weighting: InitWeighting = InitWeighting.UNIFORM,
    code_frequencies=None,
    vocabulary=None,
):
    """Fit the model on the training part, early-stopping on validation MR.

    Returns (best-validation-MR parameter snapshot, per-epoch history).  The
    epoch-0 history entry evaluates the initialization and is eligible as
    the best snapshot, so a run that never improves on its initialization
    hands back the initialization.
    """
    from . import evaluation

    train_triplets = sorted(split.train, key=lambda t: t.key)
    if not train_triplets:
        raise ModelError("training split is empty")
    positives = [t for t in train_triplets if t.label == Label.POSITIVE]
    neg_groups = {}
    for t in train_triplets:
        if t.label == Label.NEGATIVE:
            neg_groups.setdefault((t.problem_id, t.relation), []).append(t)

    if params is None:
        target_codes = {t.target for t in kb.triplets}
        params = init_params(
            kb.problems.values(),
            target_codes,
            table,
            features,
            weighting=weighting,
            code_frequencies=code_frequencies,
            seed=config.seed,
        )
    params.freeze = freeze_for(config.ablation, config.use_features)

    def val_metrics(p: ModelParams):
        scorer = make_scorer(p, config.use_features)
        report = evaluation.evaluate(
            scorer, split.validation, kb, evaluation.TiePolicy.STRICT
        )
        return report.mr, report.mrr

    val_mr, val_mrr = val_metrics(params)
    history = [HistoryEntry(epoch=0, train_loss=None, val_mr=val_mr, val_mrr=val_mrr)]
    best = params.copy()
    best_mr = val_mr
    if params.freeze.all_frozen():
        return best, history

    if config.negative_strategy == NegativeStrategy.ANNOTATED:
        orphans = {
            (p.problem_id, p.relation)
            for p in positives
            if (p.problem_id, p.relation) not in neg_groups
        }
        for key in sorted(orphans, key=lambda k: (k[0], k[1].value)):
            warnings.warn(
                f"no annotated negatives for ({key[0]}, {key[1].value}); "
                f"its positives are skipped during training"
            )

    if config.negative_strategy == NegativeStrategy.RANDOM_VOCAB and vocabulary is None:
        raise ModelError("RANDOM_VOCAB negative sampling requires a vocabulary")

    rng = np.random.default_rng(config.seed)
    state = AdamState.init(params)
    since_best = 0
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(positives))
        shuffled = [positives[i] for i in order]
        if config.negative_strategy == NegativeStrategy.ANNOTATED:
            pairs = _annotated_pairs(shuffled, neg_groups, rng)
        else:
            pairs = []
            for p in shuffled:
                negs = sample_negatives(
                    NegativeStrategy.RANDOM_VOCAB,
                    kb,
                    vocabulary,
                    p,
                    config.negatives_per_positive,
                    rng,
                )
                pairs.extend((p, ntrip) for ntrip in negs)
        if not pairs:
            raise ModelError("no trainable (positive, negative) pairs in the split")

        pos_all = [p for p, _ in pairs]
        neg_all = [nn for _, nn in pairs]
        ps, pr, pt = _triplet_indices(params, pos_all)
        ns, nr, nt = _triplet_indices(params, neg_all)

        loss_sum = 0.0
        for lo in range(0, len(pairs), config.batch_size):
            hi = min(lo + config.batch_size, len(pairs))
            sl = slice(lo, hi)
            pos_scores, _, _ = _scores_idx(params, ps[sl], pr[sl], pt[sl], config.use_features)
            neg_scores, _, _ = _scores_idx(params, ns[sl], nr[sl], nt[sl], config.use_features)
            loss_sum += float(
                np.maximum(0.0, config.margin - pos_scores + neg_scores).sum()
            )
            grads = _gradients_idx(
                params, (ps[sl], pr[sl], pt[sl]), (ns[sl], nr[sl], nt[sl]), config
            )
            adam_step(params, grads, state, lr=config.lr)

        val_mr, val_mrr = val_metrics(params)
        history.append(
            HistoryEntry(
                epoch=epoch,
                train_loss=loss_sum / len(pairs),
                val_mr=val_mr,
                val_mrr=val_mrr,
            )
        )
        if val_mr < best_mr:
            best_mr = val_mr
            best = params.copy()
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.patience:
                break
    return best, history


# ------------------------------------------------------------- persistence


def save_model(params: ModelParams, config: TrainConfig, history, path) -> None:
    """JSON checkpoint; floats round-trip exactly through repr."""
    obj = {
        "problem_ids": list(params.problem_ids),
        "target_codes": [c.token for c in params.target_codes],
        "problem_emb": params.problem_emb.tolist(),
        "target_emb": params.target_emb.tolist(),
        "relation_emb": params.relation_emb.tolist(),
        "spec_relation": params.spec_relation.tolist(),
        "head": params.head.tolist(),
        "spec_problems": params.spec_problems.tolist(),
        "spec_targets": params.spec_targets.tolist(),
        "pair_feats": params.pair_feats.tolist(),
        "freeze": {
            "problems": params.freeze.problems,
            "targets": params.freeze.targets,
            "relations": params.freeze.relations,
            "spec_relations": params.freeze.spec_relations,
            "head": params.freeze.head,
        },
        "config": config.to_json(),
        "history": [h.to_json() for h in history],
    }
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path):
    """Inverse of save_model: (params, config, history)."""
    with open(path) as fh:
        obj = json.load(fh)
    params = ModelParams(
        problem_ids=tuple(obj["problem_ids"]),
        target_codes=tuple(Code.from_token(tok) for tok in obj["target_codes"]),
        problem_emb=np.array(obj["problem_emb"], dtype=float),
        target_emb=np.array(obj["target_emb"], dtype=float),
        relation_emb=np.array(obj["relation_emb"], dtype=float),
        spec_relation=np.array(obj["spec_relation"], dtype=float),
        head=np.array(obj["head"], dtype=float),
        spec_problems=np.array(obj["spec_problems"], dtype=float),
        spec_targets=np.array(obj["spec_targets"], dtype=float),
        pair_feats=np.array(obj["pair_feats"], dtype=float),
        freeze=FreezeFlags(**obj["freeze"]),
    )
    config = TrainConfig.from_json(obj["config"])
    history = [HistoryEntry(**h) for h in obj["history"]]
    return params, config, history
