"""Command-line surface for the whole pipeline.

One subcommand per stage: data synthesis, ingest validation, vocabulary and
feature extraction, embedding training, candidate generation, model
initialization/training/evaluation, the rule-based baseline, round-2
suggestions, agreement, vocabulary intersection, and the annotation service.
All randomness flows from ``--seed``; identical inputs and seed give
byte-identical JSON artifacts.  ``--config FILE`` loads a JSON object whose
keys override the parsed flags; ``PROBLINK_DATA_DIR`` sets the base for
relative default paths.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import baselines, embeddings, evaluation, features, model, synth
from .encounters import EncounterStore, build_vocabulary, ingest
from .kb import (
    KBError,
    RelationKind,
    load_annotation_log,
    load_kb,
    split_by_problem,
    split_random,
)


def _data_dir() -> Path:
    return Path(os.environ.get("PROBLINK_DATA_DIR", "."))


def _emit(args, payload: dict, human: str) -> None:
    if args.json:
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        print(human)


def _kind(value: str) -> RelationKind:
    try:
        return RelationKind(value)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"unknown kind {value!r}; choose from "
            + ", ".join(k.value for k in RelationKind)
        ) from None


def _store(args) -> EncounterStore:
    return ingest(args.encounters, strict_links=not getattr(args, "lenient", False))


def _split(kb, args):
    if args.split == "problem":
        return split_by_problem(
            kb,
            n_val_problems=args.n_val_problems,
            n_test_problems=args.n_test_problems,
            seed=args.seed,
        )
    return split_random(kb, seed=args.seed)


def _part(split, name: str):
    return {"train": split.train, "validation": split.validation, "test": split.test}[name]


def _add_split_args(sub) -> None:
    sub.add_argument("--split", choices=["random", "problem"], default="random")
    sub.add_argument("--n-val-problems", type=int, default=5)
    sub.add_argument("--n-test-problems", type=int, default=5)


# ----------------------------------------------------------- subcommands


def cmd_synth(args) -> int:
    spec = synth.PlantSpec(
        n_problems=args.n_problems,
        n_targets_per_kind=args.n_targets_per_kind,
        n_patients=args.n_patients,
        p_in=args.p_in,
        p_out=args.p_out,
        seed=args.seed,
        n_negatives_per_kind=args.n_negatives_per_kind,
        explicit_link_fraction=args.explicit_link_fraction,
    )
    enc, kb, truth = synth.generate(spec, args.out)
    _emit(
        args,
        {"encounters": str(enc), "kb": str(kb), "truth": str(truth)},
        f"wrote {enc}\nwrote {kb}\nwrote {truth}",
    )
    return 0


def cmd_ingest(args) -> int:
    store = _store(args)
    by_kind = {
        kind.value: len({c for c, k in store.code_kind.items() if k == kind})
        for kind in RelationKind
    }
    payload = {
        "encounters": len(store.encounters),
        "patients": len(store.by_patient),
        "diagnosis_codes": len(store.diagnosis_occurrences),
        "order_codes_by_kind": by_kind,
    }
    _emit(
        args,
        payload,
        f"{payload['encounters']} encounters, {payload['patients']} patients, "
        f"{payload['diagnosis_codes']} diagnosis codes, orders by kind {by_kind}",
    )
    return 0


def cmd_vocab(args) -> int:
    store = _store(args)
    vocab = build_vocabulary(store, min_count=args.min_count)
    obj = {
        "min_count": vocab.min_count,
        "diagnoses": sorted(c.token for c in vocab.diagnoses),
        **{
            kind.value: sorted(c.token for c in vocab.by_kind.get(kind, frozenset()))
            for kind in RelationKind
        },
    }
    with open(args.out, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _emit(
        args,
        {"out": str(args.out), "sizes": {k: len(v) for k, v in obj.items() if k != "min_count"}},
        f"wrote {args.out}",
    )
    return 0


def cmd_features(args) -> int:
    store = _store(args)
    kb = load_kb(args.kb)
    vocab = build_vocabulary(store, min_count=args.min_count)
    fs = features.build_features(
        store,
        kb.problems.values(),
        vocab,
        specialty_n=args.specialties,
        threads=args.threads,
    )
    fs.save(args.out)
    _emit(args, {"out": str(args.out)}, f"wrote feature cache to {args.out}")
    return 0


def cmd_train_embeddings(args) -> int:
    store = _store(args)
    table = embeddings.train_skipgram(
        store,
        dim=args.dim,
        epochs=args.epochs,
        neg_samples=args.neg_samples,
        lr=args.lr,
        seed=args.seed,
        threads=args.threads,
    )
    embeddings.save_embeddings(table, args.out)
    _emit(
        args,
        {"out": str(args.out), "vectors": len(table), "dim": table.dim},
        f"wrote {len(table)} {table.dim}-dim vectors to {args.out}",
    )
    return 0


def cmd_candidates(args) -> int:
    store = _store(args)
    kb = load_kb(args.kb)
    if args.problem not in kb.problems:
        raise KBError(f"unknown problem {args.problem!r}")
    problem = kb.problems[args.problem]
    vocab = build_vocabulary(store, min_count=args.min_count)
    exclude = (
        kb.annotated_targets(args.problem, args.kind)
        if args.exclude_annotated
        else frozenset()
    )

    def scorer(p, code):
        return features.importance_score(store, p, code)

    ranked = features.candidate_list(
        scorer, problem, args.kind, vocab, args.top_n, exclude
    )
    payload = [
        {"target": c.token, "score": features.importance_score(store, problem, c)}
        for c in ranked
    ]
    _emit(
        args,
        {"problem": args.problem, "kind": args.kind.value, "candidates": payload},
        "\n".join(f"{row['target']}\t{row['score']:.4f}" for row in payload),
    )
    return 0


def cmd_init_model(args) -> int:
    kb = load_kb(args.kb)
    store = _store(args)
    vocab = build_vocabulary(store, min_count=args.min_count)
    fs = features.FeatureSet.load(args.features)
    table = embeddings.load_embeddings(args.embeddings, args.dim)
    if args.external:
        external = embeddings.load_embeddings(args.external, args.external_dim)
        table = embeddings.combine_tables(table, external, k=args.knn_k)
    weighting = embeddings.InitWeighting(args.weighting)
    frequencies = dict(store.diagnosis_occurrences)
    target_codes = set(vocab.all_targets) | {t.target for t in kb.triplets}
    params = model.init_params(
        kb.problems.values(),
        target_codes,
        table,
        fs,
        weighting=weighting,
        code_frequencies=frequencies,
        seed=args.seed,
    )
    config = model.TrainConfig(seed=args.seed)
    model.save_model(params, config, [], args.out)
    _emit(
        args,
        {"out": str(args.out), "problems": len(params.problem_ids), "targets": len(params.target_codes)},
        f"wrote initialized model ({len(params.problem_ids)} problems, "
        f"{len(params.target_codes)} targets) to {args.out}",
    )
    return 0


def _train_config(args) -> model.TrainConfig:
    return model.TrainConfig(
        margin=args.margin,
        lr=args.lr,
        batch_size=args.batch_size,
        max_epochs=args.max_epochs,
        patience=args.patience,
        negative_strategy=model.NegativeStrategy(args.strategy),
        negatives_per_positive=args.negatives_per_positive,
        seed=args.seed,
        ablation=model.Ablation(args.ablation),
        use_features=not args.no_features,
    )


def cmd_train(args) -> int:
    kb = load_kb(args.kb)
    split = _split(kb, args)
    fs = features.FeatureSet.load(args.features)
    config = _train_config(args)
    vocabulary = None
    if args.encounters:
        store = _store(args)
        vocabulary = build_vocabulary(store, min_count=args.min_count)
    if args.model:
        params, _, _ = model.load_model(args.model)
        table = None
        best, history = model.train(
            kb, split, table, fs, config, params=params, vocabulary=vocabulary
        )
    else:
        if not args.embeddings:
            raise KBError("train needs --model or --embeddings")
        table = embeddings.load_embeddings(args.embeddings, args.dim)
        best, history = model.train(kb, split, table, fs, config, vocabulary=vocabulary)
    model.save_model(best, config, history, args.out)
    last = history[-1]
    _emit(
        args,
        {
            "out": str(args.out),
            "epochs": last.epoch,
            "best_val_mr": min(h.val_mr for h in history),
            "final_val_mrr": last.val_mrr,
        },
        f"trained {last.epoch} epochs; best val MR "
        f"{min(h.val_mr for h in history):.3f}; wrote {args.out}",
    )
    return 0


def _report_payload(report: evaluation.EvalReport) -> dict:
    obj = report.to_json()
    del obj["ranks"]
    return obj


def cmd_eval(args) -> int:
    kb = load_kb(args.kb)
    split = _split(kb, args)
    part = _part(split, args.part)
    params, config, _ = model.load_model(args.model)
    use_features = config.use_features and not args.no_features
    scorer = model.make_scorer(params, use_features)
    policy = evaluation.TiePolicy(args.tie)
    report = evaluation.evaluate(scorer, part, kb, policy)
    if args.report:
        report.save(args.report)
    if args.per_problem:
        table = evaluation.per_problem_report(report, kb)
        evaluation.save_per_problem_csv(table, kb, args.per_problem)
    if args.bins:
        if not args.encounters:
            raise KBError("--bins needs --encounters for occurrence counts")
        store = _store(args)
        bins = evaluation.frequency_bin_report(report, store, n_bins=args.n_bins)
        evaluation.save_bins_csv(bins, args.bins)
    payload = _report_payload(report)
    _emit(
        args,
        payload,
        f"{args.part}: n={report.n} (excluded {report.n_excluded})  "
        f"MR {report.mr:.3f}  MRR {report.mrr:.3f}  "
        f"H@1 {report.hits(1):.3f}  H@5 {report.hits(5):.3f}",
    )
    return 0


def cmd_baseline_eval(args) -> int:
    kb = load_kb(args.kb)
    split = _split(kb, args)
    part = _part(split, args.part)
    maps = baselines.load_ontology_maps(args.med_map, args.hierarchy, args.chapters)
    supported = baselines.supported_part(maps, part)
    skipped = len(part) - len(supported)
    scorer = baselines.baseline_scorer(maps, kb)
    report = evaluation.evaluate(
        scorer, supported, kb, evaluation.TiePolicy(args.tie)
    )
    meds = {
        t.target for t in kb.triplets if t.relation == RelationKind.MEDICATION
    }
    coverage = baselines.med_coverage(maps, meds, kb.problems.values())
    if args.report:
        report.save(args.report)
    payload = {
        **_report_payload(report),
        "skipped_lab_triplets": skipped,
        "med_coverage": coverage.to_json(),
    }
    _emit(
        args,
        payload,
        f"{args.part}: n={report.n} (skipped {skipped} lab triplets)  "
        f"MR {report.mr:.3f}  MRR {report.mrr:.3f}  H@5 {report.hits(5):.3f}  "
        f"med map coverage {coverage.mapped_fraction:.0%} mapped / "
        f"{coverage.matching_fraction:.0%} matching",
    )
    return 0


def cmd_suggest(args) -> int:
    kb = load_kb(args.kb)
    if args.problem not in kb.problems:
        raise KBError(f"unknown problem {args.problem!r}")
    store = _store(args)
    vocab = build_vocabulary(store, min_count=args.min_count)
    params, config, _ = model.load_model(args.model)
    scorer = model.make_scorer(params, config.use_features)
    exclude = (
        frozenset()
        if args.include_annotated
        else kb.annotated_targets(args.problem, args.kind)
    )
    eligible = sorted(
        c
        for c in vocab.by_kind.get(args.kind, frozenset())
        if c in params.target_index and c not in exclude
    )
    scored = sorted(
        ((scorer(args.problem, args.kind, c), c) for c in eligible),
        key=lambda sc: (-sc[0], sc[1].system.value, sc[1].id),
    )[: args.top_n]
    payload = [{"target": c.token, "score": s} for s, c in scored]
    _emit(
        args,
        {"problem": args.problem, "kind": args.kind.value, "suggestions": payload},
        "\n".join(f"{row['target']}\t{row['score']:.4f}" for row in payload),
    )
    return 0


def cmd_kappa(args) -> int:
    def latest_labels(path):
        labels = {}
        for event in load_annotation_log(path):
            labels[event.triplet.key] = int(event.triplet.label)
        return labels

    a, b = latest_labels(args.a), latest_labels(args.b)
    shared = sorted(set(a) & set(b), key=lambda k: (k[0], k[1].value, k[2]))
    if not shared:
        raise KBError("no shared annotated keys between the two files")
    kappa = evaluation.cohen_kappa([a[k] for k in shared], [b[k] for k in shared])
    _emit(args, {"kappa": kappa, "n_shared": len(shared)}, f"{kappa}")
    return 0


def cmd_intersect(args) -> int:
    store = _store(args)
    vocab = build_vocabulary(store, min_count=args.min_count)
    external = embeddings.load_embeddings(args.external, args.external_dim)
    rows = embeddings.vocab_intersection(vocab, external)
    embeddings.save_intersection_report(rows, args.out)
    payload = {
        row.kind.value: {
            "internal": row.internal_count,
            "external": row.external_count,
            "present": row.present_count,
            "fraction": row.fraction,
        }
        for row in rows
    }
    _emit(
        args,
        payload,
        "\n".join(
            f"{row.kind.value}: {row.present_count}/{row.internal_count} "
            f"({row.fraction:.0%}) covered by external table"
            for row in rows
        ),
    )
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import ServiceState, create_app

    state = ServiceState(
        kb_path=args.kb,
        encounters_path=args.encounters,
        features_dir=args.features,
        model_path=args.model,
        events_path=args.events,
        seed=args.seed,
    )
    app = create_app(state)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


# -------------------------------------------------------------- arg parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="problink",
        description="Problem-to-order relevance pipeline: synthesize or ingest "
        "encounter data, mine features, train embeddings and the ranking "
        "model, evaluate, and serve the annotation loop.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    data = _data_dir()

    def add(name, fn, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.set_defaults(fn=fn)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--json", action="store_true", help="machine-readable output")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--config", type=Path, default=None,
                       help="JSON file whose keys override these flags")
        return p

    p = add("synth", cmd_synth, help="generate a planted synthetic dataset")
    p.add_argument("--out", type=Path, default=data / "synth")
    p.add_argument("--n-problems", type=int, default=20)
    p.add_argument("--n-targets-per-kind", type=int, default=60)
    p.add_argument("--n-patients", type=int, default=500)
    p.add_argument("--p-in", type=float, default=0.9)
    p.add_argument("--p-out", type=float, default=0.05)
    p.add_argument("--n-negatives-per-kind", type=int, default=40)
    p.add_argument("--explicit-link-fraction", type=float, default=0.5)

    def enc_arg(p):
        p.add_argument("--encounters", type=Path, required=True)
        p.add_argument("--lenient", action="store_true",
                       help="downgrade bad diagnosis links to warnings")
        p.add_argument("--min-count", type=int, default=5)

    p = add("ingest", cmd_ingest, help="validate an encounter log and print stats")
    enc_arg(p)

    p = add("vocab", cmd_vocab, help="build the per-kind code vocabulary")
    enc_arg(p)
    p.add_argument("--out", type=Path, default=data / "vocab.json")

    p = add("features", cmd_features, help="compute the pair-feature cache")
    enc_arg(p)
    p.add_argument("--kb", type=Path, required=True)
    p.add_argument("--out", type=Path, default=data / "features")
    p.add_argument("--specialties", type=int, default=24)

    p = add("train-embeddings", cmd_train_embeddings,
            help="train site-specific code vectors")
    enc_arg(p)
    p.add_argument("--out", type=Path, default=data / "embeddings.txt")
    p.add_argument("--dim", type=int, default=100)
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--neg-samples", type=int, default=5)
    p.add_argument("--lr", type=float, default=0.025)

    p = add("candidates", cmd_candidates,
            help="round-1 candidates by importance score")
    enc_arg(p)
    p.add_argument("--kb", type=Path, required=True)
    p.add_argument("--problem", required=True)
    p.add_argument("--kind", type=_kind, required=True)
    p.add_argument("--top-n", type=int, default=50)
    p.add_argument("--exclude-annotated", action="store_true")

    p = add("init-model", cmd_init_model, help="initialize model parameters")
    enc_arg(p)
    p.add_argument("--kb", type=Path, required=True)
    p.add_argument("--features", type=Path, required=True)
    p.add_argument("--embeddings", type=Path, required=True)
    p.add_argument("--dim", type=int, default=100)
    p.add_argument("--external", type=Path, default=None)
    p.add_argument("--external-dim", type=int, default=300)
    p.add_argument("--knn-k", type=int, default=5)
    p.add_argument("--weighting", choices=["uniform", "frequency"], default="uniform")
    p.add_argument("--out", type=Path, default=data / "model.json")

    p = add("train", cmd_train, help="train the ranking model")
    p.add_argument("--kb", type=Path, required=True)
    p.add_argument("--features", type=Path, required=True)
    p.add_argument("--model", type=Path, default=None,
                   help="initialized checkpoint (else --embeddings)")
    p.add_argument("--embeddings", type=Path, default=None)
    p.add_argument("--dim", type=int, default=100)
    p.add_argument("--encounters", type=Path, default=None)
    p.add_argument("--lenient", action="store_true")
    p.add_argument("--min-count", type=int, default=5)
    p.add_argument("--out", type=Path, default=data / "trained.json")
    _add_split_args(p)
    p.add_argument("--margin", type=float, default=1.0)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--max-epochs", type=int, default=200)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--strategy", choices=[s.value for s in model.NegativeStrategy],
                   default="annotated")
    p.add_argument("--negatives-per-positive", type=int, default=4)
    p.add_argument("--ablation", choices=[a.value for a in model.Ablation],
                   default="full")
    p.add_argument("--no-features", action="store_true")

    p = add("eval", cmd_eval, help="rank a split part and report metrics")
    p.add_argument("--kb", type=Path, required=True)
    p.add_argument("--model", type=Path, required=True)
    _add_split_args(p)
    p.add_argument("--part", choices=["train", "validation", "test"], default="test")
    p.add_argument("--tie", choices=[t.value for t in evaluation.TiePolicy],
                   default="strict")
    p.add_argument("--no-features", action="store_true")
    p.add_argument("--report", type=Path, default=None)
    p.add_argument("--per-problem", type=Path, default=None)
    p.add_argument("--bins", type=Path, default=None)
    p.add_argument("--n-bins", type=int, default=5)
    p.add_argument("--encounters", type=Path, default=None)
    p.add_argument("--lenient", action="store_true")

    p = add("baseline-eval", cmd_baseline_eval,
            help="evaluate the rule-based relevance baseline")
    p.add_argument("--kb", type=Path, required=True)
    p.add_argument("--med-map", type=Path, required=True)
    p.add_argument("--hierarchy", type=Path, required=True)
    p.add_argument("--chapters", type=Path, required=True)
    _add_split_args(p)
    p.add_argument("--part", choices=["train", "validation", "test"], default="test")
    p.add_argument("--tie", choices=[t.value for t in evaluation.TiePolicy],
                   default="median")
    p.add_argument("--report", type=Path, default=None)

    p = add("suggest", cmd_suggest, help="round-2 suggestions from a trained model")
    enc_arg(p)
    p.add_argument("--kb", type=Path, required=True)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--problem", required=True)
    p.add_argument("--kind", type=_kind, required=True)
    p.add_argument("--top-n", type=int, default=20)
    p.add_argument("--include-annotated", action="store_true")

    p = add("kappa", cmd_kappa, help="agreement between two annotation logs")
    p.add_argument("--a", type=Path, required=True)
    p.add_argument("--b", type=Path, required=True)

    p = add("intersect", cmd_intersect,
            help="overlap between site vocabulary and an external table")
    enc_arg(p)
    p.add_argument("--external", type=Path, required=True)
    p.add_argument("--external-dim", type=int, default=300)
    p.add_argument("--out", type=Path, default=data / "intersection.csv")

    p = add("serve", cmd_serve, help="run the annotation HTTP service")
    p.add_argument("--kb", type=Path, required=True)
    p.add_argument("--encounters", type=Path, required=True)
    p.add_argument("--features", type=Path, required=True)
    p.add_argument("--model", type=Path, default=None)
    p.add_argument("--events", type=Path, default=data / "annotations.jsonl")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)

    return parser


def _apply_config(args) -> None:
    if not getattr(args, "config", None):
        return
    with open(args.config) as fh:
        overrides = json.load(fh)
    for key, value in overrides.items():
        setattr(args, key.replace("-", "_"), value)


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_config(args)
        np.random.seed(args.seed)
        return args.fn(args)
    except (KBError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())
