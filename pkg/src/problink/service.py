"""HTTP service for the human annotation loop.

Serves ranked candidates per problem (importance-score order for round 1,
model order for round 2), records 0/1 judgments into an append-only JSONL
event log that is the source of truth — restarting the service and
replaying the log reconstructs the same knowledge base — reports
inter-annotator agreement, and retrains the model in a background thread
with an atomic swap.  Every JSON response carries a schema_version field.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from pathlib import Path

from fastapi import FastAPI, HTTPException, Query, Request
from fastapi.encoders import jsonable_encoder
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import evaluation, model as model_mod
from .encounters import build_vocabulary, ingest
from .features import FeatureSet, importance_score
from .kb import (
    Code,
    KBError,
    Label,
    RelationKind,
    Triplet,
    add_annotation,
    append_audit_log,
    load_annotation_log,
    load_kb,
    replay_annotations,
    split_random,
)

SCHEMA_VERSION = "1"

DEFAULT_GUIDELINE = (
    "Score each suggested item 1 if a clinician managing this problem would "
    "want it grouped under the problem in the chart — an order they would "
    "plausibly place, review, or monitor for this problem — and 0 if it is "
    "unrelated to managing the problem. Judge relevance to the problem "
    "itself, not how common the item is; when unsure, answer 0."
)

ROUND1_TOP_N = 50
ROUND2_TOP_N = 20


@dataclass
class ServiceState:
    """Paths plus the mutable in-memory artifacts behind the endpoints."""

    kb_path: Path
    encounters_path: Path
    features_dir: Path
    events_path: Path
    model_path: Path | None = None
    seed: int = 0
    guideline: str = DEFAULT_GUIDELINE
    min_count: int = 5

    def __post_init__(self):
        self.lock = threading.Lock()
        self.retrain_status = "idle"
        self.retrain_error: str | None = None
        self.seen_event_ids: set = set()
        self.importance_cache: dict = {}
        self.store = ingest(self.encounters_path)
        self.vocabulary = build_vocabulary(self.store, min_count=self.min_count)
        self.features: FeatureSet = FeatureSet.load(self.features_dir)
        kb = load_kb(self.kb_path)
        if Path(self.events_path).exists():
            kb = replay_annotations(kb, load_annotation_log(self.events_path))
        self.kb = kb
        self.n_events = (
            len(load_annotation_log(self.events_path))
            if Path(self.events_path).exists()
            else 0
        )
        if self.model_path is not None and Path(self.model_path).exists():
            self.params, self.train_config, _ = model_mod.load_model(self.model_path)
        else:
            self.params, self.train_config = None, model_mod.TrainConfig(seed=self.seed)


class AnnotationBody(BaseModel):
    annotator_id: str
    problem_id: str
    relation: str
    target: dict = Field(..., description='{"system": ..., "id": ...}')
    label: int = Field(..., ge=0, le=1)
    round: int = Field(1, ge=1)
    event_id: str | None = None


def _payload(obj: dict) -> dict:
    return {"schema_version": SCHEMA_VERSION, **obj}


def _round1_scores(state: ServiceState, problem_id: str, kind: RelationKind):
    key = (problem_id, kind)
    if key not in state.importance_cache:
        problem = state.kb.problems[problem_id]
        codes = sorted(state.vocabulary.by_kind.get(kind, frozenset()))
        state.importance_cache[key] = {
            code: importance_score(state.store, problem, code) for code in codes
        }
    return state.importance_cache[key]


def create_app(state: ServiceState) -> FastAPI:
    app = FastAPI(title="problem-link annotation service")
    # The browser UI is served separately during development; annotator
    # identity is just a field in the body, so open CORS gives up nothing.
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    @app.exception_handler(HTTPException)
    async def _http_error(request: Request, exc: HTTPException):
        return JSONResponse(
            status_code=exc.status_code,
            content=_payload({"error": exc.detail}),
        )

    @app.exception_handler(RequestValidationError)
    async def _body_error(request: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=422,
            content=_payload(
                {"error": "invalid request", "detail": jsonable_encoder(exc.errors())}
            ),
        )

    def parse_kind(kind: str) -> RelationKind:
        try:
            return RelationKind(kind)
        except ValueError:
            raise HTTPException(422, f"unknown kind {kind!r}") from None

    @app.get("/problems")
    def problems():
        rows = [
            {
                "id": p.problem_id,
                "name": p.name,
                "definition": [c.to_json() for c in sorted(p.definition)],
            }
            for p in sorted(state.kb.problems.values(), key=lambda p: p.problem_id)
        ]
        return _payload({"guideline": state.guideline, "problems": rows})

    @app.get("/problems/{problem_id}/candidates")
    def candidates(
        problem_id: str,
        kind: str = Query(...),
        round: int = Query(1, ge=1, le=2),
        top_n: int | None = Query(None, ge=1),
    ):
        if problem_id not in state.kb.problems:
            raise HTTPException(404, f"unknown problem {problem_id!r}")
        rel = parse_kind(kind)
        annotated = state.kb.annotated_targets(problem_id, rel)
        if round == 1:
            n = top_n or ROUND1_TOP_N
            scores = _round1_scores(state, problem_id, rel)
            eligible = [c for c in scores if c not in annotated]
            ranked = sorted(
                eligible, key=lambda c: (-scores[c], c.system.value, c.id)
            )[:n]
            rows = [
                {
                    "target": c.to_json(),
                    "token": c.token,
                    "display_name": c.token,
                    "kind": rel.value,
                    "round": 1,
                    "score": scores[c],
                }
                for c in ranked
            ]
        else:
            if state.params is None:
                raise HTTPException(409, "no model loaded; round-2 needs one")
            n = top_n or ROUND2_TOP_N
            scorer = model_mod.make_scorer(state.params, state.train_config.use_features)
            eligible = sorted(
                c
                for c in state.vocabulary.by_kind.get(rel, frozenset())
                if c in state.params.target_index and c not in annotated
            )
            scored = sorted(
                ((scorer(problem_id, rel, c), c) for c in eligible),
                key=lambda sc: (-sc[0], sc[1].system.value, sc[1].id),
            )[:n]
            rows = [
                {
                    "target": c.to_json(),
                    "token": c.token,
                    "display_name": c.token,
                    "kind": rel.value,
                    "round": 2,
                    "score": s,
                }
                for s, c in scored
            ]
        problem = state.kb.problems[problem_id]
        return _payload(
            {
                "problem": {
                    "id": problem.problem_id,
                    "name": problem.name,
                    "definition": [c.to_json() for c in sorted(problem.definition)],
                },
                "kind": rel.value,
                "round": round,
                "candidates": rows,
            }
        )

    @app.post("/annotations", status_code=201)
    def post_annotation(body: AnnotationBody):
        rel = parse_kind(body.relation)
        try:
            target = Code.from_json(body.target)
        except (KBError, KeyError, TypeError) as exc:
            raise HTTPException(422, f"bad target: {exc}") from None
        triplet = Triplet(
            problem_id=body.problem_id,
            relation=rel,
            target=target,
            label=Label(body.label),
            round=body.round,
        )
        with state.lock:
            if body.event_id is not None and body.event_id in state.seen_event_ids:
                return _payload({"status": "duplicate", "event_id": body.event_id})
            if body.problem_id not in state.kb.problems:
                raise HTTPException(404, f"unknown problem {body.problem_id!r}")
            try:
                new_kb = add_annotation(
                    state.kb,
                    triplet,
                    vocabulary=state.vocabulary,
                    annotator=body.annotator_id,
                )
            except KBError as exc:
                raise HTTPException(422, str(exc)) from None
            entry = new_kb.audit[-1]
            append_audit_log(state.events_path, [entry])
            state.kb = new_kb
            state.n_events += 1
            if body.event_id is not None:
                state.seen_event_ids.add(body.event_id)
        return _payload(
            {
                "status": "recorded",
                "replaced_label": None
                if entry.replaced_label is None
                else int(entry.replaced_label),
                "timestamp": entry.timestamp,
            }
        )

    @app.get("/annotations")
    def annotations(annotator: str | None = Query(None)):
        events = [
            e
            for e in state.kb.audit
            if annotator is None or e.annotator == annotator
        ]
        return _payload({"annotations": [e.to_json() for e in events]})

    @app.get("/agreement")
    def agreement(a: str = Query(...), b: str = Query(...)):
        def latest(annotator: str) -> dict:
            labels = {}
            for e in state.kb.audit:
                if e.annotator == annotator:
                    labels[e.triplet.key] = int(e.triplet.label)
            return labels

        la, lb = latest(a), latest(b)
        shared = sorted(set(la) & set(lb), key=lambda k: (k[0], k[1].value, k[2]))
        if not shared:
            raise HTTPException(400, f"annotators {a!r} and {b!r} share no annotated keys")
        kappa = evaluation.cohen_kappa(
            [la[k] for k in shared], [lb[k] for k in shared]
        )
        conflicts = [
            {
                "problem_id": k[0],
                "relation": k[1].value,
                "target": k[2].token,
                "labels": {a: la[k], b: lb[k]},
            }
            for k in shared
            if la[k] != lb[k]
        ]
        return _payload({"kappa": kappa, "n_shared": len(shared), "conflicts": conflicts})

    def _retrain_worker(kb_snapshot, params_snapshot):
        try:
            split = split_random(kb_snapshot, seed=state.train_config.seed)
            best, _ = model_mod.train(
                kb_snapshot,
                split,
                None,
                state.features,
                state.train_config,
                params=params_snapshot,
                vocabulary=state.vocabulary,
            )
            with state.lock:
                state.params = best
                state.retrain_status = "done"
        except Exception as exc:  # surface, never crash the server thread
            with state.lock:
                state.retrain_status = "failed"
                state.retrain_error = str(exc)

    @app.post("/retrain", status_code=202)
    def retrain():
        with state.lock:
            if state.retrain_status == "running":
                raise HTTPException(409, "a retraining run is already in progress")
            if state.params is None:
                raise HTTPException(409, "no model loaded; initialize one first")
            state.retrain_status = "running"
            state.retrain_error = None
            kb_snapshot = state.kb
            params_snapshot = state.params.copy()
        thread = threading.Thread(
            target=_retrain_worker, args=(kb_snapshot, params_snapshot), daemon=True
        )
        thread.start()
        return _payload({"status": "started"})

    @app.get("/status")
    def status():
        with state.lock:
            return _payload(
                {
                    "n_problems": len(state.kb.problems),
                    "n_triplets": len(state.kb.triplets),
                    "n_events": state.n_events,
                    "retrain": state.retrain_status,
                    "retrain_error": state.retrain_error,
                    "model_loaded": state.params is not None,
                }
            )

    return app
