/**
 * Wire types for the annotation service's JSON API.
 *
 * These mirror the server payloads field for field.  The client never
 * computes scores or reorders candidates on its own — ranking is entirely
 * the server's business, and every response carries a schema_version so
 * mismatched deployments fail loudly instead of quietly misrendering.
 */

export const SCHEMA_VERSION = "1";

export type Kind = "medication" | "procedure" | "lab";

export const KINDS: readonly Kind[] = ["medication", "procedure", "lab"];

/** {"system": "RXNORM", "id": "M000"} — token form is `${system}:${id}`. */
export interface CodeRef {
  system: string;
  id: string;
}

export interface ProblemSummary {
  id: string;
  name: string;
  definition: CodeRef[];
}

/** GET /problems */
export interface ProblemsResponse {
  schema_version: string;
  guideline: string;
  problems: ProblemSummary[];
}

/**
 * One row of GET /problems/{id}/candidates — exactly as served.  `score`
 * is the importance score in round 1 and the model score in round 2; the
 * client only displays it.
 */
export interface CandidateRow {
  target: CodeRef;
  token: string;
  display_name: string;
  kind: Kind;
  round: number;
  score: number;
}

/** GET /problems/{id}/candidates */
export interface CandidatesResponse {
  schema_version: string;
  problem: ProblemSummary;
  kind: Kind;
  round: number;
  candidates: CandidateRow[];
}

/** POST /annotations request body. */
export interface AnnotationBody {
  annotator_id: string;
  problem_id: string;
  relation: Kind;
  target: CodeRef;
  label: 0 | 1;
  round: number;
  event_id: string;
}

/** POST /annotations — "duplicate" means the event_id was already seen. */
export type AnnotationPostResponse =
  | {
      schema_version: string;
      status: "recorded";
      replaced_label: number | null;
      timestamp: string;
    }
  | { schema_version: string; status: "duplicate"; event_id: string };

/** One row of GET /annotations. */
export interface AnnotationRecord {
  timestamp: string;
  annotator_id: string;
  problem_id: string;
  relation: Kind;
  target: CodeRef;
  label: number;
  round: number;
  replaced_label: number | null;
}

export interface AnnotationsResponse {
  schema_version: string;
  annotations: AnnotationRecord[];
}

/** GET /agreement */
export interface AgreementResponse {
  schema_version: string;
  kappa: number;
  n_shared: number;
  conflicts: {
    problem_id: string;
    relation: Kind;
    target: string;
    labels: Record<string, number>;
  }[];
}

/** GET /status */
export interface StatusResponse {
  schema_version: string;
  n_problems: number;
  n_triplets: number;
  n_events: number;
  retrain: "idle" | "running" | "done" | "failed";
  retrain_error: string | null;
  model_loaded: boolean;
}

/** Error envelope the service uses for every non-2xx response. */
export interface ErrorResponse {
  schema_version: string;
  error: string;
  detail?: unknown;
}

/**
 * One unit of review work: a served candidate row plus the problem context
 * it was served under.  Both halves are kept verbatim so a POST built from
 * the item echoes the server's own identifiers back.
 */
export interface QueueItem {
  problem: ProblemSummary;
  candidate: CandidateRow;
}

export function codeToken(code: CodeRef): string {
  return `${code.system}:${code.id}`;
}
