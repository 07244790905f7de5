/**
 * Typed fetch client for the annotation service.
 *
 * Reads are plain GETs.  The annotation write path is where the care goes:
 * every POST carries a client-generated event_id, and retries resend the
 * identical body, so a request that died on the wire after the server
 * recorded it collapses to a "duplicate" response instead of a double
 * write.  Server-side errors (5xx) and network failures are retried with
 * exponential backoff; client-side errors (4xx) are not, because resending
 * an invalid body cannot fix it.
 */

import {
  AgreementResponse,
  AnnotationBody,
  AnnotationPostResponse,
  AnnotationsResponse,
  CandidatesResponse,
  ErrorResponse,
  Kind,
  ProblemsResponse,
  SCHEMA_VERSION,
  StatusResponse,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly payload: ErrorResponse | null,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }

  /** True when retrying the same request can plausibly succeed. */
  get transient(): boolean {
    return this.status >= 500;
  }
}

export interface RetryOptions {
  retries?: number;
  backoffMs?: number;
  onRetry?: (attempt: number, error: Error) => void;
}

export type FetchFn = (url: string, init?: RequestInit) => Promise<Response>;
export type SleepFn = (ms: number) => Promise<void>;

const realSleep: SleepFn = (ms) => new Promise((r) => setTimeout(r, ms));

export class ApiClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchFn: FetchFn = (url, init) => fetch(url, init),
    private readonly sleep: SleepFn = realSleep,
  ) {}

  private async request<T extends { schema_version: string }>(
    path: string,
    init?: RequestInit,
  ): Promise<T> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`, init);
    if (!response.ok) {
      let payload: ErrorResponse | null = null;
      try {
        payload = (await response.json()) as ErrorResponse;
      } catch {
        // non-JSON error body; keep the status
      }
      throw new ApiError(
        response.status,
        payload,
        payload?.error ?? `HTTP ${response.status}`,
      );
    }
    const body = (await response.json()) as T;
    if (body.schema_version !== SCHEMA_VERSION) {
      throw new ApiError(
        0,
        null,
        `schema version mismatch: server ${body.schema_version}, client ${SCHEMA_VERSION}`,
      );
    }
    return body;
  }

  problems(): Promise<ProblemsResponse> {
    return this.request<ProblemsResponse>("/problems");
  }

  candidates(
    problemId: string,
    kind: Kind,
    round: number,
    topN?: number,
  ): Promise<CandidatesResponse> {
    const query = new URLSearchParams({ kind, round: String(round) });
    if (topN !== undefined) query.set("top_n", String(topN));
    return this.request<CandidatesResponse>(
      `/problems/${encodeURIComponent(problemId)}/candidates?${query}`,
    );
  }

  annotations(annotator?: string): Promise<AnnotationsResponse> {
    const query = annotator
      ? `?${new URLSearchParams({ annotator })}`
      : "";
    return this.request<AnnotationsResponse>(`/annotations${query}`);
  }

  agreement(a: string, b: string): Promise<AgreementResponse> {
    return this.request<AgreementResponse>(
      `/agreement?${new URLSearchParams({ a, b })}`,
    );
  }

  status(): Promise<StatusResponse> {
    return this.request<StatusResponse>("/status");
  }

  /**
   * Record one judgment.  The body — event_id included — is identical on
   * every attempt; the server deduplicates by event_id, so a retry after
   * an ambiguous failure is safe.
   */
  async postAnnotation(
    body: AnnotationBody,
    options: RetryOptions = {},
  ): Promise<AnnotationPostResponse> {
    const { retries = 3, backoffMs = 500, onRetry } = options;
    const init: RequestInit = {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    };
    let lastError: Error = new Error("unreachable");
    for (let attempt = 0; attempt <= retries; attempt++) {
      try {
        return await this.request<AnnotationPostResponse>("/annotations", init);
      } catch (error) {
        if (error instanceof ApiError && !error.transient) throw error;
        lastError = error as Error;
        if (attempt < retries) {
          onRetry?.(attempt + 1, lastError);
          await this.sleep(backoffMs * 2 ** attempt);
        }
      }
    }
    throw lastError;
  }

  /** Kick off a background retraining run (enqueued; answers immediately). */
  retrain(): Promise<{ schema_version: string; status: string }> {
    return this.request("/retrain", { method: "POST" });
  }

  /** Poll /status until the retraining run leaves the "running" state. */
  async waitForRetrain(pollMs = 500): Promise<StatusResponse> {
    for (;;) {
      const status = await this.status();
      if (status.retrain !== "running") return status;
      await this.sleep(pollMs);
    }
  }
}
