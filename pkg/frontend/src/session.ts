/**
 * One annotator's working session: the glue between keystrokes, the queue
 * state machine, and the HTTP client.
 *
 * The session owns no durable state.  Everything it knows — guideline,
 * problem list, queue contents, what this annotator already labeled — is
 * fetched from GET endpoints, so reloading the page (or restarting the
 * service) and building a fresh session resumes exactly where the event
 * log says things stand: already-annotated pairs simply never reappear in
 * a served queue.
 *
 * Writes are optimistic: a keystroke advances the queue immediately and
 * the POST happens behind it, retried with the same event_id.  A post
 * that fails for good puts its item back at the end of the queue.
 */

import { ApiClient, ApiError } from "./api.js";
import { ReviewQueue, Submission } from "./queue.js";
import {
  AnnotationBody,
  AnnotationRecord,
  Kind,
  ProblemSummary,
  QueueItem,
  StatusResponse,
  codeToken,
} from "./types.js";

export interface Selection {
  problemId: string;
  kind: Kind;
  round: number;
}

export type EventIdFactory = () => string;

function defaultEventIds(annotator: string): EventIdFactory {
  // Unique across page loads (the tag) and within the session (the
  // counter); retries of one submission reuse the one generated id.
  const tag = Date.now().toString(36) + Math.random().toString(36).slice(2, 8);
  let seq = 0;
  return () => `${annotator}.${tag}.${++seq}`;
}

export class AnnotationSession {
  guideline = "";
  problems: ProblemSummary[] = [];
  selection: Selection | null = null;
  queue: ReviewQueue | null = null;
  /** POSTs still in flight (optimistic advance keeps working ahead of them). */
  pendingPosts = 0;
  lastError: string | null = null;
  notice: string | null = null;
  private myRecords: AnnotationRecord[] = [];
  private readonly nextEventId: EventIdFactory;
  private readonly listeners = new Set<() => void>();

  constructor(
    readonly client: ApiClient,
    readonly annotator: string,
    eventIds?: EventIdFactory,
  ) {
    this.nextEventId = eventIds ?? defaultEventIds(annotator);
  }

  onChange(listener: () => void): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }

  private notify(): void {
    for (const listener of this.listeners) listener();
  }

  /** Fetch everything the UI shows; safe to call again to resync. */
  async load(): Promise<void> {
    const [problems, mine] = await Promise.all([
      this.client.problems(),
      this.client.annotations(this.annotator),
    ]);
    this.guideline = problems.guideline;
    this.problems = problems.problems;
    this.myRecords = mine.annotations;
    this.notify();
  }

  /** How many pairs this annotator has recorded for a (problem, kind). */
  annotatedCount(problemId: string, kind: Kind): number {
    const keys = new Set(
      this.myRecords
        .filter((r) => r.problem_id === problemId && r.relation === kind)
        .map((r) => codeToken(r.target)),
    );
    return keys.size;
  }

  /** Pull the served queue for a (problem, kind, round). */
  async selectQueue(problemId: string, kind: Kind, round: number): Promise<void> {
    const response = await this.client.candidates(problemId, kind, round);
    const items: QueueItem[] = response.candidates.map((candidate) => ({
      problem: response.problem,
      candidate,
    }));
    this.selection = { problemId, kind, round };
    this.queue = new ReviewQueue(items);
    this.notice = null;
    this.notify();
  }

  current(): QueueItem | null {
    return this.queue?.current() ?? null;
  }

  /**
   * Judge the current item.  Advances at once; the POST (with retries,
   * same event_id throughout) completes in the background.  Resolves when
   * the write settles, so callers that need the outcome can await it.
   */
  async answer(label: 0 | 1): Promise<void> {
    if (this.queue === null) return;
    const submission = this.queue.answer(label, this.nextEventId());
    if (submission === null) return;
    this.notify();
    await this.post(submission);
  }

  private async post(submission: Submission): Promise<void> {
    const { item, label, eventId } = submission;
    const body: AnnotationBody = {
      annotator_id: this.annotator,
      problem_id: item.problem.id,
      relation: item.candidate.kind,
      target: item.candidate.target,
      label,
      round: item.candidate.round,
      event_id: eventId,
    };
    this.pendingPosts += 1;
    this.notify();
    try {
      await this.client.postAnnotation(body);
      this.lastError = null;
      this.myRecords.push({
        timestamp: "",
        annotator_id: this.annotator,
        problem_id: body.problem_id,
        relation: body.relation,
        target: body.target,
        label,
        round: body.round,
        replaced_label: null,
      });
    } catch (error) {
      // Item back in rotation; nothing is lost, the annotator just meets
      // the pair again later.
      this.queue?.requeue(submission);
      this.lastError =
        error instanceof ApiError
          ? `write failed (${error.status || "network"}): ${error.message}`
          : `write failed: ${(error as Error).message}`;
    } finally {
      this.pendingPosts -= 1;
      this.notify();
    }
  }

  /**
   * Bring the last judged pair back as current.  The next 1/0 keystroke
   * posts the corrected label as a fresh event; the server's replay keeps
   * the latest label per (annotator, problem, relation, target).
   */
  undo(): Submission | null {
    const undone = this.queue?.undo() ?? null;
    if (undone !== null) {
      this.notice = `undo: re-judge ${undone.item.candidate.token} (was ${undone.label})`;
      this.notify();
    }
    return undone;
  }

  /**
   * Retrain on everything annotated so far, wait for it to finish, then
   * reload the current (problem, kind) as a round-2 model-ranked queue.
   */
  async refreshRound2(pollMs = 500): Promise<StatusResponse> {
    if (this.selection === null) throw new Error("no queue selected");
    this.notice = "retraining...";
    this.notify();
    try {
      await this.client.retrain();
    } catch (error) {
      // An already-running retrain is fine to wait on; anything else is real.
      if (!(error instanceof ApiError && error.status === 409)) throw error;
    }
    const status = await this.client.waitForRetrain(pollMs);
    if (status.retrain === "failed") {
      this.notice = `retrain failed: ${status.retrain_error}`;
      this.notify();
      return status;
    }
    const { problemId, kind } = this.selection;
    await this.selectQueue(problemId, kind, 2);
    this.notice = "round-2 suggestions loaded";
    this.notify();
    return status;
  }

  /**
   * Keyboard surface: 1/0 judge, u undo, r refresh round 2.  Returns the
   * in-flight work for callers that await it; unknown keys resolve to
   * nothing.
   */
  handleKey(key: string): Promise<void> | null {
    switch (key) {
      case "1":
        return this.answer(1);
      case "0":
        return this.answer(0);
      case "u":
        this.undo();
        return null;
      case "r":
        return this.refreshRound2().then(() => undefined);
      default:
        return null;
    }
  }
}
