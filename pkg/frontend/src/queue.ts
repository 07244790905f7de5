/**
 * Review-queue state machine: one (problem, kind, round) worth of served
 * candidates, answered front to back.
 *
 * Pure bookkeeping, no I/O.  The session layer posts each answer and then
 * either confirms it or puts the item back; this module only guarantees
 * the invariants the flow depends on:
 *
 *  - the current item is always the head of the pending list;
 *  - answering moves current -> history and advances immediately
 *    (optimistic: posting happens elsewhere, possibly after);
 *  - undo moves the last answer back to the front, so the very next
 *    keystroke re-answers the same pair (the corrected label is a fresh
 *    POST; the server's latest-event-wins replay does the overwrite);
 *  - a failed post re-queues its item at the back, never dropping it;
 *  - done + remaining === total at all times.
 */

import { QueueItem } from "./types.js";

export interface Submission {
  item: QueueItem;
  label: 0 | 1;
  eventId: string;
}

export interface Progress {
  done: number;
  remaining: number;
  total: number;
}

export class ReviewQueue {
  private pending: QueueItem[];
  private history: Submission[] = [];

  constructor(items: QueueItem[]) {
    this.pending = [...items];
  }

  get total(): number {
    return this.pending.length + this.history.length;
  }

  get done(): number {
    return this.history.length;
  }

  get remaining(): number {
    return this.pending.length;
  }

  get finished(): boolean {
    return this.pending.length === 0;
  }

  /** The item under review, or null when the queue is finished. */
  current(): QueueItem | null {
    return this.pending[0] ?? null;
  }

  /** The last answer, i.e. what undo would bring back. */
  lastAnswered(): Submission | null {
    return this.history[this.history.length - 1] ?? null;
  }

  /**
   * Record a judgment on the current item and advance.  Returns the
   * submission the caller must post, or null when nothing is pending.
   */
  answer(label: 0 | 1, eventId: string): Submission | null {
    const item = this.pending.shift();
    if (item === undefined) return null;
    const submission: Submission = { item, label, eventId };
    this.history.push(submission);
    return submission;
  }

  /**
   * Take back the most recent answer: its item becomes current again, so
   * the next keystroke posts the corrected label as a new event.
   */
  undo(): Submission | null {
    const submission = this.history.pop();
    if (submission === undefined) return null;
    this.pending.unshift(submission.item);
    return submission;
  }

  /**
   * A post that failed for good: forget the answer and put the item at the
   * back of the queue so the annotator meets it again.
   */
  requeue(submission: Submission): void {
    const at = this.history.indexOf(submission);
    if (at >= 0) this.history.splice(at, 1);
    this.pending.push(submission.item);
  }

  progress(): Progress {
    return { done: this.done, remaining: this.remaining, total: this.total };
  }
}
