/**
 * HTML builders for the single-page review screen.
 *
 * Pure string -> string functions so the layout is testable without a
 * browser; main.ts owns the only DOM writes.  The guideline panel is
 * always rendered at the top — the annotator should never have to recall
 * the labeling rule from memory — and the card shows the served score
 * verbatim, never a recomputed one.
 */

import { Progress } from "./queue.js";
import { AnnotationSession } from "./session.js";
import { ProblemSummary, QueueItem, codeToken } from "./types.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function renderGuideline(guideline: string): string {
  return `<section class="guideline">
    <h2>Annotation guideline</h2>
    <p>${escapeHtml(guideline)}</p>
  </section>`;
}

export function renderProblemOptions(
  problems: ProblemSummary[],
  selectedId: string | null,
): string {
  return problems
    .map((p) => {
      const chosen = p.id === selectedId ? " selected" : "";
      return `<option value="${escapeHtml(p.id)}"${chosen}>${escapeHtml(
        `${p.id} — ${p.name}`,
      )}</option>`;
    })
    .join("");
}

export function renderCard(item: QueueItem | null): string {
  if (item === null) {
    return `<section class="card empty">
      <p>Queue finished — pick another problem or kind, or press
      <kbd>r</kbd> to retrain and load round-2 suggestions.</p>
    </section>`;
  }
  const { problem, candidate } = item;
  const definition = problem.definition
    .map((c) => `<code>${escapeHtml(codeToken(c))}</code>`)
    .join(" ");
  return `<section class="card">
    <div class="problem">
      <h2>${escapeHtml(problem.name)} <small>${escapeHtml(problem.id)}</small></h2>
      <p class="definition">defined by ${definition}</p>
    </div>
    <div class="candidate">
      <span class="kind">${escapeHtml(candidate.kind)} · round ${candidate.round}</span>
      <h1>${escapeHtml(candidate.display_name)}</h1>
      <p class="score">served score ${candidate.score.toFixed(3)}</p>
    </div>
    <p class="keys">
      <kbd>1</kbd> relevant · <kbd>0</kbd> not relevant ·
      <kbd>u</kbd> undo · <kbd>r</kbd> retrain + round 2
    </p>
  </section>`;
}

export function renderProgress(
  progress: Progress,
  annotatedBefore: number,
  pendingPosts: number,
): string {
  const percent =
    progress.total === 0 ? 0 : Math.round((100 * progress.done) / progress.total);
  const earlier =
    annotatedBefore > 0 ? ` · ${annotatedBefore} recorded earlier` : "";
  const inflight = pendingPosts > 0 ? ` · ${pendingPosts} saving…` : "";
  return `<section class="progress">
    <div class="bar"><div class="fill" style="width:${percent}%"></div></div>
    <p>${progress.done}/${progress.total} this queue, ${progress.remaining} left${earlier}${inflight}</p>
  </section>`;
}

export function renderNotices(session: AnnotationSession): string {
  const parts: string[] = [];
  if (session.lastError !== null) {
    parts.push(`<p class="error">${escapeHtml(session.lastError)}</p>`);
  }
  if (session.notice !== null) {
    parts.push(`<p class="notice">${escapeHtml(session.notice)}</p>`);
  }
  return parts.join("");
}

export function renderApp(session: AnnotationSession): string {
  const selection = session.selection;
  const progress: Progress = session.queue?.progress() ?? {
    done: 0,
    remaining: 0,
    total: 0,
  };
  const annotatedBefore = selection
    ? session.annotatedCount(selection.problemId, selection.kind)
    : 0;
  const kinds = ["medication", "procedure", "lab"]
    .map((k) => {
      const chosen = selection?.kind === k ? " selected" : "";
      return `<option value="${k}"${chosen}>${k}</option>`;
    })
    .join("");
  const rounds = [1, 2]
    .map((r) => {
      const chosen = selection?.round === r ? " selected" : "";
      return `<option value="${r}"${chosen}>round ${r}</option>`;
    })
    .join("");
  return `
  <header>
    <h1>problink annotation</h1>
    <span class="annotator">${escapeHtml(session.annotator)}</span>
    <select id="problem-select">${renderProblemOptions(
      session.problems,
      selection?.problemId ?? null,
    )}</select>
    <select id="kind-select">${kinds}</select>
    <select id="round-select">${rounds}</select>
  </header>
  ${renderGuideline(session.guideline)}
  ${renderNotices(session)}
  ${renderCard(session.current())}
  ${renderProgress(progress, annotatedBefore, session.pendingPosts)}`;
}
