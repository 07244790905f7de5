/**
 * Browser bootstrap: wire the session to the page.
 *
 * Configuration rides on the URL (?api=http://host:port&annotator=name),
 * so a reload — or a brand-new tab after a crash — reconstructs the whole
 * screen from GET endpoints alone.
 */

import { ApiClient } from "./api.js";
import { renderApp } from "./render.js";
import { AnnotationSession } from "./session.js";
import { Kind, KINDS } from "./types.js";

function param(name: string, fallback: string): string {
  return new URLSearchParams(window.location.search).get(name) ?? fallback;
}

async function boot(): Promise<void> {
  const root = document.getElementById("app");
  if (root === null) throw new Error("missing #app mount point");

  const annotator =
    param("annotator", "") ||
    window.prompt("annotator id?", "anonymous") ||
    "anonymous";
  const client = new ApiClient(param("api", ""));
  const session = new AnnotationSession(client, annotator);

  const rerender = () => {
    root.innerHTML = renderApp(session);
    bindSelectors();
  };

  function bindSelectors(): void {
    const problem = document.getElementById("problem-select") as HTMLSelectElement | null;
    const kind = document.getElementById("kind-select") as HTMLSelectElement | null;
    const round = document.getElementById("round-select") as HTMLSelectElement | null;
    const reselect = () => {
      if (!problem || !kind || !round || problem.value === "") return;
      void session
        .selectQueue(problem.value, kind.value as Kind, Number(round.value))
        .catch((error: Error) => {
          session.notice = `load failed: ${error.message}`;
        });
    };
    problem?.addEventListener("change", reselect);
    kind?.addEventListener("change", reselect);
    round?.addEventListener("change", reselect);
  }

  session.onChange(rerender);
  await session.load();

  const first = session.problems[0];
  if (first !== undefined) {
    await session.selectQueue(first.id, KINDS[0] as Kind, 1);
  }

  window.addEventListener("keydown", (event) => {
    const target = event.target as HTMLElement | null;
    if (target && ["INPUT", "SELECT", "TEXTAREA"].includes(target.tagName)) return;
    const work = session.handleKey(event.key);
    if (work !== null) {
      event.preventDefault();
      void work.catch((error: Error) => {
        session.notice = `action failed: ${error.message}`;
      });
    }
  });

  rerender();
}

void boot().catch((error: Error) => {
  const root = document.getElementById("app");
  if (root) root.innerHTML = `<p class="error">failed to start: ${error.message}</p>`;
});
