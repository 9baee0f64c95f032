/**
 * Single-page study flow: session setup, one trial at a time, final
 * human-vs-network report. The service is the source of truth for
 * progress, so a page reload resumes at the next unanswered trial as
 * long as the session id is present in the URL hash.
 *
 * No ground truth ever reaches this code before session completion; the
 * client state holds only trial ids, image URLs and the rater's picks.
 */

import {
  ApiError,
  createSession,
  fetchReport,
  nextTrial,
  submitResponse,
  type RosterEntry,
  type StudyReport,
} from "./api.js";
import { MAX_PICKS, PickList } from "./picks.js";
import {
  comparisonRows,
  formatPct,
  sortCategories,
  type CategorySortKey,
} from "./report.js";

const API_BASE = "";

type State = {
  sessionId: string | null;
  condition: "fg" | "bg";
  roster: RosterEntry[];
  trialCount: number;
  picks: PickList;
  currentTrialId: string | null;
  trialShownAt: number;
  answered: number;
  submitting: boolean;
  sortKey: CategorySortKey;
  sortDesc: boolean;
};

const state: State = {
  sessionId: null,
  condition: "bg",
  roster: [],
  trialCount: 0,
  picks: new PickList(),
  currentTrialId: null,
  trialShownAt: 0,
  answered: 0,
  submitting: false,
  sortKey: "display",
  sortDesc: false,
};

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function show(screen: "setup" | "trial" | "report"): void {
  for (const name of ["setup", "trial", "report"]) {
    el(`screen-${name}`).hidden = name !== screen;
  }
}

function setStatus(message: string, isError = false): void {
  const node = el("status");
  node.textContent = message;
  node.classList.toggle("error", isError);
}

// -- roster search -----------------------------------------------------------

function rosterMatches(query: string): RosterEntry[] {
  const q = query.trim().toLowerCase();
  if (!q) return state.roster;
  return state.roster.filter(
    (r) =>
      r.display.toLowerCase().includes(q) || r.label.toLowerCase().includes(q),
  );
}

function renderRoster(): void {
  const query = el<HTMLInputElement>("roster-search").value;
  const list = el("roster-list");
  list.replaceChildren();
  for (const entry of rosterMatches(query)) {
    const item = document.createElement("button");
    item.type = "button";
    item.className = "roster-item";
    item.dataset.label = entry.label;
    item.textContent = entry.display;
    if (state.picks.has(entry.label)) item.classList.add("picked");
    item.addEventListener("click", () => togglePick(entry.label));
    list.appendChild(item);
  }
}

function togglePick(label: string): void {
  if (state.picks.has(label)) {
    state.picks.remove(label);
  } else if (!state.picks.add(label)) {
    setStatus(
      state.picks.full
        ? `at most ${MAX_PICKS} picks; remove one first`
        : "already picked",
      true,
    );
    return;
  }
  setStatus("");
  renderPicks();
  renderRoster();
}

function displayName(label: string): string {
  return state.roster.find((r) => r.label === label)?.display ?? label;
}

function renderPicks(): void {
  const list = el("pick-list");
  list.replaceChildren();
  state.picks.ordered.forEach((label, rank) => {
    const li = document.createElement("li");
    const name = document.createElement("span");
    name.textContent = `${rank + 1}. ${displayName(label)}`;
    li.appendChild(name);
    for (const [text, delta] of [
      ["up", -1],
      ["down", +1],
    ] as const) {
      const btn = document.createElement("button");
      btn.type = "button";
      btn.textContent = text;
      btn.addEventListener("click", () => {
        state.picks.move(label, delta);
        renderPicks();
      });
      li.appendChild(btn);
    }
    const rm = document.createElement("button");
    rm.type = "button";
    rm.textContent = "remove";
    rm.addEventListener("click", () => togglePick(label));
    li.appendChild(rm);
    list.appendChild(li);
  });
  el<HTMLButtonElement>("submit-picks").disabled =
    !state.picks.submittable || state.submitting;
}

// -- trial flow --------------------------------------------------------------

async function loadNextTrial(): Promise<void> {
  if (!state.sessionId) return;
  const trial = await nextTrial(API_BASE, state.sessionId);
  if (trial.trial_id === null) {
    await showReport();
    return;
  }
  state.currentTrialId = trial.trial_id;
  state.answered = state.trialCount - trial.remaining;
  state.picks.clear();
  state.trialShownAt = Date.now();
  el("progress").textContent = `${state.answered} / ${state.trialCount} answered`;
  const img = el<HTMLImageElement>("trial-image");
  el("image-retry").hidden = true;
  img.src = `${trial.image_url}?t=${Date.now()}`;
  el<HTMLInputElement>("roster-search").value = "";
  renderPicks();
  renderRoster();
  show("trial");
  el<HTMLInputElement>("roster-search").focus();
}

async function submitCurrent(): Promise<void> {
  if (!state.sessionId || !state.currentTrialId) return;
  if (!state.picks.submittable) {
    setStatus("pick at least one category before submitting", true);
    return;
  }
  // one in-flight submission; advance only after the service acknowledges
  state.submitting = true;
  renderPicks();
  try {
    const elapsed = Date.now() - state.trialShownAt;
    await submitResponse(
      API_BASE,
      state.sessionId,
      state.currentTrialId,
      state.picks.ordered,
      elapsed,
    );
    setStatus("");
    await loadNextTrial();
  } catch (err) {
    if (err instanceof ApiError && err.code === "duplicate_submission") {
      await loadNextTrial(); // already recorded server-side: move on
    } else {
      setStatus(err instanceof Error ? err.message : String(err), true);
    }
  } finally {
    state.submitting = false;
    renderPicks();
  }
}

// -- report ------------------------------------------------------------------

function renderReport(report: StudyReport): void {
  const summary = el("report-summary");
  summary.replaceChildren();
  const head = document.createElement("tr");
  for (const text of ["metric", "human", report.network_id ?? "network"]) {
    const th = document.createElement("th");
    th.textContent = text;
    head.appendChild(th);
  }
  summary.appendChild(head);
  for (const row of comparisonRows(report)) {
    const tr = document.createElement("tr");
    const cells: Array<[string, boolean]> = [
      [row.metric, false],
      [formatPct(row.human), row.winner === "human"],
      [formatPct(row.network), row.winner === "network"],
    ];
    for (const [text, highlight] of cells) {
      const td = document.createElement("td");
      td.textContent = text;
      if (highlight) td.classList.add("winner");
      tr.appendChild(td);
    }
    summary.appendChild(tr);
  }

  const table = el("report-categories");
  table.replaceChildren();
  const header = document.createElement("tr");
  const columns: Array<[string, CategorySortKey]> = [
    ["category", "display"],
    ["trials", "n"],
    ["human top-1", "human_top1"],
    ["human top-5", "human_top5"],
  ];
  for (const [text, key] of columns) {
    const th = document.createElement("th");
    th.textContent = text + (state.sortKey === key ? (state.sortDesc ? " ↓" : " ↑") : "");
    th.addEventListener("click", () => {
      state.sortDesc = state.sortKey === key ? !state.sortDesc : false;
      state.sortKey = key;
      renderReport(report);
    });
    header.appendChild(th);
  }
  table.appendChild(header);
  for (const row of sortCategories(report.per_category, state.sortKey, state.sortDesc)) {
    const tr = document.createElement("tr");
    for (const text of [
      row.display,
      String(row.n),
      formatPct(row.human_top1),
      formatPct(row.human_top5),
    ]) {
      const td = document.createElement("td");
      td.textContent = text;
      tr.appendChild(td);
    }
    table.appendChild(tr);
  }
}

async function showReport(): Promise<void> {
  if (!state.sessionId) return;
  const netId = el<HTMLInputElement>("net-id").value.trim() || undefined;
  try {
    const report = await fetchReport(API_BASE, state.sessionId, netId);
    renderReport(report);
    show("report");
    setStatus("");
  } catch (err) {
    setStatus(
      `report unavailable: ${err instanceof Error ? err.message : err}`,
      true,
    );
  }
}

// -- wiring -----------------------------------------------------------------

function restoreFromHash(): void {
  const match = window.location.hash.match(/session=([a-z0-9]+)&count=(\d+)/);
  if (!match) return;
  // the roster is public session furniture; caching it client-side lets a
  // reload resume without a dedicated roster endpoint
  const cached = sessionStorage.getItem(`fgbg-roster-${match[1]}`);
  if (!cached) return;
  state.sessionId = match[1];
  state.trialCount = Number(match[2]);
  state.roster = JSON.parse(cached) as RosterEntry[];
}

export function init(): void {
  restoreFromHash();
  el("setup-form").addEventListener("submit", (ev) => {
    ev.preventDefault();
    void (async () => {
      try {
        const condition = el<HTMLSelectElement>("condition").value as "fg" | "bg";
        const count = Number(el<HTMLInputElement>("trial-count").value);
        const seed = Number(el<HTMLInputElement>("seed").value);
        const session = await createSession(API_BASE, condition, count, seed);
        state.sessionId = session.session_id;
        state.roster = session.roster;
        state.trialCount = session.trial_count;
        sessionStorage.setItem(
          `fgbg-roster-${session.session_id}`,
          JSON.stringify(session.roster),
        );
        window.location.hash = `session=${session.session_id}&count=${session.trial_count}`;
        await loadNextTrial();
      } catch (err) {
        setStatus(err instanceof Error ? err.message : String(err), true);
      }
    })();
  });

  el<HTMLImageElement>("trial-image").addEventListener("error", () => {
    el("image-retry").hidden = false;
    setStatus("image failed to load", true);
  });
  el("image-retry").addEventListener("click", () => {
    const img = el<HTMLImageElement>("trial-image");
    el("image-retry").hidden = true;
    setStatus("retrying image…");
    img.src = img.src.split("?")[0] + `?t=${Date.now()}`;
  });

  el<HTMLInputElement>("roster-search").addEventListener("input", renderRoster);
  el<HTMLInputElement>("roster-search").addEventListener("keydown", (ev) => {
    if (ev.key === "Enter") {
      ev.preventDefault();
      const first = rosterMatches(el<HTMLInputElement>("roster-search").value)[0];
      if (first) togglePick(first.label);
    }
  });
  el("submit-picks").addEventListener("click", () => void submitCurrent());

  if (state.sessionId) {
    // resuming an existing session: roster comes with the report screen,
    // trials only need ids and images
    void (async () => {
      try {
        await loadNextTrial();
      } catch {
        show("setup");
      }
    })();
  } else {
    show("setup");
  }
}

if (typeof document !== "undefined" && document.readyState !== "loading") {
  init();
} else if (typeof document !== "undefined") {
  document.addEventListener("DOMContentLoaded", init);
}
