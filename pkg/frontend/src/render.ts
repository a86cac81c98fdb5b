// DOM rendering. Pure functions from state to elements; all mutations go
// through the store's actions.

import type { ReviewStore } from "./state";
import type { Entry, EntryField, PageRecord, TriageLabel } from "./types";
import { ENTRY_FIELDS, SEQUENCE_FIELDS } from "./types";

const STATE_LABELS: Record<string, string> = {
  pending: "pending",
  tiled: "tiled",
  recognizing: "recognizing",
  merging: "merging",
  recognized: "recognized",
  in_review: "in review",
  approved: "approved",
  failed: "failed",
};

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className = "",
  text = "",
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text) node.textContent = text;
  return node;
}

function renderJobList(store: ReviewStore, root: HTMLElement): void {
  const panel = el("section", "panel");
  panel.appendChild(el("h2", "", "Jobs"));
  const table = el("table", "jobs");
  const head = el("tr");
  for (const title of ["job", "schema", "pages", "states", ""]) {
    head.appendChild(el("th", "", title));
  }
  table.appendChild(head);
  for (const job of store.state.jobs) {
    const row = el("tr");
    row.appendChild(el("td", "", job.job_id));
    row.appendChild(el("td", "", job.schema));
    row.appendChild(el("td", "", String(job.page_count)));
    const states = Object.entries(job.states)
      .map(([state, count]) => `${STATE_LABELS[state] ?? state}: ${count}`)
      .join(", ");
    row.appendChild(el("td", "", states));
    const open = el("button", "", "open");
    open.addEventListener("click", () => {
      void store.openJob(job.job_id).then(() => void store.loadEnrichment());
    });
    const cell = el("td");
    cell.appendChild(open);
    row.appendChild(cell);
    table.appendChild(row);
  }
  panel.appendChild(table);
  root.appendChild(panel);
}

function renderPageGrid(store: ReviewStore, root: HTMLElement): void {
  const job = store.state.job;
  if (!job) return;
  const panel = el("section", "panel");
  panel.appendChild(el("h2", "", `Pages of ${job.job_id}`));
  const grid = el("div", "page-grid");
  const numbers = Object.keys(job.pages)
    .map(Number)
    .sort((a, b) => a - b);
  for (const number of numbers) {
    const record: PageRecord = job.pages[String(number)];
    const tile = el("button", `page-tile state-${record.state}`);
    tile.appendChild(el("div", "page-number", `p. ${number}`));
    tile.appendChild(el("div", "page-state", STATE_LABELS[record.state] ?? record.state));
    if (record.state === "failed") {
      tile.title = `${record.failed_stage}: ${record.failed_error}`;
    }
    tile.addEventListener("click", () => void store.openPage(number));
    grid.appendChild(tile);
  }
  panel.appendChild(grid);

  const actions = el("div", "actions");
  const exportCsv = el("button", "", "download CSV export");
  exportCsv.addEventListener("click", () => {
    void store.downloadExport("csv").then((text) => {
      if (text !== null) saveAs(`${job.job_id}.csv`, text, "text/csv");
    });
  });
  const exportTei = el("button", "", "download TEI export");
  exportTei.addEventListener("click", () => {
    void store.downloadExport("tei").then((text) => {
      if (text !== null) saveAs(`${job.job_id}.xml`, text, "application/xml");
    });
  });
  actions.appendChild(exportCsv);
  actions.appendChild(exportTei);
  panel.appendChild(actions);
  root.appendChild(panel);
}

function saveAs(filename: string, text: string, mime: string): void {
  const blob = new Blob([text], { type: mime });
  const anchor = document.createElement("a");
  anchor.href = URL.createObjectURL(blob);
  anchor.download = filename;
  anchor.click();
  URL.revokeObjectURL(anchor.href);
}

function renderScan(store: ReviewStore, panel: HTMLElement): void {
  const page = store.state.page;
  if (!page) return;
  const wrap = el("div", "scan-wrap");
  const image = document.createElement("img");
  image.src = page.scan_url;
  image.alt = `scan of page ${page.number}`;
  image.className = "scan";
  wrap.appendChild(image);
  image.addEventListener("load", () => {
    // tile boundaries drawn over the scan once its natural size is known
    const overlay = document.createElementNS("http://www.w3.org/2000/svg", "svg");
    overlay.setAttribute("class", "tile-overlay");
    overlay.setAttribute("viewBox", `0 0 ${image.naturalWidth} ${image.naturalHeight}`);
    for (const tile of page.tiles) {
      const [x0, y0, x1, y1] = tile.bbox;
      const rect = document.createElementNS("http://www.w3.org/2000/svg", "rect");
      rect.setAttribute("x", String(x0));
      rect.setAttribute("y", String(y0));
      rect.setAttribute("width", String(x1 - x0));
      rect.setAttribute("height", String(y1 - y0));
      rect.setAttribute("class", "tile-box");
      overlay.appendChild(rect);
    }
    wrap.appendChild(overlay);
  });
  // zoom by wheel: scale the wrapper
  let zoom = 1;
  wrap.addEventListener("wheel", (event) => {
    event.preventDefault();
    zoom = Math.min(4, Math.max(0.5, zoom * (event.deltaY < 0 ? 1.1 : 0.9)));
    image.style.width = `${zoom * 100}%`;
  });
  panel.appendChild(wrap);
}

function violationFor(store: ReviewStore, index: number, field: string): string {
  const error = store.state.error;
  if (!error) return "";
  const hit = error.violations.find((v) => v.entry === index && v.field === field);
  return hit ? hit.message : "";
}

function renderEntryTable(store: ReviewStore, panel: HTMLElement): void {
  const table = el("table", "entries");
  const head = el("tr");
  head.appendChild(el("th", "", "#"));
  for (const field of ENTRY_FIELDS) {
    head.appendChild(el("th", "", field));
  }
  table.appendChild(head);
  store.state.draft.forEach((entry: Entry, index: number) => {
    const row = el("tr", store.diffAgainstReference(index) ? "differs" : "");
    row.appendChild(el("td", "order", String(index + 1)));
    for (const field of ENTRY_FIELDS) {
      const cell = el("td");
      const input = document.createElement("input");
      const value = entry[field as EntryField];
      input.value = Array.isArray(value) ? value.join("; ") : String(value);
      const message = violationFor(store, index, field);
      if (message) {
        input.classList.add("invalid");
        input.title = message;
      }
      input.addEventListener("input", () => {
        const raw = input.value;
        if (SEQUENCE_FIELDS.has(field as EntryField)) {
          store.editField(index, field as EntryField, raw ? raw.split("; ") : []);
        } else {
          store.editField(index, field as EntryField, raw);
        }
      });
      cell.appendChild(input);
      row.appendChild(cell);
    }
    table.appendChild(row);
  });
  panel.appendChild(table);
}

function renderPageEditor(store: ReviewStore, root: HTMLElement): void {
  const page = store.state.page;
  if (!page) return;
  const panel = el("section", "panel editor");
  const heading = el("h2", "", `Page ${page.number} (${STATE_LABELS[page.state] ?? page.state})`);
  panel.appendChild(heading);
  if (page.eval) {
    panel.appendChild(
      el(
        "p",
        "eval-banner",
        `perfect ${page.eval.perfect_entries}/${page.eval.total_entries}, ` +
          `structural ${page.eval.structural_similarity.toFixed(3)}, ` +
          `textual ${page.eval.textual_similarity.toFixed(3)}`,
      ),
    );
  }
  const split = el("div", "split");
  const left = el("div", "pane");
  renderScan(store, left);
  const right = el("div", "pane");
  renderEntryTable(store, right);
  split.appendChild(left);
  split.appendChild(right);
  panel.appendChild(split);

  const actions = el("div", "actions");
  const advance = el("button", "", "advance");
  advance.addEventListener("click", () => void store.advancePage(page.number));
  const save = el("button", "primary", "save corrections");
  save.addEventListener("click", () => void store.saveDraft());
  const approve = el("button", "primary", "approve");
  approve.addEventListener("click", () =>
    void store.approvePage(() =>
      window.confirm("There are unsaved edits. Save them and approve?"),
    ),
  );
  actions.appendChild(advance);
  actions.appendChild(save);
  actions.appendChild(approve);
  panel.appendChild(actions);
  root.appendChild(panel);
}

function renderEnrichment(store: ReviewStore, root: HTMLElement): void {
  const view = store.state.enrichment;
  if (!view || view.rows.length === 0) return;
  const panel = el("section", "panel");
  panel.appendChild(el("h2", "", "Enrichment triage"));
  if (view.stats) {
    panel.appendChild(
      el(
        "p",
        "",
        `correct ${view.stats.correct}% / minor ${view.stats.minor_edit}% / ` +
          `revision ${view.stats.full_revision}%`,
      ),
    );
  }
  const table = el("table", "enrichment");
  const head = el("tr");
  for (const title of ["old ET", "modern ET", "old DE", "modern DE", "comment", "triage"]) {
    head.appendChild(el("th", "", title));
  }
  table.appendChild(head);
  view.rows.forEach((row, index) => {
    const tr = el("tr");
    for (const value of [row.old_et, row.modern_et, row.old_de, row.modern_de, row.comment]) {
      tr.appendChild(el("td", "", value));
    }
    const cell = el("td");
    const select = document.createElement("select");
    for (const label of ["correct", "minor_edit", "full_revision"] as TriageLabel[]) {
      const option = document.createElement("option");
      option.value = label;
      option.textContent = label.replace("_", " ");
      if (view.labels[index] === label) option.selected = true;
      select.appendChild(option);
    }
    select.addEventListener("change", () =>
      void store.setTriageLabel(index, select.value as TriageLabel),
    );
    cell.appendChild(select);
    tr.appendChild(cell);
    table.appendChild(tr);
  });
  panel.appendChild(table);
  root.appendChild(panel);
}

export function render(store: ReviewStore, root: HTMLElement): void {
  root.replaceChildren();
  const banner = store.state.error
    ? el("div", "banner error", `${store.state.error.code}: ${store.state.error.message}`)
    : store.state.notice
      ? el("div", "banner notice", store.state.notice)
      : null;
  if (banner) root.appendChild(banner);
  renderJobList(store, root);
  renderPageGrid(store, root);
  renderPageEditor(store, root);
  renderEnrichment(store, root);
}
