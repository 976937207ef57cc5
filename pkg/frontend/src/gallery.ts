// Sample gallery for a hovered heatmap cell: one tile per record with its
// render thumbnail (when the run saved rgb buffers), top-1 label, and a
// border color encoding correctness. Tiles degrade to metadata rows when
// the thumbnail is missing (main.ts swaps the class on image error).

import type { LogRecord, RecordsResponse } from "./types.js";

export const GALLERY_PAGE_SIZE = 12;

function escapeHtml(value: unknown): string {
  return String(value)
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function thumbnailUrl(apiBase: string, run: string, id: number): string {
  return `${apiBase}/api/render/${id}.png?run=${encodeURIComponent(run)}`;
}

function tile(record: LogRecord, apiBase: string, run: string): string {
  const verdict = record.is_correct === null ? "na" : record.is_correct ? "correct" : "incorrect";
  const label = record.prediction?.top1_label ?? record.prediction?.top1 ?? "?";
  const details = Object.entries(record.values)
    .map(([key, value]) => `${escapeHtml(key)}=${escapeHtml(value)}`)
    .join(" ");
  return (
    `<figure class="tile tile-${verdict}" data-record-id="${record.id}">` +
    `<img src="${thumbnailUrl(apiBase, run, record.id)}" alt="render ${record.id}"` +
    ` loading="lazy" data-degrade="1">` +
    `<figcaption>` +
    `<span class="tile-label">${escapeHtml(label)}</span>` +
    `<span class="tile-meta">#${record.id} · ${escapeHtml(record.mesh)} · ` +
    `${escapeHtml(record.environment)}</span>` +
    `<span class="tile-values">${details}</span>` +
    `</figcaption></figure>`
  );
}

export function renderGallery(
  response: RecordsResponse,
  apiBase: string,
  run: string,
  page = 0,
): string {
  if (response.records.length === 0) {
    return `<p class="placeholder">no samples in this cell</p>`;
  }
  const pages = Math.max(1, Math.ceil(response.records.length / GALLERY_PAGE_SIZE));
  const current = Math.min(page, pages - 1);
  const slice = response.records.slice(
    current * GALLERY_PAGE_SIZE,
    (current + 1) * GALLERY_PAGE_SIZE,
  );
  const tiles = slice.map((record) => tile(record, apiBase, run)).join("");
  const pager =
    pages > 1
      ? `<nav class="pager" data-page="${current}" data-pages="${pages}">` +
        `<button data-pager="prev"${current === 0 ? " disabled" : ""}>prev</button>` +
        `<span>${current + 1}/${pages}</span>` +
        `<button data-pager="next"${current === pages - 1 ? " disabled" : ""}>next</button>` +
        `</nav>`
      : "";
  return (
    `<header class="gallery-heading">cell (${escapeHtml(response.x_value)}, ` +
    `${escapeHtml(response.y_value)}) · ${response.n} samples</header>` +
    `<div class="tiles" data-count="${slice.length}">${tiles}</div>` +
    pager
  );
}
