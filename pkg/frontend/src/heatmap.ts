// Pure HTML renderer for the accuracy heatmap. Cell annotations carry the
// API's numbers verbatim in data attributes (data-accuracy / data-n), so
// what the user sees is byte-equal to the server response; the color scale
// is the only presentation-side addition.

import type { HeatmapResponse } from "./types.js";

function escapeHtml(value: unknown): string {
  return String(value)
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

/** Sequential blue->red colormap over accuracy in [0, 1]. */
export function accuracyColor(accuracy: number | null): string {
  if (accuracy === null) return "transparent";
  const t = Math.max(0, Math.min(1, accuracy));
  const r = Math.round(40 + 200 * t);
  const g = Math.round(60 + 40 * (1 - Math.abs(t - 0.5) * 2));
  const b = Math.round(40 + 200 * (1 - t));
  return `rgb(${r}, ${g}, ${b})`;
}

export function formatAccuracy(accuracy: number | null): string {
  if (accuracy === null) return "–";
  return `${(accuracy * 100).toFixed(0)}%`;
}

export function renderHeatmap(matrix: HeatmapResponse): string {
  const header = matrix.x_values
    .map((value) => `<th scope="col">${escapeHtml(value)}</th>`)
    .join("");
  const rows = matrix.y_values
    .map((yValue, j) => {
      const cells = matrix.cells[j]
        .map((cell, i) => {
          const empty = cell.n === 0;
          const annotation = empty
            ? `<span class="cell-acc">empty</span>`
            : `<span class="cell-acc">${formatAccuracy(cell.accuracy)}</span>` +
              `<span class="cell-n">n=${cell.n}</span>`;
          return (
            `<td class="cell${empty ? " cell-empty" : ""}"` +
            ` data-i="${i}" data-j="${j}"` +
            ` data-accuracy="${cell.accuracy === null ? "" : String(cell.accuracy)}"` +
            ` data-n="${cell.n}"` +
            ` style="background:${accuracyColor(cell.accuracy)}">` +
            annotation +
            `</td>`
          );
        })
        .join("");
      return `<tr><th scope="row">${escapeHtml(yValue)}</th>${cells}</tr>`;
    })
    .join("");
  return (
    `<table class="heatmap" aria-label="accuracy heatmap">` +
    `<thead><tr><th class="corner">${escapeHtml(matrix.y_key)} \\ ` +
    `${escapeHtml(matrix.x_key)}</th>${header}</tr></thead>` +
    `<tbody>${rows}</tbody></table>`
  );
}

export function renderPlaceholder(): string {
  return (
    `<p class="placeholder">Assign one parameter to the x axis and one to ` +
    `the y axis to draw the heatmap.</p>`
  );
}
