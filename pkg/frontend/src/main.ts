// DOM wiring: run picker, per-parameter mode pickers, heatmap, and the
// hover-to-filter sample gallery. All statistics come from the API; this
// file only routes events and paints responses.

import { ApiClient, ApiError } from "./api.js";
import { GALLERY_PAGE_SIZE, renderGallery } from "./gallery.js";
import { renderHeatmap, renderPlaceholder } from "./heatmap.js";
import {
  axes,
  cellQuery,
  heatmapQuery,
  initialState,
  loadParams,
  setMode,
  setSliderValue,
  type ParamMode,
  type ViewState,
} from "./state.js";
import type { ParamInfo, RecordsResponse } from "./types.js";

const apiBase = new URLSearchParams(location.search).get("api") ?? "";
const client = new ApiClient(apiBase);
const state: ViewState = initialState();

const runSelect = document.getElementById("run-select") as HTMLSelectElement;
const paramsPane = document.getElementById("params") as HTMLElement;
const heatmapPane = document.getElementById("heatmap") as HTMLElement;
const galleryPane = document.getElementById("gallery") as HTMLElement;
const statusLine = document.getElementById("status") as HTMLElement;

let lastRecords: RecordsResponse | null = null;

function showError(message: string): void {
  statusLine.textContent = message;
  statusLine.classList.add("error");
}

function clearError(): void {
  statusLine.textContent = "";
  statusLine.classList.remove("error");
}

const MODES: ParamMode[] = ["axis_x", "axis_y", "slider", "aggregate"];
const MODE_LABELS: Record<ParamMode, string> = {
  axis_x: "x axis",
  axis_y: "y axis",
  slider: "slider",
  aggregate: "aggregate",
};

function renderParamControls(): void {
  const rows: string[] = [];
  for (const [name, param] of state.params) {
    const info = state.paramInfo.get(name) as ParamInfo;
    const picker = MODES.map(
      (mode) =>
        `<label><input type="radio" name="mode-${name}" value="${mode}"` +
        `${param.mode === mode ? " checked" : ""}> ${MODE_LABELS[mode]}</label>`,
    ).join("");
    const slider =
      param.mode === "slider"
        ? `<select class="slider" data-param="${name}">` +
          info.values
            .map(
              (value) =>
                `<option value="${String(value)}"` +
                `${String(param.sliderValue) === String(value) ? " selected" : ""}>` +
                `${String(value)}</option>`,
            )
            .join("") +
          `</select>`
        : "";
    rows.push(
      `<fieldset class="param" data-param="${name}">` +
        `<legend>${name}${info.record_field ? " *" : ""}</legend>` +
        `<div class="modes">${picker}</div>${slider}</fieldset>`,
    );
  }
  paramsPane.innerHTML = rows.join("");

  paramsPane.querySelectorAll<HTMLInputElement>("input[type=radio]").forEach((input) => {
    input.addEventListener("change", () => {
      const name = input.name.slice("mode-".length);
      setMode(state, name, input.value as ParamMode);
      renderParamControls();
      void refreshHeatmap();
    });
  });
  paramsPane.querySelectorAll<HTMLSelectElement>("select.slider").forEach((select) => {
    select.addEventListener("change", () => {
      const name = select.dataset.param as string;
      const info = state.paramInfo.get(name) as ParamInfo;
      const raw = select.value;
      setSliderValue(state, name, info.kind === "continuous" ? Number(raw) : raw);
      void refreshHeatmap();
    });
  });
}

async function refreshHeatmap(): Promise<void> {
  clearError();
  galleryPane.innerHTML = "";
  lastRecords = null;
  const query = heatmapQuery(state);
  if (!query) {
    heatmapPane.innerHTML = renderPlaceholder();
    return;
  }
  try {
    const matrix = await client.heatmap(query);
    heatmapPane.innerHTML = renderHeatmap(matrix);
    attachCellHover();
  } catch (error) {
    if ((error as Error).name === "AbortError") return;
    showError(error instanceof ApiError ? error.message : String(error));
  }
}

function attachCellHover(): void {
  heatmapPane.querySelectorAll<HTMLTableCellElement>("td.cell").forEach((cell) => {
    cell.addEventListener("mouseenter", () => {
      if (cell.classList.contains("cell-empty")) {
        galleryPane.innerHTML = `<p class="placeholder">no samples</p>`;
        return;
      }
      const i = Number(cell.dataset.i);
      const j = Number(cell.dataset.j);
      state.hoveredCell = { i, j };
      state.galleryPage = 0;
      void refreshGallery();
    });
  });
}

async function refreshGallery(): Promise<void> {
  if (!state.hoveredCell || !state.run) return;
  const query = cellQuery(state, state.hoveredCell.i, state.hoveredCell.j);
  if (!query) return;
  try {
    lastRecords = await client.records(query);
    paintGallery();
  } catch (error) {
    if ((error as Error).name === "AbortError") return;
    showError(error instanceof ApiError ? error.message : String(error));
  }
}

function paintGallery(): void {
  if (!lastRecords || !state.run) return;
  galleryPane.innerHTML = renderGallery(lastRecords, apiBase, state.run, state.galleryPage);
  // thumbnails degrade to metadata rows when the run saved no rgb buffers
  galleryPane.querySelectorAll<HTMLImageElement>("img[data-degrade]").forEach((img) => {
    img.addEventListener("error", () => {
      img.closest("figure")?.classList.add("tile-noimage");
      img.remove();
    });
  });
  galleryPane.querySelectorAll<HTMLButtonElement>("button[data-pager]").forEach((button) => {
    button.addEventListener("click", () => {
      const total = lastRecords ? lastRecords.records.length : 0;
      const pages = Math.max(1, Math.ceil(total / GALLERY_PAGE_SIZE));
      const delta = button.dataset.pager === "next" ? 1 : -1;
      state.galleryPage = Math.min(Math.max(state.galleryPage + delta, 0), pages - 1);
      paintGallery();
    });
  });
}

async function selectRun(run: string): Promise<void> {
  clearError();
  try {
    const response = await client.params(run);
    loadParams(state, run, response.params);
    // sensible default: first two parameters become the axes
    const names = response.params.map((p) => p.name);
    if (names.length >= 2) {
      setMode(state, names[0], "axis_x");
      setMode(state, names[1], "axis_y");
    }
    renderParamControls();
    await refreshHeatmap();
  } catch (error) {
    showError(error instanceof ApiError ? error.message : String(error));
  }
}

async function boot(): Promise<void> {
  try {
    const runs = await client.experiments();
    runSelect.innerHTML = runs
      .map((r) => `<option value="${r.run}">${r.run} (${r.totals.completed} records)</option>`)
      .join("");
    runSelect.addEventListener("change", () => void selectRun(runSelect.value));
    if (runs.length > 0) await selectRun(runs[0].run);
    else heatmapPane.innerHTML = `<p class="placeholder">no runs found</p>`;
  } catch (error) {
    showError(`cannot reach the dashboard API: ${String(error)}`);
  }
}

void boot();

// axes() is re-exported onto window for quick console debugging
(globalThis as Record<string, unknown>).simscopeDebug = { state, axes };
