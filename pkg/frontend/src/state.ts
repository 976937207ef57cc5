// View state and its rules. Each run parameter is in exactly one mode:
// heat-map axis (x or y), slider (exact-value filter), or aggregate (no
// filter). The heatmap only renders once exactly one x axis and one y axis
// are assigned; assigning an axis role steals it from its previous holder.

import type { ParamInfo } from "./types.js";

export type ParamMode = "axis_x" | "axis_y" | "slider" | "aggregate";

export interface ParamState {
  mode: ParamMode;
  sliderValue: number | string | null;
}

export interface ViewState {
  run: string | null;
  params: Map<string, ParamState>;
  paramInfo: Map<string, ParamInfo>;
  hoveredCell: { i: number; j: number } | null;
  galleryPage: number;
}

export function initialState(): ViewState {
  return {
    run: null,
    params: new Map(),
    paramInfo: new Map(),
    hoveredCell: null,
    galleryPage: 0,
  };
}

export function loadParams(state: ViewState, run: string, params: ParamInfo[]): void {
  state.run = run;
  state.params = new Map();
  state.paramInfo = new Map();
  state.hoveredCell = null;
  state.galleryPage = 0;
  for (const param of params) {
    state.paramInfo.set(param.name, param);
    state.params.set(param.name, { mode: "aggregate", sliderValue: null });
  }
}

export function setMode(state: ViewState, name: string, mode: ParamMode): void {
  const target = state.params.get(name);
  if (!target) throw new Error(`unknown parameter ${name}`);
  if (mode === "axis_x" || mode === "axis_y") {
    for (const other of state.params.values()) {
      if (other !== target && other.mode === mode) other.mode = "aggregate";
    }
  }
  target.mode = mode;
  if (mode === "slider" && target.sliderValue === null) {
    const info = state.paramInfo.get(name);
    target.sliderValue = info && info.values.length ? info.values[0] : null;
  }
  if (mode !== "slider") target.sliderValue = null;
  state.hoveredCell = null;
  state.galleryPage = 0;
}

export function setSliderValue(state: ViewState, name: string, value: number | string): void {
  const target = state.params.get(name);
  const info = state.paramInfo.get(name);
  if (!target || !info) throw new Error(`unknown parameter ${name}`);
  if (target.mode !== "slider") throw new Error(`${name} is not in slider mode`);
  if (!isValueAllowed(info, value)) {
    throw new Error(`value ${String(value)} outside the range of ${name}`);
  }
  target.sliderValue = value;
  state.hoveredCell = null;
  state.galleryPage = 0;
}

export function isValueAllowed(info: ParamInfo, value: number | string): boolean {
  if (info.kind === "continuous") {
    const v = typeof value === "number" ? value : Number(value);
    if (!Number.isFinite(v)) return false;
    if (info.lo !== undefined && v < info.lo) return false;
    if (info.hi !== undefined && v > info.hi) return false;
    return true;
  }
  return info.values.some((allowed) => String(allowed) === String(value));
}

export interface Axes {
  x: string;
  y: string;
}

/** The two axis parameters, or null until exactly one x and one y exist. */
export function axes(state: ViewState): Axes | null {
  let x: string | null = null;
  let y: string | null = null;
  for (const [name, param] of state.params) {
    if (param.mode === "axis_x") x = x === null ? name : x;
    if (param.mode === "axis_y") y = y === null ? name : y;
  }
  return x !== null && y !== null && x !== y ? { x, y } : null;
}

export function sliderEntries(state: ViewState): Array<[string, string]> {
  const entries: Array<[string, string]> = [];
  for (const [name, param] of state.params) {
    if (param.mode === "slider" && param.sliderValue !== null) {
      entries.push([name, String(param.sliderValue)]);
    }
  }
  entries.sort((a, b) => (a[0] < b[0] ? -1 : 1));
  return entries;
}

/** Query for /api/heatmap, or null while axes are incomplete. */
export function heatmapQuery(state: ViewState): URLSearchParams | null {
  const axesNow = axes(state);
  if (!state.run || !axesNow) return null;
  const query = new URLSearchParams({ run: state.run, x: axesNow.x, y: axesNow.y });
  for (const [name, value] of sliderEntries(state)) query.append(name, value);
  return query;
}

/** Query for /api/records for one hovered cell (i indexes x, j indexes y). */
export function cellQuery(state: ViewState, i: number, j: number): URLSearchParams | null {
  const query = heatmapQuery(state);
  if (!query) return null;
  query.append("cell", `${i},${j}`);
  return query;
}
