// Response shapes of the dashboard API. The UI never computes statistics:
// every number shown comes verbatim from one of these payloads.

export interface RunSummary {
  run: string;
  experiment: string;
  config_hash: string;
  totals: { scheduled: number; completed: number; errored: number; pending: number };
  started_at: string;
  finished_at: string | null;
}

export interface ParamInfo {
  name: string;
  kind: "continuous" | "discrete";
  record_field: boolean;
  lo?: number;
  hi?: number;
  /** observed sweep values (continuous) or the declared list (discrete) */
  values: Array<number | string>;
}

export interface ParamsResponse {
  run: string;
  params: ParamInfo[];
}

export interface HeatmapCell {
  accuracy: number | null;
  correct: number;
  n: number;
}

export interface HeatmapResponse {
  x_key: string;
  y_key: string;
  x_values: Array<number | string>;
  y_values: Array<number | string>;
  /** cells[j][i] pairs with (x_values[i], y_values[j]) */
  cells: HeatmapCell[][];
}

export interface LogRecord {
  id: number;
  mesh: string;
  environment: string;
  is_correct: boolean | null;
  values: Record<string, number | string>;
  prediction?: { task?: string; top1_label?: string | null; top1?: number | null };
  buffers?: Record<string, string>;
}

export interface RecordsResponse {
  x_value: number | string;
  y_value: number | string;
  n: number;
  records: LogRecord[];
}
