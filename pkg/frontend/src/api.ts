// Thin typed client for the dashboard API. Re-issuing a request under the
// same cancel key aborts the in-flight one, so rapid mode changes never
// paint stale responses.

import type { HeatmapResponse, ParamsResponse, RecordsResponse, RunSummary } from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
  }
}

type FetchLike = (url: string, init?: { signal?: AbortSignal }) => Promise<{
  ok: boolean;
  status: number;
  json(): Promise<unknown>;
}>;

export class ApiClient {
  private inflight = new Map<string, AbortController>();

  constructor(
    readonly base: string = "",
    private fetchImpl: FetchLike = fetch.bind(globalThis),
  ) {}

  private async get<T>(path: string, query?: URLSearchParams, cancelKey?: string): Promise<T> {
    const url = `${this.base}${path}${query ? `?${query.toString()}` : ""}`;
    let signal: AbortSignal | undefined;
    if (cancelKey) {
      this.inflight.get(cancelKey)?.abort();
      const controller = new AbortController();
      this.inflight.set(cancelKey, controller);
      signal = controller.signal;
    }
    const response = await this.fetchImpl(url, { signal });
    if (!response.ok) {
      const body = (await response.json().catch(() => null)) as { detail?: string } | null;
      throw new ApiError(response.status, body?.detail ?? `HTTP ${response.status}`);
    }
    return (await response.json()) as T;
  }

  experiments(): Promise<RunSummary[]> {
    return this.get("/api/experiments");
  }

  params(run: string): Promise<ParamsResponse> {
    return this.get("/api/params", new URLSearchParams({ run }));
  }

  heatmap(query: URLSearchParams): Promise<HeatmapResponse> {
    return this.get("/api/heatmap", query, "heatmap");
  }

  records(query: URLSearchParams): Promise<RecordsResponse> {
    return this.get("/api/records", query, "records");
  }
}
