/** Typed client for the local service; all persistence goes through here. */

export interface FileEntry {
  path: string;
  type: string;
  size: number;
  has_selections: boolean;
  has_annotations: boolean;
}

export interface SeriesResponse {
  file: string;
  column: string;
  columns: string[];
  n_total: number;
  rate_hz: number | null;
  decimated: boolean;
  idx: number[];
  t: number[];
  v: number[];
}

export interface Mark {
  frame: number;
  slot: number;
  x: number;
  y: number;
}

export interface AnnotationsResponse {
  file: string;
  frames: number;
  slots: number;
  marks: Mark[];
}

export interface SelectionsPayload {
  file: string;
  fz_column?: string | number;
  cx_column?: string | number;
  cy_column?: string | number;
  bw_window?: [number, number];
  analysis_windows?: [number, number][];
  picked_peaks?: number[];
  SideFoot_RL?: string;
  Dominance_RL?: string;
  Quality?: number;
  Trial?: number;
}

export interface RunStatus {
  status: string;
  tool: string;
  run_dir?: string;
  manifest?: { outputs: string[]; failures: unknown[]; status: string };
  error?: string;
}

export class ApiClient {
  constructor(private readonly base: string = "") {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await fetch(this.base + path, init);
    if (!resp.ok) {
      const body = await resp.text();
      throw new Error(`${init?.method ?? "GET"} ${path} -> ${resp.status}: ${body}`);
    }
    return (await resp.json()) as T;
  }

  listFiles(): Promise<FileEntry[]> {
    return this.request("/api/files");
  }

  getSeries(file: string, column?: string, maxPoints = 2000): Promise<SeriesResponse> {
    const params = new URLSearchParams({ file, max_points: String(maxPoints) });
    if (column !== undefined) params.set("column", column);
    return this.request(`/api/series?${params}`);
  }

  getAnnotations(file: string): Promise<AnnotationsResponse> {
    return this.request(`/api/annotations?${new URLSearchParams({ file })}`);
  }

  postAnnotations(file: string, deltas: Mark[]): Promise<unknown> {
    return this.request("/api/annotations", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ file, deltas }),
    });
  }

  postSelections(payload: SelectionsPayload): Promise<unknown> {
    return this.request("/api/selections", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(payload),
    });
  }

  runTool(tool: string, params: Record<string, unknown> = {}): Promise<{ run_id: string }> {
    return this.request(`/api/run/${tool}`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ params }),
    });
  }

  runStatus(runId: string): Promise<RunStatus> {
    return this.request(`/api/runs/${runId}`);
  }

  async waitForRun(runId: string, timeoutMs = 60_000, pollMs = 150): Promise<RunStatus> {
    const deadline = Date.now() + timeoutMs;
    for (;;) {
      const status = await this.runStatus(runId);
      if (["done", "failed", "partial"].includes(status.status)) return status;
      if (Date.now() > deadline) throw new Error(`run ${runId} timed out`);
      await new Promise((resolve) => setTimeout(resolve, pollMs));
    }
  }
}
