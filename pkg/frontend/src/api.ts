/**
 * Typed client for the session service. Only the documented routes are
 * used; the fetch implementation is injectable so tests can run without a
 * server.
 */

export interface TraceEvent {
  ts: number;
  kind: string;
  payload: Record<string, unknown>;
}

export interface TrialReport {
  session: string;
  state: string;
  excluded: boolean;
  plan_steps: number;
  steps_done: number[];
  failures: Record<string, number>;
  failure_note: string;
}

export interface SessionSummary {
  session_id: string;
  state: string;
  plan: string | null;
  report: TrialReport | null;
}

export interface TracePage {
  events: TraceEvent[];
  next: number;
  state: string;
}

export interface ObjectSnapshot {
  position: [number, number, number];
  shape: Record<string, unknown> & { kind: string };
  color: string;
  support: string | null;
  support_kind: string | null;
  graspable: boolean;
  container: boolean;
  is_lid_of: string | null;
  tag_id: number | null;
}

export interface WorldSnapshot {
  table_z: number;
  table_extent: [[number, number], [number, number]];
  gripper: string | null;
  objects: Record<string, ObjectSnapshot>;
}

export type InterventionAction = "skip" | "reposition" | "retry" | "abort";

export type FetchLike = (
  url: string,
  init?: RequestInit,
) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    detail: string,
  ) {
    super(`${code}: ${detail}`);
  }
}

async function errorFrom(response: Response): Promise<ApiError> {
  let code = `HTTP ${response.status}`;
  let detail = response.statusText;
  try {
    const body = (await response.json()) as { error?: string; detail?: string };
    if (body.error) code = body.error;
    if (body.detail) detail = body.detail;
  } catch {
    // non-JSON error body; keep the HTTP status text
  }
  return new ApiError(response.status, code, detail);
}

export class Client {
  private readonly base: string;

  constructor(
    baseUrl: string,
    private readonly token: string = "",
    private readonly fetchImpl: FetchLike = (...args) => fetch(...args),
  ) {
    this.base = baseUrl.replace(/\/+$/, "");
  }

  private headers(withBody: boolean): Record<string, string> {
    const out: Record<string, string> = {};
    if (withBody) out["Content-Type"] = "application/json";
    if (this.token) out["Authorization"] = `Bearer ${this.token}`;
    return out;
  }

  private async request<T>(
    method: string,
    path: string,
    body?: unknown,
  ): Promise<T> {
    const init: RequestInit = {
      method,
      headers: this.headers(body !== undefined),
    };
    if (body !== undefined) init.body = JSON.stringify(body);
    const response = await this.fetchImpl(`${this.base}${path}`, init);
    if (!response.ok) throw await errorFrom(response);
    return (await response.json()) as T;
  }

  createSession(trial?: number): Promise<SessionSummary> {
    return this.request("POST", "/sessions", trial === undefined ? {} : { trial });
  }

  listSessions(): Promise<SessionSummary[]> {
    return this.request("GET", "/sessions");
  }

  getSession(sid: string): Promise<SessionSummary> {
    return this.request("GET", `/sessions/${encodeURIComponent(sid)}`);
  }

  sendMessage(sid: string, text: string): Promise<SessionSummary> {
    return this.request("POST", `/sessions/${encodeURIComponent(sid)}/message`, {
      text,
    });
  }

  confirm(sid: string, accept: boolean): Promise<SessionSummary> {
    return this.request("POST", `/sessions/${encodeURIComponent(sid)}/confirm`, {
      accept,
    });
  }

  intervene(sid: string, action: InterventionAction): Promise<SessionSummary> {
    return this.request(
      "POST",
      `/sessions/${encodeURIComponent(sid)}/intervention`,
      { action },
    );
  }

  trace(sid: string, after = 0): Promise<TracePage> {
    return this.request(
      "GET",
      `/sessions/${encodeURIComponent(sid)}/trace?after=${after}`,
    );
  }

  graph(sid: string): Promise<Record<string, unknown>> {
    return this.request("GET", `/sessions/${encodeURIComponent(sid)}/graph`);
  }

  world(sid: string): Promise<WorldSnapshot> {
    return this.request("GET", `/sessions/${encodeURIComponent(sid)}/world`);
  }

  /**
   * Open the event stream with fetch so the bearer header can be sent
   * (EventSource cannot attach headers). Yields the raw text chunks;
   * callers feed them to an SseParser.
   */
  async streamEvents(
    sid: string,
    after: number,
    timeoutSeconds: number,
    onChunk: (chunk: string) => void,
    signal?: AbortSignal,
  ): Promise<void> {
    const url =
      `${this.base}/sessions/${encodeURIComponent(sid)}/events` +
      `?after=${after}&timeout=${timeoutSeconds}`;
    const init: RequestInit = { headers: this.headers(false) };
    if (signal) init.signal = signal;
    const response = await this.fetchImpl(url, init);
    if (!response.ok) throw await errorFrom(response);
    if (!response.body) return;
    const reader = response.body.getReader();
    const decoder = new TextDecoder();
    for (;;) {
      const { done, value } = await reader.read();
      if (done) break;
      onChunk(decoder.decode(value, { stream: true }));
    }
  }
}
