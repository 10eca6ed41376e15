import type { CandidatesView, ResultView, SampleView } from "./types.js";

/** Thin typed wrapper over the labeling HTTP API. */
export class ApiClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchFn(`${this.baseUrl}${path}`, init);
    const body = (await resp.json()) as T & { error?: string };
    if (!resp.ok) {
      throw new ApiError(resp.status, body?.error ?? `HTTP ${resp.status}`);
    }
    return body;
  }

  status(): Promise<{ status: string; active_session: string | null }> {
    return this.request("/api/status");
  }

  startQuery(
    text: string,
    overrides: Record<string, unknown> = {},
  ): Promise<{ session_id: string }> {
    return this.request("/api/query", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ text, overrides }),
    });
  }

  sample(sessionId: string): Promise<SampleView> {
    return this.request(`/api/session/${sessionId}/sample`);
  }

  label(
    sessionId: string,
    unit: number[],
    label: boolean,
  ): Promise<{ ok: boolean; budget_used: number; done: boolean }> {
    return this.request(`/api/session/${sessionId}/label`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ unit, label }),
    });
  }

  skip(
    sessionId: string,
    unit: number[],
  ): Promise<{ ok: boolean; budget_used: number; done: boolean }> {
    return this.request(`/api/session/${sessionId}/label`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ unit, skip: true }),
    });
  }

  candidates(sessionId: string): Promise<CandidatesView> {
    return this.request(`/api/session/${sessionId}/candidates`);
  }

  result(sessionId: string): Promise<ResultView> {
    return this.request(`/api/session/${sessionId}/result`);
  }
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
  }

  /** 409s mean our view of the pending unit is stale; refetch, don't retry. */
  get stale(): boolean {
    return this.status === 409;
  }
}
