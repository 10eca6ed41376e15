import { ApiClient, ApiError } from "./api.js";
import type { SampleView } from "./types.js";

export type SessionEvent =
  | { kind: "sample"; view: SampleView }
  | { kind: "submitted"; budgetUsed: number; done: boolean }
  | { kind: "finished" }
  | { kind: "network-error"; message: string };

/** Client-side session state machine.
 *
 * Exactly one pending sample at a time; while a label request is in
 * flight further submissions are ignored (double-click safe), and a
 * network failure keeps the pending sample so no label is lost.
 */
export class LabelSession {
  current: SampleView | null = null;
  inFlight = false;
  lastError: string | null = null;
  private listeners: Array<(ev: SessionEvent) => void> = [];

  constructor(
    readonly api: ApiClient,
    readonly id: string,
  ) {}

  onEvent(fn: (ev: SessionEvent) => void): void {
    this.listeners.push(fn);
  }

  private emit(ev: SessionEvent): void {
    for (const fn of this.listeners) fn(ev);
  }

  get pendingUnit(): number[] | null {
    return this.current?.state === "awaiting_label"
      ? (this.current.unit ?? null)
      : null;
  }

  async refresh(): Promise<SampleView> {
    try {
      const view = await this.api.sample(this.id);
      this.current = view;
      this.lastError = null;
      this.emit({ kind: "sample", view });
      if (view.state === "done" || view.state === "failed") {
        this.emit({ kind: "finished" });
      }
      return view;
    } catch (err) {
      this.lastError = String(err);
      this.emit({ kind: "network-error", message: this.lastError });
      throw err;
    }
  }

  /** Poll until a sample is pending or the session has ended. */
  async waitForSample(
    { timeoutMs = 60_000, intervalMs = 25 } = {},
  ): Promise<SampleView> {
    const deadline = Date.now() + timeoutMs;
    for (;;) {
      let view: SampleView | null = null;
      try {
        view = await this.refresh();
      } catch {
        // transient network failure: keep polling until the deadline
      }
      if (
        view &&
        (view.state === "awaiting_label" ||
          view.state === "done" ||
          view.state === "failed")
      ) {
        return view;
      }
      if (Date.now() > deadline) {
        throw new Error(`session ${this.id} produced no sample in time`);
      }
      await sleep(intervalMs);
    }
  }

  /** Submit a yes/no label for the pending sample. Returns false when the
   * submission was suppressed (nothing pending or a request in flight). */
  async submit(label: boolean): Promise<boolean> {
    return this.send((unit) => this.api.label(this.id, unit, label));
  }

  /** Skip the pending sample; the server consumes no budget for skips. */
  async skip(): Promise<boolean> {
    return this.send((unit) => this.api.skip(this.id, unit));
  }

  private async send(
    post: (
      unit: number[],
    ) => Promise<{ ok: boolean; budget_used: number; done: boolean }>,
  ): Promise<boolean> {
    const unit = this.pendingUnit;
    if (unit === null || this.inFlight) {
      return false;
    }
    this.inFlight = true;
    try {
      const resp = await post(unit);
      this.current = null; // advanced: force a refetch for the next sample
      this.emit({
        kind: "submitted",
        budgetUsed: resp.budget_used,
        done: resp.done,
      });
      return true;
    } catch (err) {
      if (err instanceof ApiError && err.stale) {
        this.current = null; // someone else advanced the session: refetch
        return false;
      }
      this.lastError = String(err);
      this.emit({ kind: "network-error", message: this.lastError });
      return false;
    } finally {
      this.inFlight = false;
    }
  }
}

export async function startSession(
  api: ApiClient,
  text: string,
  overrides: Record<string, unknown> = {},
): Promise<LabelSession> {
  const { session_id } = await api.startQuery(text, {
    labeler: "interactive",
    ...overrides,
  });
  return new LabelSession(api, session_id);
}

export function resumeSession(api: ApiClient, id: string): LabelSession {
  return new LabelSession(api, id);
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}
