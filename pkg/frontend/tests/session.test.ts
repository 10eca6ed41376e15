import { describe, expect, it } from "vitest";

import type { ApiClient } from "../src/api.js";
import { ApiError } from "../src/api.js";
import { LabelSession } from "../src/session.js";
import type { SampleView } from "../src/types.js";

const SAMPLE_A: SampleView = {
  state: "awaiting_label",
  unit: [0, 3, 1, 2],
  phase: "negative",
  budget: 8,
  budget_used: 0,
  image: null,
  metadata: {
    vid: 0,
    fid: 3,
    width: 320,
    height: 240,
    o0: { oid: 1, oname: "box", bbox: [10, 10, 40, 40], anames: [] },
    o1: { oid: 2, oname: "disc", bbox: [100, 50, 150, 90], anames: [] },
    o0_o1_rnames: [],
    o1_o0_rnames: [],
  },
  concept: "behind(o0, o1)",
  description: "Whether o0 is behind o1",
};

interface StubCall {
  unit: number[];
  body: { label?: boolean; skip?: boolean };
}

class StubApi {
  posts: StubCall[] = [];
  samples: SampleView[] = [];
  labelBehavior: "ok" | "network" | "stale" | "hang" = "ok";
  budgetAfterLabel = 1;
  private hung: Array<() => void> = [];

  async sample(): Promise<SampleView> {
    if (this.samples.length === 0) return { state: "working" };
    return this.samples.length > 1
      ? (this.samples.shift() as SampleView)
      : this.samples[0];
  }

  private async post(unit: number[], body: StubCall["body"]) {
    if (this.labelBehavior === "network") {
      throw new TypeError("fetch failed");
    }
    if (this.labelBehavior === "stale") {
      throw new ApiError(409, "stale unit");
    }
    if (this.labelBehavior === "hang") {
      await new Promise<void>((resolve) => this.hung.push(resolve));
    }
    this.posts.push({ unit, body });
    return {
      ok: true,
      budget_used: body.skip ? 0 : this.budgetAfterLabel,
      done: false,
    };
  }

  label(_sid: string, unit: number[], label: boolean) {
    return this.post(unit, { label });
  }

  skip(_sid: string, unit: number[]) {
    return this.post(unit, { skip: true });
  }

  releaseHung(): void {
    for (const fn of this.hung.splice(0)) fn();
  }
}

function makeSession(stub: StubApi): LabelSession {
  return new LabelSession(stub as unknown as ApiClient, "s1");
}

describe("LabelSession", () => {
  it("double submission sends a single POST", async () => {
    const stub = new StubApi();
    stub.samples = [SAMPLE_A];
    stub.labelBehavior = "hang";
    const session = makeSession(stub);
    await session.refresh();
    const first = session.submit(true);
    const second = session.submit(true); // double-click while in flight
    stub.releaseHung();
    const [a, b] = await Promise.all([first, second]);
    expect(a).toBe(true);
    expect(b).toBe(false);
    expect(stub.posts).toHaveLength(1);
    expect(stub.posts[0].body).toEqual({ label: true });
  });

  it("nothing pending suppresses submission", async () => {
    const stub = new StubApi();
    const session = makeSession(stub);
    expect(await session.submit(true)).toBe(false);
    expect(stub.posts).toHaveLength(0);
  });

  it("skip posts the skip flag and keeps budget at zero", async () => {
    const stub = new StubApi();
    stub.samples = [SAMPLE_A];
    const session = makeSession(stub);
    await session.refresh();
    const events: number[] = [];
    session.onEvent((ev) => {
      if (ev.kind === "submitted") events.push(ev.budgetUsed);
    });
    expect(await session.skip()).toBe(true);
    expect(stub.posts[0].body).toEqual({ skip: true });
    expect(events).toEqual([0]);
  });

  it("network failure keeps the pending sample (no label loss)", async () => {
    const stub = new StubApi();
    stub.samples = [SAMPLE_A];
    stub.labelBehavior = "network";
    const session = makeSession(stub);
    await session.refresh();
    let sawError = false;
    session.onEvent((ev) => {
      if (ev.kind === "network-error") sawError = true;
    });
    expect(await session.submit(true)).toBe(false);
    expect(session.pendingUnit).toEqual(SAMPLE_A.unit);
    expect(sawError).toBe(true);
    expect(stub.posts).toHaveLength(0);
  });

  it("stale rejection clears the view for a refetch", async () => {
    const stub = new StubApi();
    stub.samples = [SAMPLE_A];
    stub.labelBehavior = "stale";
    const session = makeSession(stub);
    await session.refresh();
    expect(await session.submit(false)).toBe(false);
    expect(session.pendingUnit).toBeNull();
  });

  it("waitForSample polls through working states", async () => {
    const stub = new StubApi();
    stub.samples = [{ state: "working" }, { state: "working" }, SAMPLE_A];
    const session = makeSession(stub);
    const view = await session.waitForSample({ intervalMs: 1 });
    expect(view.state).toBe("awaiting_label");
    expect(view.unit).toEqual(SAMPLE_A.unit);
  });

  it("finished sessions emit the finished event", async () => {
    const stub = new StubApi();
    stub.samples = [{ state: "done" }];
    const session = makeSession(stub);
    let finished = false;
    session.onEvent((ev) => {
      if (ev.kind === "finished") finished = true;
    });
    await session.refresh();
    expect(finished).toBe(true);
  });
});
