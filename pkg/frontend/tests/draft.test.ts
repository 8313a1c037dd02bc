import { describe, expect, it } from "vitest";

import { createRunStore, defaultDraft, draftIsValid, toRequest, type StoredRun } from "../src/draft.js";
import type { RunView } from "../src/runview.js";

function stubRun(label: string): StoredRun {
  const view: RunView = {
    source: "predict",
    seed: 0,
    headerLines: [],
    ext: [[0]],
    inf: [[0]],
    ql: [[0]],
    tt: [[0]],
    phaseViews: null,
    raw: {},
  };
  return { label, request: toRequest(defaultDraft()), view };
}

describe("toRequest", () => {
  it("carries every field of the draft, seed included", () => {
    const draft = defaultDraft();
    draft.seed = 1234;
    const req = toRequest(draft);
    expect(req.seed).toBe(1234);
    expect(req.topology).toBe("xw-standard");
    expect(req.signal_plan.cycle).toBe(160);
    expect(Object.keys(req.signal_plan.phases)).toHaveLength(8);
    expect(req.signal_plan.phases["6"]).toEqual({ green: 55 });
    expect(req.demand_rate).toBe(0.15);
    expect(req.duration).toBe(1000);
    expect(req.window_start).toBe(600);
    expect(req.mode).toBe("predict");
    expect(req.drv?.accel).toBe(2.6);
  });

  it("renormalizes turn rows on the way out without touching the draft", () => {
    const draft = defaultDraft();
    draft.turnRatios[1] = [2, 2, 2];
    const req = toRequest(draft);
    expect(req.turn_ratios?.[1].every((v) => Math.abs(v - 1 / 3) < 1e-12)).toBe(true);
    expect(draft.turnRatios[1]).toEqual([2, 2, 2]);
  });

  it("leaves the barrier to the service", () => {
    const req = toRequest(defaultDraft()) as Record<string, unknown>;
    expect("barrier" in (req.signal_plan as Record<string, unknown>)).toBe(false);
  });
});

describe("draftIsValid", () => {
  it("is true for the default and false once a range is violated", () => {
    const draft = defaultDraft();
    expect(draftIsValid(draft)).toBe(true);
    draft.cycle = 300;
    expect(draftIsValid(draft)).toBe(false);
  });
});

describe("run store", () => {
  it("keeps the latest run as current and one pinned run", () => {
    const store = createRunStore();
    expect(store.current).toBeNull();
    expect(store.pinned).toBeNull();

    const a = stubRun("a");
    const b = stubRun("b");
    const c = stubRun("c");

    store.push(a);
    expect(store.current).toBe(a);
    store.pin();
    expect(store.pinned).toBe(a);

    store.push(b);
    expect(store.current).toBe(b);
    expect(store.pinned).toBe(a); // pin survives new runs

    store.pin();
    expect(store.pinned).toBe(b); // re-pinning replaces the slot

    store.push(c);
    store.unpin();
    expect(store.pinned).toBeNull();
    expect(store.current).toBe(c);
  });

  it("pin without a run is a no-op", () => {
    const store = createRunStore();
    store.pin();
    expect(store.pinned).toBeNull();
  });
});
