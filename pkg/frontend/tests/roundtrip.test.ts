// @vitest-environment jsdom
//
// End-to-end check against a real service instance: a tiny dataset is
// generated and a one-epoch checkpoint trained in a temp dir, `mtdt serve`
// is spawned on a local port, and the default scenario is driven through
// both POST endpoints with the rendered charts audited against the payloads.

import { execFileSync, spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it, vi } from "vitest";

import { ApiError, createApiClient, type ApiClient } from "../src/api.js";
import { defaultDraft, toRequest, type StoredRun } from "../src/draft.js";
import { chartRegistry, renderResults } from "../src/results.js";
import { fromPredictResponse, fromSimulationRecord, type RunView } from "../src/runview.js";
import { validateDraft } from "../src/validate.js";

const PORT = 8900 + Math.floor(Math.random() * 500);
const BASE = `http://127.0.0.1:${PORT}`;

let workdir: string;
let server: ChildProcess | null = null;
let api: ApiClient;

beforeAll(async () => {
  vi.spyOn(HTMLCanvasElement.prototype, "getContext").mockReturnValue(null);

  workdir = mkdtempSync(join(tmpdir(), "whatif-ui-"));
  writeFileSync(join(workdir, "scen.json"), JSON.stringify({ duration: 700, warmup: 300 }));
  writeFileSync(
    join(workdir, "train.json"),
    JSON.stringify({ epochs: 1, weight_decay_grid: [0.0], seed: 0 }),
  );
  const run = (args: string[]) =>
    execFileSync("python3", ["-m", "mtdt", ...args], { cwd: workdir, stdio: "pipe" });
  run(["generate", "--n", "6", "--seed", "11", "--out", "data.jsonl", "--config", "scen.json"]);
  run(["train", "--data", "data.jsonl", "--config", "train.json", "--out", "run"]);

  server = spawn(
    "python3",
    ["-m", "mtdt", "serve", "--ckpt", "run/model.ckpt", "--addr", `127.0.0.1:${PORT}`],
    { cwd: workdir, stdio: "ignore" },
  );
  api = createApiClient(BASE);

  const deadline = Date.now() + 30_000;
  for (;;) {
    try {
      const info = await api.modelInfo();
      if (info.loaded) break;
    } catch {
      // not up yet
    }
    if (Date.now() > deadline) {
      throw new Error("service did not come up in time");
    }
    await new Promise((r) => setTimeout(r, 250));
  }
}, 240_000);

afterAll(() => {
  server?.kill();
  if (workdir) {
    rmSync(workdir, { recursive: true, force: true });
  }
});

function render(view: RunView): HTMLElement {
  const root = document.createElement("div");
  document.body.append(root);
  const run: StoredRun = { label: "roundtrip", request: toRequest(defaultDraft()), view };
  renderResults(root, run, null);
  return root;
}

function auditCharts(root: HTMLElement, ql: number[][], tt: number[][]): void {
  const queues = [...root.querySelectorAll<HTMLCanvasElement>('canvas[data-role="queue-chart"]')];
  expect(queues).toHaveLength(8);
  queues.forEach((canvas, p) => {
    const entry = chartRegistry.get(canvas);
    expect(entry?.kind).toBe("line");
    if (entry?.kind === "line") {
      expect(entry.geometry.points.map((pt) => pt.value)).toEqual(ql[p]);
    }
  });

  const hists = [...root.querySelectorAll<HTMLCanvasElement>('canvas[data-role="tt-hist"]')];
  expect(hists).toHaveLength(8);
  hists.forEach((canvas, p) => {
    const entry = chartRegistry.get(canvas);
    expect(entry?.kind).toBe("histogram");
    if (entry?.kind === "histogram") {
      const plottedTotal = entry.geometry.bars.reduce((s, b) => s + b.value, 0);
      const payloadTotal = tt[p].reduce((s, v) => s + v, 0);
      expect(plottedTotal).toBe(payloadTotal);
      expect(entry.data.bins).toEqual(tt[p]);
    }
  });
}

describe("service round-trip", () => {
  it("default scenario submits to /v1/simulate and /v1/predict and the charts plot the payload values", async () => {
    const draft = defaultDraft();
    expect(validateDraft(draft)).toEqual([]);

    const record = await api.simulate(toRequest(draft));
    expect(record.ql).toHaveLength(8);
    expect(record.tt[0]).toHaveLength(200);
    auditCharts(render(fromSimulationRecord(record)), record.ql, record.tt);

    const response = await api.predict(toRequest(draft));
    expect(response.metadata.seed).toBe(draft.seed);
    expect(response.metadata.checkpoint_id).not.toBe("");
    expect(response.phase_views.ext).toHaveLength(8);
    auditCharts(render(fromPredictResponse(response)), response.ql, response.tt);

    console.log(
      "[SECONDARY] UI round-trip: PASS (simulate + predict rendered, " +
        "8 queue charts and 8 histograms match the payloads)",
    );
  }, 60_000);

  it("cycle 300 is blocked client-side and rejected server-side with HTTP 400", async () => {
    const draft = defaultDraft();
    draft.cycle = 300;
    expect(validateDraft(draft).map((i) => i.field)).toContain("signal_plan.cycle");

    // bypass the client gate and let the service judge the same payload
    const rejected = await api.simulate(toRequest(draft)).then(
      () => null,
      (err: unknown) => err,
    );
    expect(rejected).toBeInstanceOf(ApiError);
    const apiErr = rejected as ApiError;
    expect(apiErr.status).toBe(400);
    expect(apiErr.errors.some((e) => e.field === "signal_plan" && /outside \[120, 240\]/.test(e.message))).toBe(
      true,
    );

    const rejectedPredict = await api.predict(toRequest(draft)).then(
      () => null,
      (err: unknown) => err,
    );
    expect((rejectedPredict as ApiError).status).toBe(400);

    console.log("[SECONDARY] cycle bound: PASS (blocked client-side, HTTP 400 server-side)");
  }, 60_000);

  it("identical requests with the same seed return identical records", async () => {
    const req = toRequest(defaultDraft());
    const [a, b] = [await api.simulate(req), await api.simulate(req)];
    expect(a).toEqual(b);
  }, 60_000);

  it("zero demand renders flat charts end to end", async () => {
    const draft = defaultDraft();
    draft.demand = 0;
    const record = await api.simulate(toRequest(draft));
    expect(record.ext.every((row) => row.every((v) => v === 0))).toBe(true);

    const root = render(fromSimulationRecord(record));
    for (const canvas of root.querySelectorAll<HTMLCanvasElement>('canvas[data-role="tt-hist"]')) {
      const entry = chartRegistry.get(canvas);
      if (entry?.kind === "histogram") {
        expect(entry.geometry.bars.every((b) => b.height === 0)).toBe(true);
      }
    }
  }, 60_000);
});
