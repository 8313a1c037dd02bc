// The scenario being edited, plus the two-slot run store used for
// comparisons (the latest response and one pinned earlier response).

import { DRV_DEFAULTS, type DrvField, type PredictRequest } from "./types.js";
import type { RunView } from "./runview.js";
import { renormalizeRow, validateDraft } from "./validate.js";

export interface ScenarioDraft {
  topology: string;
  cycle: number;
  offset: number;
  greens: Record<number, number>;
  drv: Record<DrvField, number>;
  turnRatios: number[][];
  demand: number;
  seed: number;
  duration: number;
  windowStart: number;
  mode: "predict" | "simulate";
}

// A plan that fills a 160s cycle with slack after the barrier; known to
// pass service validation as-is.
const DEFAULT_GREENS: Record<number, number> = {
  1: 12, 2: 53, 3: 14, 4: 51,
  5: 10, 6: 55, 7: 16, 8: 49,
};

export function defaultDraft(topology = "xw-standard"): ScenarioDraft {
  return {
    topology,
    cycle: 160,
    offset: 0,
    greens: { ...DEFAULT_GREENS },
    drv: { ...DRV_DEFAULTS },
    turnRatios: [
      [0.2, 0.65, 0.15],
      [0.2, 0.65, 0.15],
      [0.2, 0.65, 0.15],
      [0.2, 0.65, 0.15],
    ],
    demand: 0.15,
    seed: 0,
    duration: 1000,
    windowStart: 600,
    mode: "predict",
  };
}

export function draftIsValid(draft: ScenarioDraft): boolean {
  return validateDraft(draft).length === 0;
}

/** The exact request body; the barrier is left for the service to derive. */
export function toRequest(draft: ScenarioDraft): PredictRequest {
  const phases: Record<string, { green: number }> = {};
  for (let p = 1; p <= 8; p++) {
    phases[String(p)] = { green: draft.greens[p] ?? 0 };
  }
  return {
    topology: draft.topology,
    signal_plan: { cycle: draft.cycle, offset: draft.offset, phases },
    drv: { ...draft.drv },
    turn_ratios: draft.turnRatios.map((row) => renormalizeRow(row)),
    demand_rate: draft.demand,
    seed: draft.seed,
    duration: draft.duration,
    window_start: draft.windowStart,
    mode: draft.mode,
  };
}

// ---------------------------------------------------------------------------
// comparison slots

export interface StoredRun {
  label: string;
  request: PredictRequest;
  view: RunView;
}

export interface RunStore {
  readonly current: StoredRun | null;
  readonly pinned: StoredRun | null;
  push(run: StoredRun): void;
  pin(): void;
  unpin(): void;
}

export function createRunStore(): RunStore {
  let current: StoredRun | null = null;
  let pinned: StoredRun | null = null;
  return {
    get current() {
      return current;
    },
    get pinned() {
      return pinned;
    },
    push(run) {
      current = run;
    },
    pin() {
      if (current) {
        pinned = current;
      }
    },
    unpin() {
      pinned = null;
    },
  };
}
