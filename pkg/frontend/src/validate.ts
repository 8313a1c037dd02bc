// Client-side mirror of the service's request validation.  Submission is
// blocked while any of these fail, so well-formed drafts are the only ones
// that ever reach the wire; the server remains the authority and its 400
// errors render through the same {field, message} shape.

import {
  CLEARANCE,
  CYCLE_MAX,
  CYCLE_MIN,
  DEMAND_MAX,
  DRV_FIELDS,
  DRV_MAX,
  DRV_MIN,
  DURATION_MAX,
  MIN_GREEN,
  WINDOW_SECONDS,
  type FieldError,
} from "./types.js";
import type { ScenarioDraft } from "./draft.js";

export const RING_A = [1, 2, 3, 4] as const;
export const RING_B = [5, 6, 7, 8] as const;

function isInt(v: number): boolean {
  return Number.isSafeInteger(v);
}

function phaseDuration(green: number): number {
  return green > 0 ? green + CLEARANCE : 0;
}

/** Seconds from cycle start to the ring barrier, as the service derives it. */
export function derivedBarrier(greens: Record<number, number>): number {
  return phaseDuration(greens[1] ?? 0) + phaseDuration(greens[2] ?? 0);
}

/** Scale a (left, through, right) row to sum to 1; all-zero rows are left alone. */
export function renormalizeRow(row: readonly number[]): number[] {
  const total = row.reduce((s, v) => s + v, 0);
  if (total <= 0) {
    return [...row];
  }
  return row.map((v) => v / total);
}

export function validateDraft(draft: ScenarioDraft): FieldError[] {
  const issues: FieldError[] = [];
  const err = (field: string, message: string) => issues.push({ field, message });

  if (!isInt(draft.cycle) || draft.cycle < CYCLE_MIN || draft.cycle > CYCLE_MAX) {
    err("signal_plan.cycle", `cycle must be a whole number of seconds in [${CYCLE_MIN}, ${CYCLE_MAX}]`);
  }
  if (!isInt(draft.offset) || draft.offset < 0) {
    err("signal_plan.offset", "offset must be a non-negative whole number");
  }

  let greensOk = true;
  for (let p = 1; p <= 8; p++) {
    const g = draft.greens[p] ?? 0;
    if (!isInt(g) || g < 0 || (g > 0 && g < MIN_GREEN)) {
      err(`signal_plan.phases.${p}`, `green must be 0 (skip) or at least ${MIN_GREEN}s`);
      greensOk = false;
    }
  }
  if (greensOk && isInt(draft.cycle)) {
    const barrier = derivedBarrier(draft.greens);
    const segments: Array<[string, readonly number[], number]> = [
      ["ring B before the barrier", RING_B.slice(0, 2), barrier],
      ["ring A after the barrier", RING_A.slice(2), draft.cycle - barrier],
      ["ring B after the barrier", RING_B.slice(2), draft.cycle - barrier],
    ];
    if (barrier > draft.cycle) {
      err("signal_plan.phases", "phases 1 and 2 do not fit inside the cycle");
    } else {
      for (const [label, phases, available] of segments) {
        const used = phases.reduce((s, p) => s + phaseDuration(draft.greens[p] ?? 0), 0);
        if (used > available) {
          err("signal_plan.phases", `${label} needs ${used}s but only ${available}s is available`);
        }
      }
    }
  }

  for (const name of DRV_FIELDS) {
    const v = draft.drv[name];
    if (!Number.isFinite(v) || v < DRV_MIN || v > DRV_MAX) {
      err(`drv.${name}`, `must be within [${DRV_MIN}, ${DRV_MAX}]`);
    }
  }

  draft.turnRatios.forEach((row, arm) => {
    if (row.length !== 3 || row.some((v) => !Number.isFinite(v) || v < 0)) {
      err(`turn_ratios.${arm}`, "shares must be three non-negative numbers");
    } else if (row.reduce((s, v) => s + v, 0) <= 0) {
      err(`turn_ratios.${arm}`, "at least one share must be positive");
    }
  });
  if (draft.turnRatios.length !== 4) {
    err("turn_ratios", "exactly one (left, through, right) row per arm");
  }

  if (!Number.isFinite(draft.demand) || draft.demand < 0 || draft.demand > DEMAND_MAX) {
    err("demand_rate", `must be within [0, ${DEMAND_MAX}] vehicles/second`);
  }
  if (!isInt(draft.seed) || draft.seed < 0) {
    err("seed", "must be a non-negative whole number");
  }
  if (!isInt(draft.duration) || draft.duration < WINDOW_SECONDS || draft.duration > DURATION_MAX) {
    err("duration", `must be a whole number of seconds in [${WINDOW_SECONDS}, ${DURATION_MAX}]`);
  } else if (
    !isInt(draft.windowStart) ||
    draft.windowStart < 0 ||
    draft.windowStart > draft.duration - WINDOW_SECONDS
  ) {
    err("window_start", `window must fit the run: 0 ≤ start ≤ duration - ${WINDOW_SECONDS}`);
  }

  return issues;
}
