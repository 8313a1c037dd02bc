// Scenario editor: a plain-DOM form over a ScenarioDraft.  Sliders are
// clamped to the legal ranges, number inputs accept anything and surface
// inline errors instead, and the submit buttons stay disabled while the
// draft fails validation.

import type { ScenarioDraft } from "./draft.js";
import {
  CYCLE_MAX,
  CYCLE_MIN,
  DEMAND_MAX,
  DRV_FIELDS,
  DRV_MAX,
  DRV_MIN,
  DURATION_MAX,
  WINDOW_SECONDS,
  type FieldError,
} from "./types.js";
import { derivedBarrier, renormalizeRow, validateDraft } from "./validate.js";

export interface EditorCallbacks {
  onSimulate(): void;
  onPredict(): void;
}

export interface EditorHandle {
  /** Re-run validation and refresh error display / button state. */
  refresh(): void;
  /** Disable submission while a request is in flight. */
  setBusy(busy: boolean): void;
  /** Merge validation errors returned by the service into the error list. */
  showServerErrors(errors: FieldError[]): void;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

interface NumberField {
  wrap: HTMLElement;
  input: HTMLInputElement;
}

function numberField(label: string, value: number, step: number, onChange: (v: number) => void): NumberField {
  const wrap = el("label", "field");
  wrap.append(el("span", "field-name", label));
  const input = el("input");
  input.type = "number";
  input.step = String(step);
  input.value = String(value);
  input.addEventListener("change", () => onChange(Number(input.value)));
  wrap.append(input);
  return { wrap, input };
}

function sliderField(
  label: string,
  min: number,
  max: number,
  step: number,
  value: number,
  onChange: (v: number) => void,
): NumberField {
  const wrap = el("label", "field");
  wrap.append(el("span", "field-name", label));
  const input = el("input");
  input.type = "range";
  input.min = String(min);
  input.max = String(max);
  input.step = String(step);
  input.value = String(value);
  const shown = el("span", "field-value", String(value));
  input.addEventListener("input", () => {
    shown.textContent = input.value;
    onChange(Number(input.value));
  });
  wrap.append(input, shown);
  return { wrap, input };
}

const ARM_NAMES = ["north", "east", "south", "west"];
const RING_SEGMENTS: Array<[string, number[]]> = [
  ["ring A, before barrier", [1, 2]],
  ["ring A, after barrier", [3, 4]],
  ["ring B, before barrier", [5, 6]],
  ["ring B, after barrier", [7, 8]],
];

export function renderScenarioEditor(
  root: HTMLElement,
  draft: ScenarioDraft,
  topologyIds: string[],
  callbacks: EditorCallbacks,
): EditorHandle {
  root.textContent = "";
  const form = el("form", "scenario-editor");
  form.addEventListener("submit", (ev) => ev.preventDefault());
  let busy = false;
  let serverErrors: FieldError[] = [];

  // --- topology ------------------------------------------------------------
  const topoWrap = el("label", "field");
  topoWrap.append(el("span", "field-name", "topology"));
  const topoSelect = el("select");
  for (const id of topologyIds) {
    const opt = el("option", undefined, id);
    opt.value = id;
    topoSelect.append(opt);
  }
  topoSelect.value = draft.topology;
  topoSelect.addEventListener("change", () => {
    draft.topology = topoSelect.value;
    touched();
  });
  topoWrap.append(topoSelect);

  // --- signal plan -----------------------------------------------------------
  const planSection = el("fieldset", "plan");
  planSection.append(el("legend", undefined, "signal timing plan"));

  const cycleSlider = sliderField("cycle (s)", CYCLE_MIN, CYCLE_MAX, 1, draft.cycle, (v) => {
    draft.cycle = v;
    cycleNumber.input.value = String(v);
    touched();
  });
  const cycleNumber = numberField("cycle exact", draft.cycle, 1, (v) => {
    draft.cycle = v;
    if (v >= CYCLE_MIN && v <= CYCLE_MAX) {
      cycleSlider.input.value = String(v);
    }
    touched();
  });
  cycleNumber.input.dataset.field = "signal_plan.cycle";
  const offsetNumber = numberField("offset (s)", draft.offset, 1, (v) => {
    draft.offset = v;
    touched();
  });
  planSection.append(cycleSlider.wrap, cycleNumber.wrap, offsetNumber.wrap);

  const budget = el("p", "segment-budget");
  const greenInputs: HTMLInputElement[] = [];
  for (const [segmentName, phases] of RING_SEGMENTS) {
    const seg = el("div", "segment");
    seg.append(el("span", "segment-name", segmentName));
    for (const p of phases) {
      const field = numberField(`phase ${p} green`, draft.greens[p] ?? 0, 1, (v) => {
        draft.greens[p] = v;
        touched();
      });
      field.input.dataset.field = `signal_plan.phases.${p}`;
      greenInputs.push(field.input);
      seg.append(field.wrap);
    }
    planSection.append(seg);
  }
  planSection.append(budget);

  // --- driving behavior ------------------------------------------------------
  const drvSection = el("fieldset", "drv");
  drvSection.append(el("legend", undefined, "driving behavior"));
  for (const name of DRV_FIELDS) {
    const field = sliderField(name, DRV_MIN, DRV_MAX, 0.1, draft.drv[name], (v) => {
      draft.drv[name] = v;
      touched();
    });
    field.input.dataset.field = `drv.${name}`;
    drvSection.append(field.wrap);
  }

  // --- turn ratios ------------------------------------------------------------
  const turnSection = el("fieldset", "turns");
  turnSection.append(el("legend", undefined, "turn ratios (left / through / right)"));
  const ratioInputs: HTMLInputElement[][] = [];
  draft.turnRatios.forEach((row, arm) => {
    const rowWrap = el("div", "ratio-row");
    rowWrap.append(el("span", "field-name", ARM_NAMES[arm] ?? `arm ${arm}`));
    const inputs: HTMLInputElement[] = [];
    row.forEach((share, j) => {
      const input = el("input");
      input.type = "number";
      input.step = "0.01";
      input.min = "0";
      input.value = formatShare(share);
      input.dataset.field = `turn_ratios.${arm}.${j}`;
      input.addEventListener("change", () => {
        const edited = inputs.map((inp) => Number(inp.value));
        const normalized = edited.every((v) => Number.isFinite(v) && v >= 0) ? renormalizeRow(edited) : edited;
        draft.turnRatios[arm] = normalized;
        normalized.forEach((v, k) => (inputs[k].value = formatShare(v)));
        touched();
      });
      inputs.push(input);
      rowWrap.append(input);
    });
    ratioInputs.push(inputs);
    turnSection.append(rowWrap);
  });

  // --- run parameters ----------------------------------------------------------
  const runSection = el("fieldset", "run");
  runSection.append(el("legend", undefined, "run"));
  const demandField = numberField("demand (veh/s/arm)", draft.demand, 0.01, (v) => {
    draft.demand = v;
    touched();
  });
  demandField.input.dataset.field = "demand_rate";
  demandField.input.max = String(DEMAND_MAX);
  const seedField = numberField("seed", draft.seed, 1, (v) => {
    draft.seed = v;
    touched();
  });
  seedField.input.dataset.field = "seed";
  const durationField = numberField("duration (s)", draft.duration, 10, (v) => {
    draft.duration = v;
    touched();
  });
  durationField.input.dataset.field = "duration";
  durationField.input.max = String(DURATION_MAX);
  const windowField = numberField(`window start (s, ${WINDOW_SECONDS}s window)`, draft.windowStart, 10, (v) => {
    draft.windowStart = v;
    touched();
  });
  windowField.input.dataset.field = "window_start";
  runSection.append(demandField.wrap, seedField.wrap, durationField.wrap, windowField.wrap);

  // --- errors and submission ------------------------------------------------------
  const errorList = el("ul", "errors");
  errorList.dataset.role = "errors";
  const simulateBtn = el("button", "submit", "Run simulation");
  simulateBtn.type = "button";
  simulateBtn.dataset.role = "simulate";
  simulateBtn.addEventListener("click", () => callbacks.onSimulate());
  const predictBtn = el("button", "submit", "Run prediction");
  predictBtn.type = "button";
  predictBtn.dataset.role = "predict";
  predictBtn.addEventListener("click", () => callbacks.onPredict());
  const buttons = el("div", "actions");
  buttons.append(simulateBtn, predictBtn);

  form.append(topoWrap, planSection, drvSection, turnSection, runSection, errorList, buttons);
  root.append(form);

  function touched() {
    serverErrors = [];
    refresh();
  }

  function refresh() {
    // Client-side range violations block submission; errors the service
    // returned are shown alongside but never block a retry.
    const clientIssues = validateDraft(draft);
    const issues = clientIssues.concat(serverErrors);
    errorList.textContent = "";
    for (const issue of issues) {
      const item = el("li", "error", issue.field ? `${issue.field}: ${issue.message}` : issue.message);
      item.dataset.field = issue.field;
      errorList.append(item);
    }
    const bad = new Set(issues.map((i) => i.field));
    for (const input of form.querySelectorAll<HTMLInputElement>("input[data-field]")) {
      input.classList.toggle("invalid", bad.has(input.dataset.field ?? ""));
    }
    const barrier = derivedBarrier(draft.greens);
    budget.textContent =
      `barrier at ${barrier}s; ` +
      `${Math.max(0, draft.cycle - barrier)}s after it (5s clearance per served phase)`;
    const blocked = busy || clientIssues.length > 0;
    simulateBtn.disabled = blocked;
    predictBtn.disabled = blocked;
  }

  refresh();
  return {
    refresh() {
      serverErrors = [];
      refresh();
    },
    setBusy(b: boolean) {
      busy = b;
      refresh();
    },
    showServerErrors(errors: FieldError[]) {
      serverErrors = errors;
      refresh();
    },
  };
}

function formatShare(v: number): string {
  return (Math.round(v * 1000) / 1000).toString();
}
