// Results panel: per-phase queue charts and travel-time histograms, the two
// lane-wise waveform heatmaps, and -- when a run is pinned -- delta views
// against it.  Chart geometry is computed for every canvas and kept in a
// registry (the same numbers the renderer draws), so tests can audit exactly
// what was plotted; drawing is skipped where no 2D context exists.

import {
  deltaMatrix,
  heatmapData,
  queueChartData,
  responseShapeIssues,
  travelTimeChartData,
  type HeatmapData,
  type HistogramData,
  type LineChartData,
} from "./chartdata.js";
import {
  computeBars,
  computeHeatCells,
  computeLinePoints,
  drawHeatmap,
  drawHistogram,
  drawLineChart,
  type BarGeometry,
  type HeatCell,
  type LineGeometry,
  type Pen,
} from "./charts.js";
import type { StoredRun } from "./draft.js";

export type ChartGeometry =
  | { kind: "line"; data: LineChartData; geometry: LineGeometry }
  | { kind: "histogram"; data: HistogramData; geometry: BarGeometry }
  | { kind: "heatmap"; data: HeatmapData; cells: HeatCell[] };

/** What each canvas plots, keyed by the canvas itself. */
export const chartRegistry = new WeakMap<HTMLCanvasElement, ChartGeometry>();

const QUEUE_SIZE = { width: 260, height: 120 };
const HIST_SIZE = { width: 260, height: 120 };
const HEAT_SIZE = { width: 560, height: 160 };

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

function pen(canvas: HTMLCanvasElement): Pen | null {
  try {
    return canvas.getContext("2d") as Pen | null;
  } catch {
    return null;
  }
}

function lineCanvas(data: LineChartData, role: string): HTMLCanvasElement {
  const canvas = el("canvas");
  canvas.width = QUEUE_SIZE.width;
  canvas.height = QUEUE_SIZE.height;
  canvas.dataset.role = role;
  canvas.dataset.title = data.title;
  const p = pen(canvas);
  const geometry = p
    ? drawLineChart(p, canvas.width, canvas.height, data)
    : computeLinePoints(data, canvas.width, canvas.height);
  chartRegistry.set(canvas, { kind: "line", data, geometry });
  return canvas;
}

function histogramCanvas(data: HistogramData, role: string): HTMLCanvasElement {
  const canvas = el("canvas");
  canvas.width = HIST_SIZE.width;
  canvas.height = HIST_SIZE.height;
  canvas.dataset.role = role;
  canvas.dataset.title = data.title;
  canvas.dataset.total = String(data.total);
  const p = pen(canvas);
  const geometry = p
    ? drawHistogram(p, canvas.width, canvas.height, data)
    : computeBars(data, canvas.width, canvas.height);
  chartRegistry.set(canvas, { kind: "histogram", data, geometry });
  return canvas;
}

function heatmapCanvas(data: HeatmapData, role: string): HTMLCanvasElement {
  const canvas = el("canvas");
  canvas.width = HEAT_SIZE.width;
  canvas.height = HEAT_SIZE.height;
  canvas.dataset.role = role;
  canvas.dataset.title = data.title;
  const p = pen(canvas);
  const cells = p
    ? drawHeatmap(p, canvas.width, canvas.height, data)
    : computeHeatCells(data, canvas.width, canvas.height);
  chartRegistry.set(canvas, { kind: "heatmap", data, cells });
  return canvas;
}

function chartGrid(title: string, charts: HTMLCanvasElement[]): HTMLElement {
  const section = el("section", "chart-grid");
  section.append(el("h3", undefined, title));
  const grid = el("div", "grid");
  grid.append(...charts);
  section.append(grid);
  return section;
}

function rawJsonViewer(payload: unknown): HTMLElement {
  const details = el("details", "raw-json");
  details.append(el("summary", undefined, "raw response JSON"));
  const pre = el("pre");
  pre.textContent = JSON.stringify(payload, null, 2);
  details.append(pre);
  return details;
}

function errorCard(issues: string[], payload: unknown): HTMLElement {
  const card = el("div", "error-card");
  card.dataset.role = "shape-error";
  card.append(el("h3", undefined, "response shape mismatch"));
  const list = el("ul");
  for (const issue of issues) {
    list.append(el("li", undefined, issue));
  }
  card.append(list, rawJsonViewer(payload));
  return card;
}

export function renderResults(root: HTMLElement, run: StoredRun, comparison: StoredRun | null): void {
  root.textContent = "";
  const view = run.view;

  const header = el("header", "run-header");
  header.append(el("h2", undefined, run.label));
  const seedBadge = el("span", "seed-badge", `seed ${view.seed}`);
  seedBadge.dataset.role = "seed";
  header.append(seedBadge);
  for (const line of view.headerLines) {
    header.append(el("p", "meta", line));
  }
  root.append(header);

  const issues = responseShapeIssues(view);
  if (issues.length > 0) {
    root.append(errorCard(issues, view.raw));
    return;
  }

  root.append(
    chartGrid(
      "maximum queue length per phase",
      queueChartData(view.ql).map((d) => lineCanvas(d, "queue-chart")),
    ),
    chartGrid(
      "travel time distribution per phase",
      travelTimeChartData(view.tt).map((d) => histogramCanvas(d, "tt-hist")),
    ),
    chartGrid("lane-wise waveforms", [
      heatmapCanvas(heatmapData(view.ext, "exit counts (lane x bucket)"), "ext-heatmap"),
      heatmapCanvas(heatmapData(view.inf, "inflow counts (lane x bucket)"), "inf-heatmap"),
    ]),
  );
  root.append(rawJsonViewer(view.raw));

  if (comparison) {
    const other = comparison.view;
    const section = el("section", "comparison");
    section.append(el("h2", undefined, `delta vs ${comparison.label}`));
    if (responseShapeIssues(other).length > 0 || !sameShapes(view, other)) {
      section.append(el("p", "meta", "comparison run has a different shape; deltas unavailable"));
    } else {
      section.append(
        chartGrid("queue delta (current - pinned)", [
          heatmapCanvas(heatmapData(deltaMatrix(view.ql, other.ql), "queue delta (m)"), "ql-delta"),
        ]),
        chartGrid("travel time delta", [
          heatmapCanvas(heatmapData(deltaMatrix(view.tt, other.tt), "travel time delta"), "tt-delta"),
        ]),
        chartGrid("waveform deltas", [
          heatmapCanvas(heatmapData(deltaMatrix(view.ext, other.ext), "exit delta"), "ext-delta"),
          heatmapCanvas(heatmapData(deltaMatrix(view.inf, other.inf), "inflow delta"), "inf-delta"),
        ]),
      );
    }
    root.append(section);
  }
}

function sameShapes(a: { ext: number[][]; inf: number[][] }, b: { ext: number[][]; inf: number[][] }): boolean {
  return a.ext.length === b.ext.length && a.inf.length === b.inf.length;
}
