// Canvas rendering, split in two layers: pure geometry functions that turn
// chart data into pixel-space primitives (testable without a DOM), and thin
// drawing functions that replay those primitives onto a 2D context.

import type { HeatmapData, HistogramData, LineChartData } from "./chartdata.js";

export const PAD = { left: 34, right: 8, top: 18, bottom: 16 };

// The slice of CanvasRenderingContext2D the renderers use; tests substitute
// a recording stub.
export interface Pen {
  clearRect(x: number, y: number, w: number, h: number): void;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  stroke(): void;
  fillRect(x: number, y: number, w: number, h: number): void;
  strokeRect(x: number, y: number, w: number, h: number): void;
  fillText(text: string, x: number, y: number): void;
  strokeStyle: string | CanvasGradient | CanvasPattern;
  fillStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
  font: string;
}

export interface PlotArea {
  x: number;
  y: number;
  width: number;
  height: number;
}

export function plotArea(width: number, height: number): PlotArea {
  return {
    x: PAD.left,
    y: PAD.top,
    width: Math.max(1, width - PAD.left - PAD.right),
    height: Math.max(1, height - PAD.top - PAD.bottom),
  };
}

export interface LinePoint {
  x: number;
  y: number;
  value: number; // the payload value this point plots
}

export interface LineGeometry {
  points: LinePoint[];
  yMax: number;
  area: PlotArea;
}

/** Map a series onto pixel space; an all-zero series sits on the baseline. */
export function computeLinePoints(data: LineChartData, width: number, height: number): LineGeometry {
  const area = plotArea(width, height);
  const yMax = Math.max(1e-12, ...data.values);
  const n = data.values.length;
  const points = data.values.map((value, i) => ({
    x: area.x + (n <= 1 ? 0 : (i / (n - 1)) * area.width),
    y: area.y + area.height - (value / yMax) * area.height,
    value,
  }));
  return { points, yMax, area };
}

export interface Bar {
  x: number;
  y: number;
  width: number;
  height: number;
  value: number; // the payload bin this bar plots
}

export interface BarGeometry {
  bars: Bar[];
  yMax: number;
  area: PlotArea;
}

export function computeBars(data: HistogramData, width: number, height: number): BarGeometry {
  const area = plotArea(width, height);
  const yMax = Math.max(1e-12, ...data.bins);
  const n = data.bins.length;
  const barWidth = area.width / Math.max(1, n);
  const bars = data.bins.map((value, i) => {
    const h = (value / yMax) * area.height;
    return {
      x: area.x + i * barWidth,
      y: area.y + area.height - h,
      width: barWidth,
      height: h,
      value,
    };
  });
  return { bars, yMax, area };
}

export interface HeatCell {
  x: number;
  y: number;
  width: number;
  height: number;
  value: number;
  t: number; // 0..1 position within [min, max]
}

export function computeHeatCells(data: HeatmapData, width: number, height: number): HeatCell[] {
  const area = plotArea(width, height);
  const rows = data.cells.length;
  const cols = rows > 0 ? data.cells[0].length : 0;
  if (rows === 0 || cols === 0) {
    return [];
  }
  const cw = area.width / cols;
  const ch = area.height / rows;
  const span = data.max - data.min;
  const cells: HeatCell[] = [];
  data.cells.forEach((row, r) => {
    row.forEach((value, c) => {
      cells.push({
        x: area.x + c * cw,
        y: area.y + r * ch,
        width: cw,
        height: ch,
        value,
        t: span > 0 ? (value - data.min) / span : 0,
      });
    });
  });
  return cells;
}

export function heatColor(t: number): string {
  // dark blue -> yellow
  const clamped = Math.min(1, Math.max(0, t));
  const r = Math.round(20 + 235 * clamped);
  const g = Math.round(24 + 200 * clamped);
  const b = Math.round(72 + 40 * (1 - clamped));
  return `rgb(${r},${g},${b})`;
}

// ---------------------------------------------------------------------------
// drawing

const AXIS = "#888";
const INK = "#2b6cb0";
const TEXT = "#444";

function frame(pen: Pen, width: number, height: number, area: PlotArea, title: string, yLabel: string) {
  pen.clearRect(0, 0, width, height);
  pen.strokeStyle = AXIS;
  pen.lineWidth = 1;
  pen.strokeRect(area.x, area.y, area.width, area.height);
  pen.fillStyle = TEXT;
  pen.font = "11px sans-serif";
  pen.fillText(title, area.x, 12);
  pen.fillText(yLabel, 2, area.y + 8);
}

export function drawLineChart(pen: Pen, width: number, height: number, data: LineChartData): LineGeometry {
  const geo = computeLinePoints(data, width, height);
  frame(pen, width, height, geo.area, data.title, `${formatNumber(geo.yMax)} ${data.unit}`);
  pen.strokeStyle = INK;
  pen.lineWidth = 1.5;
  pen.beginPath();
  geo.points.forEach((p, i) => (i === 0 ? pen.moveTo(p.x, p.y) : pen.lineTo(p.x, p.y)));
  pen.stroke();
  return geo;
}

export function drawHistogram(pen: Pen, width: number, height: number, data: HistogramData): BarGeometry {
  const geo = computeBars(data, width, height);
  frame(pen, width, height, geo.area, `${data.title} (total ${formatNumber(data.total)})`, formatNumber(geo.yMax));
  pen.fillStyle = INK;
  for (const bar of geo.bars) {
    if (bar.height > 0) {
      pen.fillRect(bar.x, bar.y, Math.max(1, bar.width - 0.5), bar.height);
    }
  }
  return geo;
}

export function drawHeatmap(pen: Pen, width: number, height: number, data: HeatmapData): HeatCell[] {
  const cells = computeHeatCells(data, width, height);
  frame(pen, width, height, plotArea(width, height), data.title, formatNumber(data.max));
  for (const cell of cells) {
    pen.fillStyle = heatColor(cell.t);
    pen.fillRect(cell.x, cell.y, cell.width + 0.5, cell.height + 0.5);
  }
  return cells;
}

export function formatNumber(v: number): string {
  if (Number.isInteger(v)) {
    return String(v);
  }
  return Math.abs(v) >= 100 ? v.toFixed(1) : v.toFixed(2);
}
