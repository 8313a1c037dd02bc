// Pure chart-data preparation.  Every plotted value is copied verbatim from
// the API payload -- no rescaling, smoothing, or re-aggregation happens on
// the client.  Pixel mapping is the renderer's job (charts.ts); comparison
// deltas are the one derived view and exist only next to their inputs.

import { BUCKET_SECONDS, N_PHASES, N_QL_BUCKETS, N_TT_BINS } from "./types.js";

export interface ResultMatrices {
  ext: number[][];
  inf: number[][];
  ql: number[][];
  tt: number[][];
}

export interface LineChartData {
  title: string;
  values: number[]; // exact payload row
  secondsPerStep: number;
  unit: string;
}

export interface HistogramData {
  title: string;
  bins: number[]; // exact payload row
  binSeconds: number;
  total: number; // sum of bins, shown as the chart caption
}

export interface HeatmapData {
  title: string;
  cells: number[][]; // exact payload matrix
  min: number;
  max: number;
}

export function queueChartData(ql: readonly number[][]): LineChartData[] {
  return ql.map((row, p) => ({
    title: `phase ${p + 1} queue`,
    values: [...row],
    secondsPerStep: BUCKET_SECONDS,
    unit: "m",
  }));
}

export function travelTimeChartData(tt: readonly number[][]): HistogramData[] {
  return tt.map((row, p) => ({
    title: `phase ${p + 1} travel time`,
    bins: [...row],
    binSeconds: BUCKET_SECONDS,
    total: row.reduce((s, v) => s + v, 0),
  }));
}

export function heatmapData(matrix: readonly number[][], title: string): HeatmapData {
  const cells = matrix.map((row) => [...row]);
  let min = Infinity;
  let max = -Infinity;
  for (const row of cells) {
    for (const v of row) {
      if (v < min) min = v;
      if (v > max) max = v;
    }
  }
  if (!Number.isFinite(min)) {
    min = 0;
    max = 0;
  }
  return { title, cells, min, max };
}

/** Elementwise current - pinned, for the side-by-side comparison panel. */
export function deltaMatrix(current: readonly number[][], pinned: readonly number[][]): number[][] {
  return current.map((row, i) => row.map((v, j) => v - (pinned[i]?.[j] ?? 0)));
}

const EXPECTED_SHAPES: Array<[keyof ResultMatrices, number, number]> = [
  ["ql", N_PHASES, N_QL_BUCKETS],
  ["tt", N_PHASES, N_TT_BINS],
];

/**
 * Shape problems that make a response unrenderable, or [] when it is fine.
 * Waveform row counts vary by topology, so only column counts are pinned
 * for ext/inf.
 */
export function responseShapeIssues(response: ResultMatrices): string[] {
  const issues: string[] = [];
  const matrix = (name: string, value: unknown): number[][] | null => {
    if (!Array.isArray(value) || value.some((row) => !Array.isArray(row))) {
      issues.push(`${name} is not a matrix`);
      return null;
    }
    return value as number[][];
  };
  for (const [name, rows, cols] of EXPECTED_SHAPES) {
    const m = matrix(name, response[name]);
    if (m && (m.length !== rows || m.some((row) => row.length !== cols))) {
      issues.push(`${name} is ${m.length}x${m[0]?.length ?? 0}, expected ${rows}x${cols}`);
    }
  }
  for (const name of ["ext", "inf"] as const) {
    const m = matrix(name, response[name]);
    if (m && m.some((row) => row.length !== N_QL_BUCKETS)) {
      issues.push(`${name} rows must have ${N_QL_BUCKETS} buckets`);
    }
  }
  return issues;
}
