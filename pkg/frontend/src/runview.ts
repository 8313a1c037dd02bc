// A uniform view over the two response shapes the service returns, so the
// results panel renders simulation records and model predictions the same
// way.  Matrices are passed through by reference -- the adapter restructures,
// it never recomputes.

import type { PredictResponse, SimulationRecordJson } from "./types.js";

export interface RunView {
  source: "simulate" | "predict";
  seed: number;
  headerLines: string[];
  ext: number[][];
  inf: number[][];
  ql: number[][];
  tt: number[][];
  phaseViews: { ext: number[][]; inf: number[][] } | null;
  raw: unknown;
}

export function fromPredictResponse(response: PredictResponse): RunView {
  const meta = response.metadata;
  return {
    source: "predict",
    seed: meta.seed,
    headerLines: [
      `mode ${meta.mode}, seed ${meta.seed}`,
      `checkpoint ${meta.checkpoint_id}, stp ${meta.stp_source}, ${meta.latency_ms} ms`,
    ],
    ext: response.ext,
    inf: response.inf,
    ql: response.ql,
    tt: response.tt,
    phaseViews: response.phase_views ?? null,
    raw: response,
  };
}

export function fromSimulationRecord(record: SimulationRecordJson): RunView {
  return {
    source: "simulate",
    seed: record.seed,
    headerLines: [`simulated ground truth, seed ${record.seed}`, `intersection ${record.isc}`],
    ext: record.ext,
    inf: record.inf,
    ql: record.ql,
    tt: record.tt,
    phaseViews: null,
    raw: record,
  };
}
