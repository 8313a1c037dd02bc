// Shapes of the /v1 API payloads.  These mirror the service contract and
// nothing else; the UI never derives its own variants of these values.

export const N_PHASES = 8;
export const N_QL_BUCKETS = 80;
export const N_TT_BINS = 200;
export const BUCKET_SECONDS = 5;

export const CYCLE_MIN = 120;
export const CYCLE_MAX = 240;
export const MIN_GREEN = 5;
export const CLEARANCE = 5; // yellow 3 + all-red 2 per served phase
export const DRV_MIN = 0;
export const DRV_MAX = 30;
export const DEMAND_MAX = 2.0;
export const WINDOW_SECONDS = 400;
export const DURATION_MAX = 7200;

export const DRV_FIELDS = [
  "accel",
  "decel",
  "emergency_decel",
  "min_gap",
  "headway_tau",
  "speed_dev_sigma",
  "lc_cooperative",
  "lc_speed_gain",
  "lc_keep_right",
] as const;

export type DrvField = (typeof DRV_FIELDS)[number];

export const DRV_DEFAULTS: Record<DrvField, number> = {
  accel: 2.6,
  decel: 4.5,
  emergency_decel: 9.0,
  min_gap: 2.5,
  headway_tau: 1.0,
  speed_dev_sigma: 5.0,
  lc_cooperative: 1.0,
  lc_speed_gain: 1.0,
  lc_keep_right: 1.0,
};

export interface PhaseGreens {
  green: number;
}

export interface SignalPlanJson {
  cycle: number;
  offset: number;
  phases: Record<string, PhaseGreens>;
}

export interface PredictRequest {
  topology?: string;
  signal_plan: SignalPlanJson;
  drv?: Partial<Record<DrvField, number>>;
  turn_ratios?: number[][];
  demand_rate?: number | number[];
  seed?: number;
  duration?: number;
  window_start?: number;
  stp?: number[][] | null;
  mode?: "predict" | "simulate";
}

export interface ResponseMetadata {
  mode: string;
  checkpoint_id: string;
  seed: number;
  latency_ms: number;
  stp_source: string;
}

export interface PredictResponse {
  ext: number[][]; // 16 exit slots x 80 buckets
  inf: number[][]; // 12 inflow slots x 80 buckets
  ql: number[][]; // 8 phases x 80 buckets (meters)
  tt: number[][]; // 8 phases x 200 five-second bins (vehicle counts)
  phase_views: {
    ext: number[][]; // 8 x 80
    inf: number[][]; // 8 x 80
  };
  metadata: ResponseMetadata;
}

export interface SimulationRecordJson {
  isc: string;
  sig: number[][];
  tmc: number[][];
  drv: number[];
  stp: number[][];
  ext: number[][];
  inf: number[][];
  ql: number[][];
  tt: number[][];
  seed: number;
}

export interface TopologyJson {
  id: string;
  [key: string]: unknown;
}

export interface FieldError {
  field: string;
  message: string;
}

export interface ModelInfo {
  loaded: boolean;
  topology: string;
  checkpoint_id?: string;
  parameter_shapes?: Record<string, number[]>;
  normalization?: unknown;
}
