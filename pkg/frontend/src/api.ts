// Typed client for the /v1 service.  All traffic goes through these four
// calls; the UI holds no model of its own.

import type {
  FieldError,
  ModelInfo,
  PredictRequest,
  PredictResponse,
  SimulationRecordJson,
  TopologyJson,
} from "./types.js";

export class ApiError extends Error {
  readonly status: number;
  readonly errors: FieldError[];

  constructor(status: number, errors: FieldError[]) {
    super(errors.map((e) => (e.field ? `${e.field}: ${e.message}` : e.message)).join("; "));
    this.name = "ApiError";
    this.status = status;
    this.errors = errors;
  }
}

async function postJson<T>(base: string, path: string, body: unknown): Promise<T> {
  const res = await fetch(base + path, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(body),
  });
  if (!res.ok) {
    let errors: FieldError[] = [{ field: "", message: `HTTP ${res.status}` }];
    try {
      const payload = await res.json();
      if (payload && Array.isArray(payload.errors)) {
        errors = payload.errors;
      }
    } catch {
      // non-JSON error body; keep the status-only message
    }
    throw new ApiError(res.status, errors);
  }
  return (await res.json()) as T;
}

async function getJson<T>(base: string, path: string): Promise<T> {
  const res = await fetch(base + path, { headers: { Accept: "application/json" } });
  if (!res.ok) {
    throw new ApiError(res.status, [{ field: "", message: `HTTP ${res.status}` }]);
  }
  return (await res.json()) as T;
}

export interface ApiClient {
  simulate(req: PredictRequest): Promise<SimulationRecordJson>;
  predict(req: PredictRequest): Promise<PredictResponse>;
  topologies(): Promise<TopologyJson[]>;
  modelInfo(): Promise<ModelInfo>;
}

export function createApiClient(base = ""): ApiClient {
  return {
    simulate: (req) => postJson<SimulationRecordJson>(base, "/v1/simulate", req),
    predict: (req) => postJson<PredictResponse>(base, "/v1/predict", req),
    topologies: async () => {
      const payload = await getJson<{ topologies: TopologyJson[] }>(base, "/v1/topologies");
      return payload.topologies;
    },
    modelInfo: () => getJson<ModelInfo>(base, "/v1/model/info"),
  };
}

// One request in flight per panel: every submission takes a fresh token and
// a response only lands if its token is still the latest.
export interface RequestGate {
  issue(): number;
  isCurrent(token: number): boolean;
}

export function createRequestGate(): RequestGate {
  let current = 0;
  return {
    issue: () => ++current,
    isCurrent: (token) => token === current,
  };
}
