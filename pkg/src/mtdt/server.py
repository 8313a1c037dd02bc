"""HTTP service exposing the simulator and the trained model under /v1.

Endpoints:

    POST /v1/simulate    PredictRequest -> ground-truth SimulationRecord
    POST /v1/predict     PredictRequest -> model predictions (requires a
                         loaded checkpoint; 409 otherwise)
    GET  /v1/topologies  intersection layouts this service can simulate
    GET  /v1/model/info  checkpoint id, parameter shapes, normalization

A PredictRequest is a JSON object:

    topology      optional id, defaults to the service's topology
    signal_plan   {"cycle": int, "offset": int, "barrier": int|null,
                   "phases": {"1": {"green": s, ...}, ...}}     required
    drv           {"accel": 2.6, ...} partial overrides of defaults
    turn_ratios   4 x 3 per-arm (left, through, right) shares; rows are
                  renormalized to sum to 1
    demand_rate   veh/s, one rate or one per arm
    seed          master seed for the simulation (reproducible responses)
    duration      simulated seconds (window must fit inside)
    window_start  second at which the 400-s record window opens
    stp           optional observed 48 x 80 stop-bar counts; when absent,
                  /v1/predict simulates the scenario to obtain them
    mode          "predict" (model inference, default) or "simulate"
                  (ground-truth waveforms in the same response shape)

Validation failures return 400 with {"errors": [{"field", "message"}]}.
The service never mutates the loaded checkpoint; identical requests with
identical seeds produce identical responses.
"""

from __future__ import annotations

import hashlib
import math
import time
from dataclasses import dataclass

import numpy as np
from fastapi import FastAPI, Request
from fastapi.concurrency import run_in_threadpool
from fastapi.responses import JSONResponse

from .model import ModelParams, NormalizationSpec, aggregate_to_phases, load_checkpoint, mtdt_forward
from .sim.behavior import DRV_FIELDS, DRV_MAX, DRV_MIN, DrivingBehavior, TurnRatios
from .sim.dataset import N_BUCKETS, WINDOW_SECONDS, SimulationRecord, realize_record
from .sim.extract import COUNT_CAP
from .sim.signal import SignalTimingPlan, Window, render_signal
from .sim.topology import N_STOP_SLOTS, IntersectionTopology, four_way_topology

DEMAND_MAX = 2.0          # veh/s per arm; far above saturation already
DURATION_MAX = 7200
DEFAULT_TURN_RATIOS = ((0.2, 0.65, 0.15),) * 4
DEFAULT_DEMAND = 0.2
DEFAULT_DURATION = 1000
DEFAULT_WINDOW_START = 600

REQUEST_FIELDS = (
    "topology", "signal_plan", "drv", "turn_ratios", "demand_rate",
    "seed", "duration", "window_start", "stp", "mode",
)
MODES = ("predict", "simulate")


class RequestError(Exception):
    """Carries the field-level error list for a 400 response."""

    def __init__(self, errors: list[dict]):
        super().__init__("; ".join(e["message"] for e in errors))
        self.errors = errors


def _err(field: str, message: str) -> dict:
    return {"field": field, "message": message}


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


@dataclass(frozen=True)
class ParsedRequest:
    topology: IntersectionTopology
    plan: SignalTimingPlan
    drv: DrivingBehavior
    ratios: TurnRatios
    demand: np.ndarray
    seed: int
    duration: int
    window: Window
    stp: np.ndarray | None
    mode: str


def parse_predict_request(body, topologies: dict[str, IntersectionTopology]) -> ParsedRequest:
    """Validate a PredictRequest body; raises RequestError listing every problem."""
    if not isinstance(body, dict):
        raise RequestError([_err("", "request body must be a JSON object")])
    errors = [_err(key, "unknown field") for key in body if key not in REQUEST_FIELDS]

    topo_id = body.get("topology", next(iter(topologies)))
    topology = None
    if not isinstance(topo_id, str):
        errors.append(_err("topology", "must be a topology id string"))
    elif topo_id not in topologies:
        errors.append(_err("topology", f"unknown topology {topo_id!r}; available: {sorted(topologies)}"))
    else:
        topology = topologies[topo_id]

    plan = None
    plan_obj = body.get("signal_plan")
    if not isinstance(plan_obj, dict):
        errors.append(_err("signal_plan", "required and must be a signal plan object"))
    else:
        try:
            plan = SignalTimingPlan.from_json_obj(plan_obj)
        except ValueError as exc:
            errors.append(_err("signal_plan", str(exc)))

    drv = None
    drv_obj = body.get("drv", {})
    if not isinstance(drv_obj, dict):
        errors.append(_err("drv", "must be an object of driving parameters"))
    else:
        ok = True
        for name, v in drv_obj.items():
            if name not in DRV_FIELDS:
                errors.append(_err(f"drv.{name}", "unknown driving parameter"))
                ok = False
            elif not _is_num(v) or not DRV_MIN <= v <= DRV_MAX:
                errors.append(_err(f"drv.{name}", f"must be a number within [{DRV_MIN:g}, {DRV_MAX:g}]"))
                ok = False
        if ok:
            drv = DrivingBehavior(**{k: float(v) for k, v in drv_obj.items()})

    ratios = None
    try:
        shares = np.asarray(body.get("turn_ratios", DEFAULT_TURN_RATIOS), dtype=np.float64)
    except (TypeError, ValueError):
        shares = None
    if shares is None or shares.shape != (4, 3) or not np.isfinite(shares).all() or (shares < 0).any():
        errors.append(_err("turn_ratios", "must be a 4x3 matrix of non-negative (left, through, right) shares"))
    elif (shares.sum(axis=1) <= 0).any():
        errors.append(_err("turn_ratios", "each arm's shares must sum to a positive value"))
    else:
        ratios = TurnRatios.from_reduced(shares / shares.sum(axis=1, keepdims=True))

    demand = body.get("demand_rate", DEFAULT_DEMAND)
    if _is_num(demand):
        demand = [demand] * 4
    if isinstance(demand, list) and len(demand) == 4 and all(_is_num(v) and 0 <= v <= DEMAND_MAX for v in demand):
        demand = np.array([float(v) for v in demand])
    else:
        errors.append(_err("demand_rate", f"must be one rate or 4 per-arm rates within [0, {DEMAND_MAX:g}] veh/s"))
        demand = None

    seed = body.get("seed", 0)
    if not _is_int(seed) or not 0 <= seed < 2**63:
        errors.append(_err("seed", "must be a non-negative integer"))
        seed = 0

    window = None
    duration = body.get("duration", DEFAULT_DURATION)
    window_start = body.get("window_start", DEFAULT_WINDOW_START)
    if not _is_int(duration) or not WINDOW_SECONDS <= duration <= DURATION_MAX:
        errors.append(_err("duration", f"must be an integer within [{WINDOW_SECONDS}, {DURATION_MAX}] seconds"))
    elif not _is_int(window_start) or not 0 <= window_start <= duration - WINDOW_SECONDS:
        errors.append(_err("window_start", f"window must fit the simulation: 0 <= start <= duration - {WINDOW_SECONDS}"))
    else:
        window = Window(start=window_start, seconds=WINDOW_SECONDS)

    stp = None
    if body.get("stp") is not None:
        try:
            observed = np.asarray(body["stp"], dtype=np.float64)
        except (TypeError, ValueError):
            observed = None
        if (
            observed is None
            or observed.shape != (N_STOP_SLOTS, N_BUCKETS)
            or not np.isfinite(observed).all()
            or (observed != np.rint(observed)).any()
            or observed.min() < 0
            or observed.max() > COUNT_CAP
        ):
            errors.append(_err("stp", f"must be a {N_STOP_SLOTS}x{N_BUCKETS} matrix of counts in 0..{COUNT_CAP}"))
        else:
            stp = observed.astype(np.int64)

    mode = body.get("mode", "predict")
    if mode not in MODES:
        errors.append(_err("mode", f"must be one of {list(MODES)}"))

    if errors:
        raise RequestError(errors)
    return ParsedRequest(
        topology=topology,
        plan=plan,
        drv=drv if drv is not None else DrivingBehavior(),
        ratios=ratios,
        demand=demand,
        seed=seed,
        duration=duration,
        window=window,
        stp=stp,
        mode=mode,
    )


# ---------------------------------------------------------------------------
# request execution


def simulate_from_request(parsed: ParsedRequest) -> SimulationRecord:
    return realize_record(
        parsed.topology,
        parsed.plan,
        parsed.drv,
        parsed.ratios,
        parsed.demand,
        parsed.window,
        sim_seed=parsed.seed,
        duration=parsed.duration,
        record_seed=parsed.seed,
    )


@dataclass(frozen=True)
class ServiceBundle:
    """One immutable loaded checkpoint shared by all requests."""

    checkpoint_id: str
    topology: IntersectionTopology
    params: ModelParams
    norm: NormalizationSpec
    extra: dict


def load_bundle(path) -> ServiceBundle:
    topology, params, norm, extra = load_checkpoint(path)
    with open(path, "rb") as fh:
        digest = hashlib.sha256(fh.read()).hexdigest()[:16]
    return ServiceBundle(digest, topology, params, norm, extra)


def predict_from_request(parsed: ParsedRequest, bundle: ServiceBundle) -> dict:
    """PredictResponse for one request: model inference, or the simulated
    ground truth in the same shape when the request asks for simulate mode."""
    start = time.perf_counter()
    if parsed.mode == "simulate":
        rec = simulate_from_request(parsed)
        out = {k: getattr(rec, k).astype(np.float64) for k in ("ext", "inf", "ql", "tt")}
        stp_source = "simulated"
    else:
        if parsed.stp is not None:
            stp, stp_source = parsed.stp, "provided"
        else:
            stp, stp_source = simulate_from_request(parsed).stp, "simulated"
        sig = render_signal(parsed.plan, parsed.window)
        out = mtdt_forward(
            parsed.topology, bundle.params, bundle.norm,
            sig, parsed.ratios.raw, parsed.drv.to_vector(), stp,
        )
    pm = parsed.topology.phase_map()
    return {
        "ext": out["ext"].tolist(),
        "inf": out["inf"].tolist(),
        "ql": out["ql"].tolist(),
        "tt": out["tt"].tolist(),
        "phase_views": {
            "ext": aggregate_to_phases(out["ext"], pm.exit).tolist(),
            "inf": aggregate_to_phases(out["inf"], pm.inflow).tolist(),
        },
        "metadata": {
            "mode": parsed.mode,
            "checkpoint_id": bundle.checkpoint_id,
            "seed": parsed.seed,
            "latency_ms": round((time.perf_counter() - start) * 1e3, 3),
            "stp_source": stp_source,
        },
    }


# ---------------------------------------------------------------------------
# application


def create_app(bundle: ServiceBundle | None = None,
               topology: IntersectionTopology | None = None) -> FastAPI:
    """Service around one optional checkpoint; without one, /v1/predict
    answers 409 while simulation endpoints stay available."""
    base = bundle.topology if bundle is not None else (topology or four_way_topology())
    topologies = {base.intersection_id: base}
    app = FastAPI(title="mtdt service", docs_url=None, redoc_url=None)

    def _bad_request(errors):
        return JSONResponse(status_code=400, content={"errors": errors})

    async def _parsed_body(request: Request) -> ParsedRequest:
        try:
            body = await request.json()
        except ValueError as exc:
            raise RequestError([_err("", f"malformed JSON body: {exc}")]) from exc
        return parse_predict_request(body, topologies)

    @app.post("/v1/simulate")
    async def simulate_endpoint(request: Request):
        try:
            parsed = await _parsed_body(request)
        except RequestError as exc:
            return _bad_request(exc.errors)
        record = await run_in_threadpool(simulate_from_request, parsed)
        return record.to_json_obj()

    @app.post("/v1/predict")
    async def predict_endpoint(request: Request):
        if bundle is None:
            return JSONResponse(status_code=409, content={"errors": [_err("", "no checkpoint loaded")]})
        try:
            parsed = await _parsed_body(request)
        except RequestError as exc:
            return _bad_request(exc.errors)
        return await run_in_threadpool(predict_from_request, parsed, bundle)

    @app.get("/v1/topologies")
    def topologies_endpoint():
        return {"topologies": [t.to_json_obj() for t in topologies.values()]}

    @app.get("/v1/model/info")
    def model_info_endpoint():
        if bundle is None:
            return {"loaded": False, "topology": base.intersection_id}
        return {
            "loaded": True,
            "checkpoint_id": bundle.checkpoint_id,
            "topology": base.intersection_id,
            "parameter_shapes": {name: list(arr.shape) for name, arr in bundle.params.named()},
            "normalization": bundle.norm.to_json_obj(),
        }

    return app
