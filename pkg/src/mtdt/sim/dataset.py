"""Scenario sampling, simulation records and JSONL datasets.

Record layout (one JSON object per line, field order fixed):

    isc   intersection id                      string
    sig   signal green per phase and bucket    8 x 80   {0, 1}
    tmc   raw turn-movement matrix             35 x 35  [0, 1]
    drv   driving behavior vector              9        [0, 30]
    stp   stop-bar counts per lane and bucket  48 x 80  0..8
    ext   exit counts                          16 x 80  0..8
    inf   inflow counts                        12 x 80  0..8
    ql    queue length per phase [m]           8 x 80   0..1200
    tt    travel-time histogram per phase      8 x 200  counts
    seed  the record's own master seed         int

Every record covers one contiguous 80-bucket (400 s) window sampled from
a longer scenario; drv and tmc are constant over the scenario.  A record
is fully determined by (topology, config, seed).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields

import numpy as np

from ..errors import ConfigurationError, ContractError, ShapeError
from .behavior import DRV_FIELDS, N_TMC, DrivingBehavior, TurnRatios
from .engine import simulate
from .extract import COUNT_CAP, TT_BINS, compute_queue_series, compute_travel_time_hist, extract_waveforms
from .signal import CYCLE_MAX, CYCLE_MIN, PhaseTiming, SignalTimingPlan, Window, render_signal
from .topology import (
    LEFT_PHASE,
    N_EXIT_SLOTS,
    N_INFLOW_SLOTS,
    N_PHASES,
    N_STOP_SLOTS,
    THROUGH_PHASE,
    IntersectionTopology,
)

N_BUCKETS = 80
WINDOW_SECONDS = 400
QL_MAX = 1200

RECORD_FIELDS = ("isc", "sig", "tmc", "drv", "stp", "ext", "inf", "ql", "tt", "seed")


@dataclass
class SimulationRecord:
    isc: str
    sig: np.ndarray
    tmc: np.ndarray
    drv: np.ndarray
    stp: np.ndarray
    ext: np.ndarray
    inf: np.ndarray
    ql: np.ndarray
    tt: np.ndarray
    seed: int

    def __eq__(self, other) -> bool:
        if not isinstance(other, SimulationRecord):
            return NotImplemented
        for f in fields(self):
            mine, theirs = getattr(self, f.name), getattr(other, f.name)
            same = np.array_equal(mine, theirs) if isinstance(mine, np.ndarray) else mine == theirs
            if not same:
                return False
        return True

    def validate(self) -> None:
        shapes = {
            "sig": (N_PHASES, N_BUCKETS),
            "tmc": (N_TMC, N_TMC),
            "drv": (len(DRV_FIELDS),),
            "stp": (N_STOP_SLOTS, N_BUCKETS),
            "ext": (N_EXIT_SLOTS, N_BUCKETS),
            "inf": (N_INFLOW_SLOTS, N_BUCKETS),
            "ql": (N_PHASES, N_BUCKETS),
            "tt": (N_PHASES, TT_BINS),
        }
        for name, want in shapes.items():
            arr = getattr(self, name)
            if arr.shape != want:
                raise ShapeError(f"record field {name} has shape {arr.shape}, want {want}")
        for name in ("stp", "ext", "inf"):
            arr = getattr(self, name)
            if arr.min() < 0 or arr.max() > COUNT_CAP:
                raise ContractError(f"record field {name} outside 0..{COUNT_CAP}")
        if not set(np.unique(self.sig)) <= {0, 1}:
            raise ContractError("sig must be binary")
        if self.ql.min() < 0 or self.ql.max() > QL_MAX:
            raise ContractError(f"ql outside 0..{QL_MAX}")
        if self.tt.min() < 0:
            raise ContractError("tt counts must be >= 0")
        if self.drv.min() < 0 or self.drv.max() > 30:
            raise ContractError("drv outside [0, 30]")

    def to_json_obj(self) -> dict:
        return {
            "isc": self.isc,
            "sig": self.sig.astype(int).tolist(),
            "tmc": self.tmc.tolist(),
            "drv": self.drv.tolist(),
            "stp": self.stp.astype(int).tolist(),
            "ext": self.ext.astype(int).tolist(),
            "inf": self.inf.astype(int).tolist(),
            "ql": self.ql.astype(int).tolist(),
            "tt": self.tt.astype(int).tolist(),
            "seed": int(self.seed),
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "SimulationRecord":
        try:
            rec = cls(
                isc=str(obj["isc"]),
                sig=np.asarray(obj["sig"], dtype=np.int64),
                tmc=np.asarray(obj["tmc"], dtype=np.float64),
                drv=np.asarray(obj["drv"], dtype=np.float64),
                stp=np.asarray(obj["stp"], dtype=np.int64),
                ext=np.asarray(obj["ext"], dtype=np.int64),
                inf=np.asarray(obj["inf"], dtype=np.int64),
                ql=np.asarray(obj["ql"], dtype=np.int64),
                tt=np.asarray(obj["tt"], dtype=np.int64),
                seed=int(obj["seed"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigurationError(f"malformed record: {exc}") from exc
        try:
            rec.validate()
        except (ShapeError, ContractError) as exc:
            raise ConfigurationError(f"invalid record: {exc}") from exc
        return rec


# ---------------------------------------------------------------------------
# scenario sampling


@dataclass
class ScenarioConfig:
    """Sampling ranges for scenario generation (uniform unless noted)."""

    duration: int = 2400
    warmup: int = 600
    cycle_range: tuple[int, int] = (CYCLE_MIN, CYCLE_MAX)
    major_green_range: tuple[float, float] = (0.40, 0.93)   # target phase 2/6 green share
    left_green_range: tuple[float, float] = (8.0, 20.0)     # protected-left green [s]
    minor_left_share: tuple[float, float] = (0.20, 0.45)
    demand_range: tuple[float, float] = (0.03, 0.40)        # veh/s per arm
    arm_demand_spread: tuple[float, float] = (0.6, 1.4)     # per-arm multiplier
    turn_alpha: tuple[float, float, float] = (1.8, 5.5, 1.7)
    drv_ranges: dict = field(
        default_factory=lambda: {
            "accel": (1.5, 3.0),
            "decel": (3.0, 5.0),
            "emergency_decel": (6.0, 10.0),
            "min_gap": (1.5, 3.5),
            "headway_tau": (0.9, 2.2),
            "speed_dev_sigma": (0.0, 8.0),
            "lc_cooperative": (0.0, 1.0),
            "lc_speed_gain": (0.0, 2.0),
            "lc_keep_right": (0.0, 1.0),
        }
    )

    def __post_init__(self):
        if self.duration < self.warmup + WINDOW_SECONDS:
            raise ConfigurationError("duration must cover warmup plus one 400-s window")
        lo, hi = self.cycle_range
        if lo < CYCLE_MIN or hi > CYCLE_MAX or lo > hi:
            raise ConfigurationError(f"cycle_range must stay within [{CYCLE_MIN}, {CYCLE_MAX}]")
        for name in (
            "major_green_range",
            "left_green_range",
            "minor_left_share",
            "demand_range",
            "arm_demand_spread",
        ):
            lo, hi = getattr(self, name)
            if not 0 <= lo <= hi:
                raise ConfigurationError(f"{name} must satisfy 0 <= lo <= hi, got ({lo}, {hi})")
        for name, (lo, hi) in self.drv_ranges.items():
            if name not in DRV_FIELDS:
                raise ConfigurationError(f"unknown driving parameter {name}")
            if not 0 <= lo <= hi <= 30:
                raise ConfigurationError(f"drv range for {name} outside [0, 30]")

    def to_json_obj(self) -> dict:
        return {
            "duration": self.duration,
            "warmup": self.warmup,
            "cycle_range": list(self.cycle_range),
            "major_green_range": list(self.major_green_range),
            "left_green_range": list(self.left_green_range),
            "minor_left_share": list(self.minor_left_share),
            "demand_range": list(self.demand_range),
            "arm_demand_spread": list(self.arm_demand_spread),
            "turn_alpha": list(self.turn_alpha),
            "drv_ranges": {k: list(v) for k, v in self.drv_ranges.items()},
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "ScenarioConfig":
        kwargs = {}
        valid = {f.name for f in fields(cls)}
        for key, val in obj.items():
            if key not in valid:
                raise ConfigurationError(f"unknown scenario config key {key!r}")
            if key == "drv_ranges":
                kwargs[key] = {k: tuple(v) for k, v in val.items()}
            elif isinstance(val, list):
                kwargs[key] = tuple(val)
            else:
                kwargs[key] = val
        return cls(**kwargs)


def _sample_plan(cfg: ScenarioConfig, rng: np.random.Generator) -> SignalTimingPlan:
    clearance = 5  # 3 s yellow + 2 s all-red per served phase
    cycle = int(rng.integers(cfg.cycle_range[0], cfg.cycle_range[1] + 1))
    offset = int(rng.integers(0, cycle))
    share = rng.uniform(*cfg.major_green_range)
    g1 = int(round(rng.uniform(*cfg.left_green_range)))
    g5 = int(round(rng.uniform(*cfg.left_green_range)))
    barrier = int(round(share * cycle + min(g1, g5) + 2 * clearance))
    barrier = max(barrier, max(g1, g5) + 2 * clearance + 5)
    barrier = min(barrier, cycle - 2 * clearance - 2 * 5 - 10)
    minor = cycle - barrier

    def minor_split():
        left = int(round(rng.uniform(*cfg.minor_left_share) * (minor - 2 * clearance)))
        left = max(5, min(left, minor - 2 * clearance - 5))
        return left, minor - 2 * clearance - left

    g3, g4 = minor_split()
    g7, g8 = minor_split()
    greens = {
        1: g1,
        2: barrier - 2 * clearance - g1,
        3: g3,
        4: g4,
        5: g5,
        6: barrier - 2 * clearance - g5,
        7: g7,
        8: g8,
    }
    timings = {p: PhaseTiming(green=g, max_green=cycle) for p, g in greens.items()}
    return SignalTimingPlan(cycle=cycle, offset=offset, barrier=barrier, timings=timings)


def sample_scenario(cfg: ScenarioConfig, seed: int):
    """Draw one scenario's parameters: (plan, drv, ratios, demand, window, sim_seed)."""
    rng = np.random.default_rng(seed)
    plan = _sample_plan(cfg, rng)
    drv = DrivingBehavior(**{name: float(rng.uniform(*cfg.drv_ranges[name])) for name in DRV_FIELDS})
    ratios = TurnRatios.generate(rng, alpha=cfg.turn_alpha)
    demand = rng.uniform(*cfg.demand_range) * rng.uniform(*cfg.arm_demand_spread, size=4)
    starts = (cfg.duration - WINDOW_SECONDS - cfg.warmup) // 5 + 1
    window = Window(start=cfg.warmup + 5 * int(rng.integers(0, starts)), seconds=WINDOW_SECONDS)
    sim_seed = int(rng.integers(0, 2**63 - 1))
    return plan, drv, ratios, demand, window, sim_seed


def realize_record(
    topology: IntersectionTopology,
    plan: SignalTimingPlan,
    drv: DrivingBehavior,
    ratios: TurnRatios,
    demand,
    window: Window,
    sim_seed: int,
    duration: int,
    record_seed: int,
) -> SimulationRecord:
    """Simulate one fully specified scenario and cut a record out of it."""
    if window.start + window.seconds > duration:
        raise ConfigurationError("window extends past the end of the simulation")
    traces = simulate(topology, plan, drv, ratios, demand, sim_seed, duration=duration)
    stp, ext, inf = extract_waveforms(traces, topology, window)
    ql = np.rint(np.minimum(compute_queue_series(traces, topology, window), QL_MAX)).astype(np.int64)
    tt = compute_travel_time_hist(traces, topology, window)
    rec = SimulationRecord(
        isc=topology.intersection_id,
        sig=render_signal(plan, window).astype(np.int64),
        tmc=ratios.raw,
        drv=drv.to_vector(),
        stp=stp,
        ext=ext,
        inf=inf,
        ql=ql,
        tt=tt,
        seed=record_seed,
    )
    rec.validate()
    return rec


def build_record(
    topology: IntersectionTopology, cfg: ScenarioConfig, seed: int
) -> SimulationRecord:
    """Simulate one sampled scenario and cut a record out of it."""
    plan, drv, ratios, demand, window, sim_seed = sample_scenario(cfg, seed)
    return realize_record(
        topology, plan, drv, ratios, demand, window, sim_seed, cfg.duration, seed
    )


def generate_dataset(
    topology: IntersectionTopology, cfg: ScenarioConfig, n: int, seed: int
) -> list[SimulationRecord]:
    """n independently seeded records; the same master seed reproduces all."""
    if n < 0:
        raise ContractError("record count must be >= 0")
    child_seeds = np.random.SeedSequence(seed).generate_state(max(n, 1), dtype=np.uint64)[:n]
    return [build_record(topology, cfg, int(s)) for s in child_seeds]


# ---------------------------------------------------------------------------
# JSONL I/O


def write_jsonl(records, path: str) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_json_obj()) + "\n")


def read_jsonl(path: str) -> list[SimulationRecord]:
    records = []
    with open(path) as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ConfigurationError(f"{path}:{line_no}: invalid JSON: {exc}") from exc
            records.append(SimulationRecord.from_json_obj(obj))
    return records
