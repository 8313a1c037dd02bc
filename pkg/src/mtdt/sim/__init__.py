"""Mesoscopic scenario generation for a signalized intersection.

Submodules:

* :mod:`mtdt.sim.topology`  -- lane tables, phase mapping, graph templates
* :mod:`mtdt.sim.signal`    -- dual-ring signal timing plans and rendering
* :mod:`mtdt.sim.behavior`  -- driving-behavior vectors and turn ratios
* :mod:`mtdt.sim.engine`    -- the per-second queue-server simulation
* :mod:`mtdt.sim.extract`   -- waveform / queue / travel-time extraction
* :mod:`mtdt.sim.dataset`   -- scenario sampling, records, JSONL datasets
"""

from .topology import IntersectionTopology, PhaseMap, four_way_topology
from .signal import PhaseTiming, SignalTimingPlan, Window, render_signal
from .behavior import DrivingBehavior, TurnRatios
from .engine import VehicleTrace, simulate
from .extract import compute_queue_series, compute_travel_time_hist, extract_waveforms
from .dataset import (
    ScenarioConfig,
    SimulationRecord,
    build_record,
    generate_dataset,
    read_jsonl,
    sample_scenario,
    write_jsonl,
)

__all__ = [
    "DrivingBehavior",
    "IntersectionTopology",
    "PhaseMap",
    "PhaseTiming",
    "ScenarioConfig",
    "SignalTimingPlan",
    "SimulationRecord",
    "TurnRatios",
    "VehicleTrace",
    "Window",
    "build_record",
    "compute_queue_series",
    "compute_travel_time_hist",
    "extract_waveforms",
    "four_way_topology",
    "generate_dataset",
    "read_jsonl",
    "render_signal",
    "sample_scenario",
    "simulate",
    "write_jsonl",
]
