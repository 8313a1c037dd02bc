"""Per-second mesoscopic simulation of one signalized intersection.

Vehicles are tracked individually but follow queue-server dynamics, not
car-following: each second a vehicle advances by up to ``min(v + accel,
target_speed)`` meters, clamped behind its leader (leader tail plus the
behavior vector's minimum gap) or at the segment boundary.  The stop bar
serves the front vehicle of a lane only while its phase shows green and
at most once per saturation headway, where the saturation headway is
derived from the behavior vector::

    h_sat = headway_tau + (vehicle_length + min_gap) / free_speed

Positions are distances to the end of the current segment, in meters,
decreasing as the vehicle advances.  Crossing instants are interpolated
inside the second, so stop-bar / exit times are fractional while position
samples stay on the 1-second grid.

Trace sample convention: ``samples[k] = (second, lane_code, distance,
speed)`` describes the state *at* that integer second; ``lane_code`` is
the stop-lane id (0..47) or ``48 + inflow lane id`` for upstream lanes.
A vehicle's first sample is written when it enters the upstream segment
(which is also its inflow-detector crossing) and its last one the second
before it crosses the stop bar.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError, ContractError
from .behavior import DrivingBehavior, TurnRatios
from .signal import SignalTimingPlan
from .topology import LEFT, RIGHT, THROUGH, IntersectionTopology

FREE_SPEED = 13.89          # m/s
VEHICLE_LENGTH = 5.0        # m
JUNCTION_BOX = 10.0         # m, stop bar to the exit detector
UPSTREAM_LANE_BASE = 48     # lane_code offset for upstream lanes
MIN_TARGET_SPEED = 3.0      # m/s floor after the per-driver deviation


@dataclass
class VehicleTrace:
    vehicle_id: int
    arm: int
    movement: int
    phase: int
    entry_time: float
    entry_lane: int
    stopbar_time: float | None = None
    stop_lane: int | None = None
    exit_time: float | None = None
    exit_lane: int | None = None
    samples: list[tuple[int, int, float, float]] = field(default_factory=list)


class _Vehicle:
    __slots__ = ("vid", "arm", "movement", "target", "d", "v", "trace")

    def __init__(self, vid, arm, movement, target, trace):
        self.vid = vid
        self.arm = arm
        self.movement = movement
        self.target = target
        self.d = 0.0
        self.v = 0.0
        self.trace = trace


def _candidate_stop_lanes(topology: IntersectionTopology) -> dict[tuple[int, int], list]:
    """(arm, movement) -> stop lanes a vehicle may queue in, preference order."""
    out: dict[tuple[int, int], list] = {}
    for arm in range(4):
        lanes = topology.stop_lanes_of(arm)
        for movement in (LEFT, THROUGH, RIGHT):
            cands = [l for l in lanes if l.movement == movement]
            if not cands and movement == RIGHT:
                cands = [l for l in lanes if l.movement == THROUGH]
            out[(arm, movement)] = sorted(cands, key=lambda l: l.id)
    return out


def simulate(
    topology: IntersectionTopology,
    plan: SignalTimingPlan,
    drv: DrivingBehavior,
    ratios: TurnRatios,
    demand_rate,
    seed: int,
    duration: int = 2400,
) -> list[VehicleTrace]:
    """Run the scenario and return one trace per vehicle that entered.

    ``demand_rate`` is the arrival rate in vehicles/second, either one
    scalar for all four arms or a sequence of four.
    """
    rate = np.broadcast_to(np.asarray(demand_rate, dtype=np.float64), (4,))
    if np.any(rate < 0):
        raise ContractError("demand_rate must be >= 0")
    if duration <= 0:
        raise ContractError("duration must be positive")

    rng = np.random.default_rng(seed)
    green = plan.green_table()
    cycle = plan.cycle
    offset = plan.offset

    candidates = _candidate_stop_lanes(topology)
    for arm in range(4):
        for movement in range(3):
            if rate[arm] > 0 and ratios.reduced[arm, movement] > 1e-12:
                if not candidates[(arm, movement)]:
                    raise ConfigurationError(
                        f"arm {arm} has demand for movement {movement} but no usable stop lane"
                    )

    # pre-draw every random quantity in a fixed order (determinism)
    arrivals = [rng.poisson(rate[arm], size=duration) for arm in range(4)]
    totals = [int(a.sum()) for a in arrivals]
    movements = [
        rng.choice(3, size=totals[arm], p=ratios.reduced[arm]) if totals[arm] else np.empty(0, dtype=int)
        for arm in range(4)
    ]
    factors = [
        1.0 + (drv.speed_dev_sigma / 100.0) * rng.uniform(-1.0, 1.0, size=totals[arm])
        for arm in range(4)
    ]

    gap = VEHICLE_LENGTH + drv.min_gap
    h_sat = drv.headway_tau + gap / FREE_SPEED
    exit_for_stop = topology.exit_assignment()
    phase_of_stop = {l.id: l.phase for l in topology.stop_lanes}
    upstream_ids = [l.id for l in topology.inflow_lanes]

    stop_q: dict[int, list[_Vehicle]] = {l.id: [] for l in topology.stop_lanes}
    up_q: dict[int, list[_Vehicle]] = {i: [] for i in upstream_ids}
    backlog: list[list[_Vehicle]] = [[], [], [], []]
    next_ok: dict[int, float] = {l.id: -1e9 for l in topology.stop_lanes}
    spawned = [0, 0, 0, 0]
    traces: list[VehicleTrace] = []
    vid = 0

    # upstream lane pre-positioning: lefts keep left, rights keep right
    up_lane_for_movement = {LEFT: 0, THROUGH: 1, RIGHT: 2}

    for t in range(duration):
        green_t = green[:, (t - offset) % cycle]

        # --- admissions: backlog first, then this second's fresh arrivals ---
        for arm in range(4):
            n_new = arrivals[arm][t]
            for _ in range(n_new):
                k = spawned[arm]
                spawned[arm] += 1
                movement = int(movements[arm][k])
                target = max(MIN_TARGET_SPEED, FREE_SPEED * factors[arm][k])
                trace = VehicleTrace(
                    vehicle_id=-1,  # assigned at admission
                    arm=arm,
                    movement=movement,
                    phase=0,
                    entry_time=0.0,
                    entry_lane=-1,
                )
                backlog[arm].append(_Vehicle(-1, arm, movement, target, trace))
            # admit while the preferred upstream lane has room at its entry
            still_waiting = []
            for veh in backlog[arm]:
                slot = up_lane_for_movement[veh.movement]
                lane_id = 3 * arm + slot
                queue = up_q[lane_id]
                seg_len = topology.seg2_len[arm]
                if queue and queue[-1].d > seg_len - gap:
                    still_waiting.append(veh)
                    continue
                veh.vid = vid
                veh.d = seg_len
                veh.v = veh.target
                veh.trace.vehicle_id = vid
                veh.trace.entry_time = float(t)
                veh.trace.entry_lane = lane_id
                veh.trace.samples.append((t, UPSTREAM_LANE_BASE + lane_id, veh.d, veh.v))
                queue.append(veh)
                traces.append(veh.trace)
                vid += 1
            backlog[arm] = still_waiting

        # --- stop lanes: advance, serve the bar ---
        for lane_id, queue in stop_q.items():
            if not queue:
                continue
            phase = phase_of_stop[lane_id]
            is_green = bool(green_t[phase - 1])
            bound = None  # d the vehicle ahead ended up at, None for the front
            kept = []
            for i, veh in enumerate(queue):
                v_des = min(veh.v + drv.accel, veh.target)
                d_new = veh.d - v_des
                if i == 0 and d_new < 0:
                    crossed = False
                    if is_green and v_des > 0:
                        t_cross = max(t + veh.d / v_des, next_ok[lane_id])
                        if t_cross < t + 1:
                            next_ok[lane_id] = t_cross + h_sat
                            veh.trace.stopbar_time = t_cross
                            veh.trace.stop_lane = lane_id
                            veh.trace.phase = phase
                            veh.trace.exit_time = t_cross + JUNCTION_BOX / v_des
                            veh.trace.exit_lane = exit_for_stop[lane_id]
                            crossed = True
                    if crossed:
                        continue
                    d_new = 0.0
                if bound is not None:
                    d_new = max(d_new, bound + gap)
                d_new = max(d_new, 0.0)
                veh.v = veh.d - d_new
                veh.d = d_new
                bound = d_new
                kept.append(veh)
            stop_q[lane_id] = kept

        # --- upstream lanes: advance, hand over to stop lanes ---
        for lane_id in upstream_ids:
            queue = up_q[lane_id]
            if not queue:
                continue
            arm = lane_id // 3
            seg1 = topology.seg1_len[arm]
            bound = None
            kept = []
            for i, veh in enumerate(queue):
                v_des = min(veh.v + drv.accel, veh.target)
                d_new = veh.d - v_des
                if i == 0 and d_new < 0:
                    # try to enter the least-loaded candidate stop lane
                    cands = candidates[(arm, veh.movement)]
                    best = min(cands, key=lambda l: (len(stop_q[l.id]), l.id))
                    tail = stop_q[best.id][-1].d if stop_q[best.id] else None
                    d_enter = max(0.0, seg1 + d_new)
                    if tail is not None:
                        d_enter = max(d_enter, tail + gap)
                    if d_enter <= seg1 - 1e-9 or tail is None:
                        d_enter = min(d_enter, seg1)
                        veh.v = veh.d + (seg1 - d_enter)
                        veh.d = d_enter
                        stop_q[best.id].append(veh)
                        continue
                    d_new = 0.0
                if bound is not None:
                    d_new = max(d_new, bound + gap)
                d_new = max(d_new, 0.0)
                veh.v = veh.d - d_new
                veh.d = d_new
                bound = d_new
                kept.append(veh)
            up_q[lane_id] = kept

        # --- record the post-step state at second t + 1 ---
        for lane_id, queue in stop_q.items():
            for veh in queue:
                veh.trace.samples.append((t + 1, lane_id, veh.d, veh.v))
        for lane_id in upstream_ids:
            for veh in up_q[lane_id]:
                veh.trace.samples.append((t + 1, UPSTREAM_LANE_BASE + lane_id, veh.d, veh.v))

    return traces
