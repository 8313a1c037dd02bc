"""Intersection topology: lane tables, phase mapping and graph templates.

Geometry model
--------------
A four-arm junction.  Arms are indexed by the compass point the traffic
comes *from*: 0=N, 1=E, 2=S, 3=W.  Each arm consists of two road segments:

* the *approach segment* (up to 12 stop-bar lanes, global ids ``12*arm +
  slot``), ending at the stop bar, and
* the *upstream segment* one hop further out (up to 3 lanes, global ids
  ``3*arm + slot``).  The upstream lanes carry the inflow detectors.

Every exit side has 4 departure lanes (global ids ``4*side + slot``).
Lane matrices in records keep the fixed slot layout (48 / 16 / 12 rows);
slots not present in a topology simply stay zero everywhere.

Signal phases follow the usual dual-ring numbering with the major road on
the E-W axis: through movements get phases 2 (eastbound), 6 (westbound),
4 (southbound), 8 (northbound); protected lefts get 5, 1, 7, 3 for the
same four arms.  Right turns move with their arm's through phase.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from ..errors import ConfigurationError

N_STOP_SLOTS = 48
N_EXIT_SLOTS = 16
N_INFLOW_SLOTS = 12
N_PHASES = 8
STOP_SLOTS_PER_ARM = 12
EXIT_SLOTS_PER_SIDE = 4
INFLOW_SLOTS_PER_ARM = 3

LEFT, THROUGH, RIGHT = 0, 1, 2
MOVEMENT_NAMES = ("left", "through", "right")

ARM_NAMES = ("N", "E", "S", "W")

# through / left phase for each arm (arm order N, E, S, W)
THROUGH_PHASE = (4, 6, 8, 2)
LEFT_PHASE = (7, 1, 3, 5)

RING_A = (1, 2, 3, 4)
RING_B = (5, 6, 7, 8)


def exit_side(arm: int, movement: int) -> int:
    """Compass side a vehicle leaves on, given its origin arm and movement."""
    if movement == THROUGH:
        return (arm + 2) % 4
    if movement == LEFT:
        return (arm + 1) % 4
    return (arm + 3) % 4


@dataclass(frozen=True)
class StopLane:
    id: int          # global slot id, 12*arm + slot
    arm: int
    slot: int        # 0 = leftmost
    movement: int
    phase: int


@dataclass(frozen=True)
class ExitLane:
    id: int          # 4*side + slot
    side: int
    slot: int
    phase: int


@dataclass(frozen=True)
class InflowLane:
    id: int          # 3*arm + slot
    arm: int
    slot: int        # 0 = leftmost
    phase: int


@dataclass
class PhaseMap:
    """Lane membership per phase (index 0 holds phase 1, ... index 7 phase 8).

    Exit and inflow lanes are partitioned: each belongs to exactly one
    phase.  Stop lanes are partitioned as well (right-turn lanes count
    toward their arm's through phase).
    """

    stop: list[list[int]]
    exit: list[list[int]]
    inflow: list[list[int]]


@dataclass
class IntersectionTopology:
    intersection_id: str
    stop_lanes: list[StopLane]
    exit_lanes: list[ExitLane]
    inflow_lanes: list[InflowLane]
    seg1_len: list[float]                    # approach-segment length per arm [m]
    seg2_len: list[float]                    # upstream-segment length per arm [m]
    exit_edges: list[tuple[int, int]]        # (stop lane id, exit lane id)
    inflow_edges: list[tuple[int, int]]      # (stop lane id, inflow lane id)
    hop_one: dict[int, list[int]] = field(default_factory=dict)   # phase -> queue lanes at the bar
    hop_two: dict[int, list[int]] = field(default_factory=dict)   # phase -> upstream lanes, leftmost first

    def __post_init__(self):
        self.validate()

    # ------------------------------------------------------------------
    def validate(self) -> None:
        if not (1 <= len(self.stop_lanes) <= N_STOP_SLOTS):
            raise ConfigurationError("stop lane count out of range")
        if len(self.exit_lanes) > N_EXIT_SLOTS or len(self.inflow_lanes) > N_INFLOW_SLOTS:
            raise ConfigurationError("too many exit or inflow lanes")
        if len(self.seg1_len) != 4 or len(self.seg2_len) != 4:
            raise ConfigurationError("segment lengths must be given per arm")
        ids = [l.id for l in self.stop_lanes]
        if len(set(ids)) != len(ids):
            raise ConfigurationError("duplicate stop lane ids")
        for lane in self.stop_lanes:
            if lane.id != STOP_SLOTS_PER_ARM * lane.arm + lane.slot or lane.slot >= STOP_SLOTS_PER_ARM:
                raise ConfigurationError(f"stop lane {lane.id} breaks the slot layout")
            if lane.phase not in range(1, 9):
                raise ConfigurationError(f"stop lane {lane.id} has phase {lane.phase}")
        stop_ids = set(ids)
        exit_ids = {l.id for l in self.exit_lanes}
        inflow_ids = {l.id for l in self.inflow_lanes}
        for src, dst in self.exit_edges:
            if src not in stop_ids or dst not in exit_ids:
                raise ConfigurationError(f"exit edge ({src}, {dst}) references unknown lanes")
        for src, dst in self.inflow_edges:
            if src not in stop_ids or dst not in inflow_ids:
                raise ConfigurationError(f"inflow edge ({src}, {dst}) references unknown lanes")
        # every exit / inflow lane must be reachable in its graph template
        fed_exit = {dst for _, dst in self.exit_edges}
        fed_inflow = {dst for _, dst in self.inflow_edges}
        if fed_exit != exit_ids:
            raise ConfigurationError("exit template leaves some exit lanes without sources")
        if fed_inflow != inflow_ids:
            raise ConfigurationError("inflow template leaves some inflow lanes without sources")
        for phase, lanes in self.hop_two.items():
            if not lanes:
                raise ConfigurationError(f"phase {phase} has no upstream lanes")

    # ------------------------------------------------------------------
    def stop_lane(self, lane_id: int) -> StopLane:
        return self._stop_by_id[lane_id]

    @property
    def _stop_by_id(self) -> dict[int, StopLane]:
        return {l.id: l for l in self.stop_lanes}

    def stop_lanes_of(self, arm: int, movement: int | None = None) -> list[StopLane]:
        out = [l for l in self.stop_lanes if l.arm == arm]
        if movement is not None:
            out = [l for l in out if l.movement == movement]
        return out

    def exit_assignment(self) -> dict[int, int]:
        """stop lane id -> the exit lane its vehicles depart on."""
        return {src: dst for src, dst in self.exit_edges}

    def phase_map(self) -> PhaseMap:
        stop = [[] for _ in range(N_PHASES)]
        for lane in self.stop_lanes:
            stop[lane.phase - 1].append(lane.id)
        exit_ = [[] for _ in range(N_PHASES)]
        for lane in self.exit_lanes:
            exit_[lane.phase - 1].append(lane.id)
        inflow = [[] for _ in range(N_PHASES)]
        for lane in self.inflow_lanes:
            inflow[lane.phase - 1].append(lane.id)
        return PhaseMap(stop=stop, exit=exit_, inflow=inflow)

    # ------------------------------------------------------------------
    def to_json_obj(self) -> dict:
        return {
            "id": self.intersection_id,
            "seg1_len": list(self.seg1_len),
            "seg2_len": list(self.seg2_len),
            "stop_lanes": [
                {
                    "id": l.id,
                    "arm": l.arm,
                    "slot": l.slot,
                    "movement": MOVEMENT_NAMES[l.movement],
                    "phase": l.phase,
                }
                for l in self.stop_lanes
            ],
            "exit_lanes": [
                {"id": l.id, "side": l.side, "slot": l.slot, "phase": l.phase}
                for l in self.exit_lanes
            ],
            "inflow_lanes": [
                {"id": l.id, "arm": l.arm, "slot": l.slot, "phase": l.phase}
                for l in self.inflow_lanes
            ],
            "hop_graph": {
                str(p): {"one_hop": self.hop_one.get(p, []), "two_hop": self.hop_two.get(p, [])}
                for p in range(1, 9)
            },
            "templates": {
                "exit_edges": [list(e) for e in self.exit_edges],
                "inflow_edges": [list(e) for e in self.inflow_edges],
            },
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "IntersectionTopology":
        try:
            move_idx = {name: i for i, name in enumerate(MOVEMENT_NAMES)}
            stop = [
                StopLane(d["id"], d["arm"], d["slot"], move_idx[d["movement"]], d["phase"])
                for d in obj["stop_lanes"]
            ]
            exit_ = [ExitLane(d["id"], d["side"], d["slot"], d["phase"]) for d in obj["exit_lanes"]]
            inflow = [InflowLane(d["id"], d["arm"], d["slot"], d["phase"]) for d in obj["inflow_lanes"]]
            hop = obj["hop_graph"]
            return cls(
                intersection_id=obj["id"],
                stop_lanes=stop,
                exit_lanes=exit_,
                inflow_lanes=inflow,
                seg1_len=[float(x) for x in obj["seg1_len"]],
                seg2_len=[float(x) for x in obj["seg2_len"]],
                exit_edges=[tuple(e) for e in obj["templates"]["exit_edges"]],
                inflow_edges=[tuple(e) for e in obj["templates"]["inflow_edges"]],
                hop_one={int(p): list(h["one_hop"]) for p, h in hop.items()},
                hop_two={int(p): list(h["two_hop"]) for p, h in hop.items()},
            )
        except (KeyError, TypeError) as exc:
            raise ConfigurationError(f"malformed topology JSON: {exc}") from exc

    def save(self, path: str) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_obj(), fh, indent=1)

    @classmethod
    def load(cls, path: str) -> "IntersectionTopology":
        with open(path) as fh:
            return cls.from_json_obj(json.load(fh))


# ---------------------------------------------------------------------------
# the standard four-way family


def four_way_topology(
    intersection_id: str = "xw-standard",
    major_lanes: tuple[int, int, int] = (2, 3, 1),
    minor_lanes: tuple[int, int, int] = (1, 3, 1),
    seg1_len: float = 150.0,
    seg2_len: float = 250.0,
) -> IntersectionTopology:
    """Build the default four-arm topology.

    ``major_lanes`` / ``minor_lanes`` give (left, through, right) lane
    counts for the E-W and N-S arms.  The defaults yield 22 stop lanes and
    graph templates with 22 exit edges and 72 inflow edges.
    """
    stop_lanes: list[StopLane] = []
    for arm in range(4):
        n_left, n_through, n_right = major_lanes if arm in (1, 3) else minor_lanes
        movements = [LEFT] * n_left + [THROUGH] * n_through + [RIGHT] * n_right
        if len(movements) > STOP_SLOTS_PER_ARM:
            raise ConfigurationError("more than 12 stop lanes on one arm")
        for slot, movement in enumerate(movements):
            phase = LEFT_PHASE[arm] if movement == LEFT else THROUGH_PHASE[arm]
            stop_lanes.append(StopLane(STOP_SLOTS_PER_ARM * arm + slot, arm, slot, movement, phase))

    # exit lanes: slot 0 receives protected lefts, 1-2 the throughs, 3 the
    # rights; a slot no movement feeds is not built at all
    exit_candidates = {}
    for side in range(4):
        left_arm = (side + 3) % 4      # arm whose lefts depart on this side
        through_arm = (side + 2) % 4
        right_arm = (side + 1) % 4
        phases = [
            LEFT_PHASE[left_arm],
            THROUGH_PHASE[through_arm],
            THROUGH_PHASE[through_arm],
            THROUGH_PHASE[right_arm],
        ]
        for slot in range(EXIT_SLOTS_PER_SIDE):
            lane_id = EXIT_SLOTS_PER_SIDE * side + slot
            exit_candidates[lane_id] = ExitLane(lane_id, side, slot, phases[slot])

    # upstream (inflow) lanes: leftmost pre-positions for the protected left
    inflow_lanes = []
    for arm in range(4):
        for slot in range(INFLOW_SLOTS_PER_ARM):
            phase = LEFT_PHASE[arm] if slot == 0 else THROUGH_PHASE[arm]
            inflow_lanes.append(InflowLane(INFLOW_SLOTS_PER_ARM * arm + slot, arm, slot, phase))

    # exit template: each stop lane feeds exactly one departure lane
    exit_edges: list[tuple[int, int]] = []
    through_counter: dict[int, int] = {}
    for lane in stop_lanes:
        side = exit_side(lane.arm, lane.movement)
        if lane.movement == LEFT:
            slot = 0
        elif lane.movement == RIGHT:
            slot = 3
        else:
            k = through_counter.get(lane.arm, 0)
            through_counter[lane.arm] = k + 1
            slot = 1 + (k % 2)
        exit_edges.append((lane.id, EXIT_SLOTS_PER_SIDE * side + slot))
    exit_lanes = [exit_candidates[i] for i in sorted({dst for _, dst in exit_edges})]

    # inflow template: every stop lane of an arm is context for each of the
    # arm's upstream lanes; the opposing arm's left-turn bays additionally
    # feed the leftmost upstream lane (their discharge directly shapes when
    # platoons reach it)
    inflow_edges: list[tuple[int, int]] = []
    for arm in range(4):
        own = [l.id for l in stop_lanes if l.arm == arm]
        for slot in range(INFLOW_SLOTS_PER_ARM):
            dst = INFLOW_SLOTS_PER_ARM * arm + slot
            for src in own:
                inflow_edges.append((src, dst))
        opposing = (arm + 2) % 4
        for lane in stop_lanes:
            if lane.arm == opposing and lane.movement == LEFT:
                inflow_edges.append((lane.id, INFLOW_SLOTS_PER_ARM * arm))

    # per-phase queue lanes: lefts for odd phases, throughs for even ones
    hop_one: dict[int, list[int]] = {}
    hop_two: dict[int, list[int]] = {}
    for arm in range(4):
        lefts = [l.id for l in stop_lanes if l.arm == arm and l.movement == LEFT]
        throughs = [l.id for l in stop_lanes if l.arm == arm and l.movement == THROUGH]
        upstream = [INFLOW_SLOTS_PER_ARM * arm + s for s in range(INFLOW_SLOTS_PER_ARM)]
        hop_one[LEFT_PHASE[arm]] = lefts
        hop_one[THROUGH_PHASE[arm]] = throughs
        hop_two[LEFT_PHASE[arm]] = upstream
        hop_two[THROUGH_PHASE[arm]] = upstream

    return IntersectionTopology(
        intersection_id=intersection_id,
        stop_lanes=stop_lanes,
        exit_lanes=exit_lanes,
        inflow_lanes=inflow_lanes,
        seg1_len=[seg1_len] * 4,
        seg2_len=[seg2_len] * 4,
        exit_edges=exit_edges,
        inflow_edges=inflow_edges,
        hop_one=hop_one,
        hop_two=hop_two,
    )
