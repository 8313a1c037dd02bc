"""Dual-ring signal timing plans and per-bucket signal rendering.

Ring A runs phases 1-2-3-4, ring B runs 5-6-7-8.  Phases 1/2 and 5/6
occupy the cycle before the barrier, phases 3/4 and 7/8 the part after
it, so the two rings cross the barrier at the same instant.  A phase
with zero green is skipped entirely (no clearance either); any slack a
half-ring leaves before its segment boundary stays all-red.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError, ContractError
from .topology import N_PHASES, RING_A, RING_B

BUCKET_SECONDS = 5
CYCLE_MIN = 120
CYCLE_MAX = 240


@dataclass(frozen=True)
class PhaseTiming:
    green: int
    yellow: int = 3
    red: int = 2
    min_green: int = 5
    max_green: int | None = None

    def duration(self) -> int:
        return self.green + self.yellow + self.red if self.green > 0 else 0


@dataclass
class SignalTimingPlan:
    cycle: int
    offset: int = 0
    barrier: int | None = None       # seconds from cycle start to the ring barrier
    timings: dict[int, PhaseTiming] = field(default_factory=dict)

    def __post_init__(self):
        if not CYCLE_MIN <= self.cycle <= CYCLE_MAX:
            raise ConfigurationError(f"cycle length {self.cycle} outside [{CYCLE_MIN}, {CYCLE_MAX}]")
        for p in range(1, N_PHASES + 1):
            self.timings.setdefault(p, PhaseTiming(green=0))
        if self.barrier is None:
            self.barrier = sum(self.timings[p].duration() for p in RING_A[:2])
        if not 0 <= self.barrier <= self.cycle:
            raise ConfigurationError("barrier time outside the cycle")
        for half, seg_len in (
            (RING_A[:2], self.barrier),
            (RING_A[2:], self.cycle - self.barrier),
            (RING_B[:2], self.barrier),
            (RING_B[2:], self.cycle - self.barrier),
        ):
            used = sum(self.timings[p].duration() for p in half)
            if used > seg_len:
                raise ConfigurationError(
                    f"phases {half} need {used}s but only {seg_len}s before the segment boundary"
                )
        for p, t in self.timings.items():
            if t.green < 0 or t.yellow < 0 or t.red < 0:
                raise ConfigurationError(f"negative interval on phase {p}")
            if t.green and t.max_green is not None and t.green > t.max_green:
                raise ConfigurationError(f"phase {p} green exceeds max_green")
            if t.green and t.green < t.min_green:
                raise ConfigurationError(f"phase {p} green below min_green")

    # ------------------------------------------------------------------
    def green_table(self) -> np.ndarray:
        """(8, cycle) uint8 table of green seconds at offset 0."""
        table = np.zeros((N_PHASES, self.cycle), dtype=np.uint8)
        for ring in (RING_A, RING_B):
            for half, start in ((ring[:2], 0), (ring[2:], self.barrier)):
                t = start
                for p in half:
                    timing = self.timings[p]
                    if timing.green <= 0:
                        continue
                    table[p - 1, t : t + timing.green] = 1
                    t += timing.duration()
        return table

    def to_json_obj(self) -> dict:
        return {
            "cycle": self.cycle,
            "offset": self.offset,
            "barrier": self.barrier,
            "phases": {
                str(p): {
                    "green": t.green,
                    "yellow": t.yellow,
                    "red": t.red,
                    "min_green": t.min_green,
                    "max_green": t.max_green,
                }
                for p, t in sorted(self.timings.items())
            },
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "SignalTimingPlan":
        try:
            timings = {
                int(p): PhaseTiming(
                    green=int(d["green"]),
                    yellow=int(d.get("yellow", 3)),
                    red=int(d.get("red", 2)),
                    min_green=int(d.get("min_green", 5)),
                    max_green=d.get("max_green"),
                )
                for p, d in obj["phases"].items()
            }
            return cls(
                cycle=int(obj["cycle"]),
                offset=int(obj.get("offset", 0)),
                barrier=obj.get("barrier"),
                timings=timings,
            )
        except (KeyError, TypeError) as exc:
            raise ConfigurationError(f"malformed signal plan JSON: {exc}") from exc


@dataclass(frozen=True)
class Window:
    """A contiguous stretch of scenario time split into 5-second buckets."""

    start: int
    seconds: int = 400

    def __post_init__(self):
        if self.start < 0 or self.seconds <= 0:
            raise ContractError("window must start at t >= 0 and be non-empty")
        if self.seconds % BUCKET_SECONDS:
            raise ContractError(f"window of {self.seconds}s does not divide into 5-s buckets")

    @property
    def buckets(self) -> int:
        return self.seconds // BUCKET_SECONDS

    @property
    def end(self) -> int:
        return self.start + self.seconds

    def bucket_of(self, t: float) -> int | None:
        """Bucket index of an event time, or None when outside the window."""
        if not self.start <= t < self.end:
            return None
        return int((t - self.start) // BUCKET_SECONDS)


def render_signal(plan: SignalTimingPlan, window: Window) -> np.ndarray:
    """(8, buckets) 0/1 matrix: 1 where a phase is green for the majority
    (>= 3 of 5) of the bucket's seconds."""
    table = plan.green_table()
    seconds = (np.arange(window.start, window.end) - plan.offset) % plan.cycle
    per_second = table[:, seconds]                       # (8, window seconds)
    grouped = per_second.reshape(N_PHASES, window.buckets, BUCKET_SECONDS)
    return (grouped.sum(axis=2) >= 3).astype(np.uint8)
