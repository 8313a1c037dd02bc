"""Waveform, queue-length and travel-time extraction from vehicle traces.

All extractors look only at the part of a scenario covered by a
:class:`~mtdt.sim.signal.Window` and bucket events into the window's
5-second buckets.  A vehicle standing still is one whose sampled speed is
below 0.1 m/s.
"""

from __future__ import annotations

import numpy as np

from .engine import UPSTREAM_LANE_BASE
from .signal import BUCKET_SECONDS, Window
from .topology import (
    N_EXIT_SLOTS,
    N_INFLOW_SLOTS,
    N_PHASES,
    N_STOP_SLOTS,
    IntersectionTopology,
)

STOPPED_SPEED = 0.1     # m/s
COUNT_CAP = 8           # waveform buckets saturate at 8 vehicles
TT_BINS = 200           # travel-time histogram: 5-s bins spanning 0..1000 s


def extract_waveforms(traces, topology: IntersectionTopology, window: Window):
    """Detector counts per 5-s bucket: (stp 48xB, ext 16xB, inf 12xB).

    Counts are clamped to 8, the detector saturation value.
    """
    buckets = window.buckets
    stp = np.zeros((N_STOP_SLOTS, buckets), dtype=np.int64)
    ext = np.zeros((N_EXIT_SLOTS, buckets), dtype=np.int64)
    inf = np.zeros((N_INFLOW_SLOTS, buckets), dtype=np.int64)
    for tr in traces:
        b = window.bucket_of(tr.entry_time)
        if b is not None:
            inf[tr.entry_lane, b] += 1
        if tr.stopbar_time is not None:
            b = window.bucket_of(tr.stopbar_time)
            if b is not None:
                stp[tr.stop_lane, b] += 1
        if tr.exit_time is not None:
            b = window.bucket_of(tr.exit_time)
            if b is not None:
                ext[tr.exit_lane, b] += 1
    return (
        np.minimum(stp, COUNT_CAP),
        np.minimum(ext, COUNT_CAP),
        np.minimum(inf, COUNT_CAP),
    )


def lane_queue_profile(traces, window: Window) -> np.ndarray:
    """(60, window seconds) matrix of per-lane standing-queue extent.

    Row r is stop lane r for r < 48, upstream lane ``r - 48`` otherwise;
    column s holds the largest distance-to-segment-end over vehicles that
    were standing (< 0.1 m/s) at second ``window.start + s``.
    """
    n_lanes = UPSTREAM_LANE_BASE + N_INFLOW_SLOTS
    profile = np.zeros((n_lanes, window.seconds))
    for tr in traces:
        for second, lane_code, dist, speed in tr.samples:
            if speed < STOPPED_SPEED and window.start <= second < window.end:
                col = second - window.start
                if dist > profile[lane_code, col]:
                    profile[lane_code, col] = dist
    return profile


def compute_queue_series(traces, topology: IntersectionTopology, window: Window) -> np.ndarray:
    """(8, buckets) queue length per phase in meters.

    Per bucket the value is the sum of (a) the largest standing-queue
    extent over the phase's stop-bar lanes and (b) the same over its
    upstream lanes -- all of them for through phases, only the leftmost
    one for protected-left phases (their vehicles pre-position there).
    """
    profile = lane_queue_profile(traces, window)
    buckets = window.buckets
    ql = np.zeros((N_PHASES, buckets))
    for phase in range(1, N_PHASES + 1):
        one_hop = topology.hop_one.get(phase, [])
        two_hop = topology.hop_two.get(phase, [])
        if phase % 2 == 1 and two_hop:
            two_hop = two_hop[:1]
        rows_a = profile[one_hop].reshape(len(one_hop), buckets, BUCKET_SECONDS) if one_hop else None
        rows_b = (
            profile[[UPSTREAM_LANE_BASE + i for i in two_hop]].reshape(len(two_hop), buckets, BUCKET_SECONDS)
            if two_hop
            else None
        )
        a = rows_a.max(axis=(0, 2)) if rows_a is not None else np.zeros(buckets)
        b = rows_b.max(axis=(0, 2)) if rows_b is not None else np.zeros(buckets)
        ql[phase - 1] = a + b
    return ql


def compute_travel_time_hist(traces, topology: IntersectionTopology, window: Window) -> np.ndarray:
    """(8, 200) histogram of proximity travel times per serving phase.

    A vehicle contributes when its exit time falls inside the window; its
    bin is ``floor((exit - entry) / 5)``, clipped to the last bin.
    """
    tt = np.zeros((N_PHASES, TT_BINS), dtype=np.int64)
    for tr in traces:
        if tr.exit_time is None or window.bucket_of(tr.exit_time) is None:
            continue
        b = int((tr.exit_time - tr.entry_time) // BUCKET_SECONDS)
        b = min(max(b, 0), TT_BINS - 1)
        tt[tr.phase - 1, b] += 1
    return tt
