"""Bipartite lane graphs for waveform imputation.

Both imputation tasks share one layout: source nodes carry observed
stop-bar waveforms, target nodes carry the unknown series (all-zero rows),
and directed edges run source -> target along the topology's feeding
relations.  Edges are kept sorted by target so that per-target attention
can be computed over contiguous segments.

The scenario context vector stacks everything the graph rows don't carry:
the rendered signal table, the raw turn-movement matrix and the driving
behavior vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, ShapeError
from .sim.behavior import DRV_FIELDS, N_TMC
from .sim.dataset import N_BUCKETS
from .sim.topology import N_PHASES, N_STOP_SLOTS, IntersectionTopology

CONTEXT_SIZE = N_PHASES * N_BUCKETS + N_TMC * N_TMC + len(DRV_FIELDS)  # 1874


@dataclass
class SimulationGraph:
    """Node features (raw counts), directed edges and the target-row mask."""

    x: np.ndarray            # (n_nodes, N_BUCKETS) float64
    edges: np.ndarray        # (n_edges, 2) int64, sorted by (target, source)
    target_mask: np.ndarray  # (n_nodes,) bool

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.edges = np.asarray(self.edges, dtype=np.int64)
        self.target_mask = np.asarray(self.target_mask, dtype=bool)
        n = self.x.shape[0]
        if self.x.ndim != 2 or self.x.shape[1] != N_BUCKETS:
            raise ShapeError(f"node features must be (n, {N_BUCKETS}), got {self.x.shape}")
        if self.target_mask.shape != (n,):
            raise ShapeError("target mask length must match node count")
        if self.edges.ndim != 2 or self.edges.shape[1] != 2 or len(self.edges) == 0:
            raise ShapeError("edges must be a non-empty (n_edges, 2) array")
        src, dst = self.edges[:, 0], self.edges[:, 1]
        if src.min() < 0 or dst.max() >= n:
            raise ContractError("edge endpoint out of range")
        if self.target_mask[src].any():
            raise ContractError("edges must originate at source nodes")
        if not self.target_mask[dst].all():
            raise ContractError("edges must point at target nodes")
        order = np.lexsort((src, dst))
        if not np.array_equal(order, np.arange(len(self.edges))):
            raise ContractError("edges must be sorted by (target, source)")
        fed = set(dst.tolist())
        wanted = set(np.flatnonzero(self.target_mask).tolist())
        if fed != wanted:
            raise ContractError("every target node needs at least one incoming edge")
        if self.x[self.target_mask].any():
            raise ContractError("target rows must start out all-zero")

    @property
    def n_nodes(self) -> int:
        return self.x.shape[0]

    @property
    def target_ids(self) -> np.ndarray:
        """Target node ids in row order of the module output."""
        return np.flatnonzero(self.target_mask)

    @property
    def segments(self) -> np.ndarray:
        """Per-edge index of its target, counted in target-row order."""
        return np.searchsorted(self.target_ids, self.edges[:, 1])


def context_vector(sig: np.ndarray, tmc: np.ndarray, drv: np.ndarray) -> np.ndarray:
    """Flat scenario context: [signal table, turn ratios, driving vector]."""
    sig = np.asarray(sig, dtype=np.float64)
    tmc = np.asarray(tmc, dtype=np.float64)
    drv = np.asarray(drv, dtype=np.float64)
    if sig.shape != (N_PHASES, N_BUCKETS):
        raise ShapeError(f"sig must be ({N_PHASES}, {N_BUCKETS}), got {sig.shape}")
    if tmc.shape != (N_TMC, N_TMC):
        raise ShapeError(f"tmc must be ({N_TMC}, {N_TMC}), got {tmc.shape}")
    if drv.shape != (len(DRV_FIELDS),):
        raise ShapeError(f"drv must have {len(DRV_FIELDS)} entries, got {drv.shape}")
    return np.concatenate([sig.ravel(), tmc.ravel(), drv])


def _feeding_graph(template, lane_ids, stp: np.ndarray) -> SimulationGraph:
    # graph target rows follow the sorted lane ids, which may be sparse
    # (families that feed fewer departure slots keep the original slot ids)
    stp = np.asarray(stp, dtype=np.float64)
    if stp.shape != (N_STOP_SLOTS, N_BUCKETS):
        raise ShapeError(f"stp must be ({N_STOP_SLOTS}, {N_BUCKETS}), got {stp.shape}")
    rank = {lane_id: k for k, lane_id in enumerate(sorted(lane_ids))}
    x = np.vstack([stp, np.zeros((len(rank), N_BUCKETS))])
    edges = np.array([(src, N_STOP_SLOTS + rank[dst]) for src, dst in template], dtype=np.int64)
    edges = edges[np.lexsort((edges[:, 0], edges[:, 1]))]
    mask = np.arange(N_STOP_SLOTS + len(rank)) >= N_STOP_SLOTS
    return SimulationGraph(x=x, edges=edges, target_mask=mask)


def build_exit_graph(topology: IntersectionTopology, stp: np.ndarray) -> SimulationGraph:
    """Stop lanes feeding the exit lanes they discharge into.

    Target row k corresponds to the k-th exit lane in id order.
    """
    return _feeding_graph(topology.exit_edges, [l.id for l in topology.exit_lanes], stp)


def build_inflow_graph(topology: IntersectionTopology, stp: np.ndarray) -> SimulationGraph:
    """Stop lanes whose demand shows up on each upstream inflow lane."""
    return _feeding_graph(topology.inflow_edges, [l.id for l in topology.inflow_lanes], stp)
