"""Driving-behavior vectors and turn-movement ratios.

The behavior vector holds nine scalars, all constrained to [0, 30] (the
units differ per field; see DRV_FIELDS).  Turn ratios exist in two forms:
the raw segment-to-segment movement matrix (35x35, row-stochastic) kept
as a model feature, and the reduced per-arm (left, through, right)
triples that drive the simulation.  The two are tied together by a fixed
block layout: row i of the raw matrix belongs to arm ``i % 4``, and the
probability mass of arm a's movement m sits in column ``4*m + a``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ContractError, ShapeError

DRV_FIELDS = (
    "accel",
    "decel",
    "emergency_decel",
    "min_gap",
    "headway_tau",
    "speed_dev_sigma",
    "lc_cooperative",
    "lc_speed_gain",
    "lc_keep_right",
)
DRV_MIN, DRV_MAX = 0.0, 30.0

N_TMC = 35


@dataclass(frozen=True)
class DrivingBehavior:
    accel: float = 2.6
    decel: float = 4.5
    emergency_decel: float = 9.0
    min_gap: float = 2.5
    headway_tau: float = 1.0
    speed_dev_sigma: float = 5.0
    lc_cooperative: float = 1.0
    lc_speed_gain: float = 1.0
    lc_keep_right: float = 1.0

    def __post_init__(self):
        for name in DRV_FIELDS:
            v = getattr(self, name)
            if not DRV_MIN <= v <= DRV_MAX:
                raise ContractError(f"driving parameter {name}={v} outside [0, 30]")

    def to_vector(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in DRV_FIELDS], dtype=np.float64)

    @classmethod
    def from_vector(cls, vec) -> "DrivingBehavior":
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (9,):
            raise ShapeError(f"driving vector must have 9 entries, got {vec.shape}")
        return cls(**dict(zip(DRV_FIELDS, (float(v) for v in vec))))


def _dest_column(arm: int, movement: int) -> int:
    return 4 * movement + arm


@dataclass
class TurnRatios:
    """Raw NxN movement matrix plus the reduced per-arm (L, T, R) triples."""

    raw: np.ndarray
    reduced: np.ndarray

    def __post_init__(self):
        self.raw = np.asarray(self.raw, dtype=np.float64)
        self.reduced = np.asarray(self.reduced, dtype=np.float64)
        if self.raw.ndim != 2 or self.raw.shape[0] != self.raw.shape[1]:
            raise ShapeError("raw turn matrix must be square")
        if self.reduced.shape != (4, 3):
            raise ShapeError("reduced ratios must be (4 arms, 3 movements)")
        if np.any(self.raw < -1e-12) or np.any(self.raw > 1 + 1e-12):
            raise ContractError("raw turn entries must lie in [0, 1]")
        if not np.allclose(self.raw.sum(axis=1), 1.0, atol=1e-9):
            raise ContractError("raw turn matrix rows must sum to 1")
        if not np.allclose(self.reduced.sum(axis=1), 1.0, atol=1e-9):
            raise ContractError("reduced turn triples must sum to 1")
        if not np.allclose(reduce_matrix(self.raw), self.reduced, atol=1e-9):
            raise ContractError("reduced triples disagree with the raw matrix")

    @classmethod
    def from_reduced(cls, reduced, n: int = N_TMC) -> "TurnRatios":
        reduced = np.asarray(reduced, dtype=np.float64)
        if reduced.shape != (4, 3):
            raise ShapeError("reduced ratios must be (4, 3)")
        raw = np.zeros((n, n))
        for i in range(n):
            arm = i % 4
            for movement in range(3):
                raw[i, _dest_column(arm, movement)] = reduced[arm, movement]
        return cls(raw=raw, reduced=reduced)

    @classmethod
    def generate(cls, rng: np.random.Generator, alpha=(1.8, 5.5, 1.7), n: int = N_TMC) -> "TurnRatios":
        reduced = rng.dirichlet(alpha, size=4)
        return cls.from_reduced(reduced, n=n)


def reduce_matrix(raw: np.ndarray) -> np.ndarray:
    """Collapse a raw movement matrix to per-arm (L, T, R) triples."""
    raw = np.asarray(raw, dtype=np.float64)
    n = raw.shape[0]
    mass = np.zeros((4, 3))
    for i in range(n):
        arm = i % 4
        for movement in range(3):
            cols = [4 * movement + a for a in range(4)]
            mass[arm, movement] += raw[i, cols].sum()
    totals = mass.sum(axis=1, keepdims=True)
    totals[totals == 0] = 1.0
    return mass / totals
