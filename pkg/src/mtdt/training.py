"""Multi-task trainer.

The four task losses are computed per record on normalized scales and
summed without weights.  The two series modules are teacher-forced: their
inputs are built from ground-truth waveform aggregates, so during training
nothing downstream of the imputation modules depends on them.

Optimization is SGD with momentum over a small weight-decay grid; the
returned parameters are the snapshot of the best validation epoch of the
best grid point.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from . import tensor as T
from .errors import ConfigurationError, ContractError
from .graphs import build_exit_graph, build_inflow_graph, context_vector
from .model import (
    ModelParams,
    NormalizationSpec,
    aggregate_to_phases,
    build_mts,
    cnn_forward,
    gat_forward,
    normalize_mts,
)
from .sim.topology import IntersectionTopology

TRAIN_FRACTION = 0.75
VAL_FRACTION = 0.15
DIVERGENCE_LIMIT = 1e12  # a run whose loss passes this is not coming back

TASKS = ("ext", "inf", "ql", "tt")


def split_records(records, seed: int):
    """Deterministic (train, val, test) split: 75% / 15% / rest."""
    order = np.random.default_rng(seed).permutation(len(records))
    n_train = int(len(records) * TRAIN_FRACTION)
    n_val = int(len(records) * VAL_FRACTION)
    shuffled = [records[i] for i in order]
    return (
        shuffled[:n_train],
        shuffled[n_train : n_train + n_val],
        shuffled[n_train + n_val :],
    )


# ---------------------------------------------------------------------------
# per-record loss inputs, precomputed once


@dataclass
class PreparedRecord:
    exit_graph: object
    inflow_graph: object
    z: np.ndarray
    ext_target: np.ndarray   # (n_exit_lanes, 80) normalized
    inf_target: np.ndarray   # (n_inflow_lanes, 80) normalized
    v_ql: np.ndarray         # (8, 7, 80) teacher-forced, normalized
    v_tt: np.ndarray
    ql_target: np.ndarray    # (8, 80) normalized
    tt_probs: np.ndarray     # (8, 200) rows sum to 1, or all-zero when empty


def prepare_record(record, topology: IntersectionTopology, norm: NormalizationSpec) -> PreparedRecord:
    stp = record.stp.astype(float)
    sig = record.sig.astype(float)
    drv = record.drv.astype(float)
    pm = topology.phase_map()
    ext_ids = [l.id for l in topology.exit_lanes]
    inf_ids = [l.id for l in topology.inflow_lanes]
    stp_phase = aggregate_to_phases(stp, pm.stop)
    stp_total = stp.sum(axis=0)
    totals = record.tt.sum(axis=1, keepdims=True).astype(float)
    tt_probs = np.divide(record.tt, totals, out=np.zeros((8, 200)), where=totals > 0)
    return PreparedRecord(
        exit_graph=build_exit_graph(topology, stp),
        inflow_graph=build_inflow_graph(topology, stp),
        z=context_vector(sig, record.tmc, drv),
        ext_target=norm.ext.normalize(record.ext[ext_ids].astype(float)),
        inf_target=norm.inf.normalize(record.inf[inf_ids].astype(float)),
        v_ql=normalize_mts(
            build_mts(aggregate_to_phases(record.ext, pm.exit), stp_phase, sig, drv, stp_total)
        ),
        v_tt=normalize_mts(
            build_mts(aggregate_to_phases(record.inf, pm.inflow), stp_phase, sig, drv, stp_total)
        ),
        ql_target=norm.ql.normalize(record.ql.astype(float)),
        tt_probs=tt_probs,
    )


def _mean_sq(diff) -> T.Tensor:
    n = 1
    for d in diff.shape:
        n *= d
    return T.mul(T.total(T.mul(diff, diff)), 1.0 / n)


def task_losses(params, prep: PreparedRecord) -> dict:
    """All four per-record losses (tensors, normalized scales)."""
    ext_out = gat_forward(params.ext, prep.exit_graph, prep.z)
    inf_out = gat_forward(params.inf, prep.inflow_graph, prep.z)
    ql_out = cnn_forward(params.ql, prep.v_ql, relu_head=True)
    tt_logits = cnn_forward(params.tt, prep.v_tt, relu_head=False)
    log_q = T.log_softmax(tt_logits, axis=1)
    return {
        "ext": _mean_sq(T.sub(ext_out, T.Tensor(prep.ext_target))),
        "inf": _mean_sq(T.sub(inf_out, T.Tensor(prep.inf_target))),
        "ql": _mean_sq(T.sub(ql_out, T.Tensor(prep.ql_target))),
        # soft-target cross-entropy, averaged over all 8 phases; phases with
        # an empty histogram have an all-zero target row and contribute 0
        "tt": T.mul(T.total(T.mul(T.Tensor(prep.tt_probs), log_q)), -1.0 / 8.0),
    }


def total_loss(losses: dict) -> T.Tensor:
    out = losses["ext"]
    for name in ("inf", "ql", "tt"):
        out = T.add(out, losses[name])
    return out


def eval_losses(params: ModelParams, prepared) -> dict:
    """Mean per-task losses over a prepared split (plain floats)."""
    sums = dict.fromkeys(TASKS, 0.0)
    for prep in prepared:
        for name, t in task_losses(params, prep).items():
            sums[name] += float(t.data)
    n = max(len(prepared), 1)
    out = {name: s / n for name, s in sums.items()}
    out["total"] = sum(out[name] for name in TASKS)
    return out


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class TrainConfig:
    epochs: int = 100
    lr: float = 0.05
    momentum: float = 0.9
    weight_decay_grid: tuple = (0.0, 1e-4, 1e-3)
    batch_size: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigurationError("epochs must be >= 1")
        if self.lr <= 0:
            raise ConfigurationError("lr must be > 0")
        if not 0 <= self.momentum < 1:
            raise ConfigurationError("momentum must be in [0, 1)")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if not self.weight_decay_grid or any(wd < 0 for wd in self.weight_decay_grid):
            raise ConfigurationError("weight_decay_grid needs non-negative entries")

    def to_json_obj(self) -> dict:
        return {
            "epochs": self.epochs,
            "lr": self.lr,
            "momentum": self.momentum,
            "weight_decay_grid": list(self.weight_decay_grid),
            "batch_size": self.batch_size,
            "seed": self.seed,
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "TrainConfig":
        valid = {f.name for f in fields(cls)}
        unknown = set(obj) - valid
        if unknown:
            raise ConfigurationError(f"unknown train config keys {sorted(unknown)}")
        kwargs = dict(obj)
        if "weight_decay_grid" in kwargs:
            kwargs["weight_decay_grid"] = tuple(kwargs["weight_decay_grid"])
        return cls(**kwargs)


@dataclass
class GridPointReport:
    weight_decay: float
    status: str                      # "ok" | "diverged"
    best_epoch: int                  # 1-based
    best_val_total: float
    history: list = field(default_factory=list)  # per-epoch {train: {...}, val: {...}}

    def to_json_obj(self) -> dict:
        return {
            "weight_decay": self.weight_decay,
            "status": self.status,
            "best_epoch": self.best_epoch,
            "best_val_total": self.best_val_total,
            "history": self.history,
        }


@dataclass
class TrainReport:
    chosen_weight_decay: float
    best_epoch: int
    best_val_total: float
    sizes: dict
    grid: list

    def to_json_obj(self) -> dict:
        return {
            "chosen_weight_decay": self.chosen_weight_decay,
            "best_epoch": self.best_epoch,
            "best_val_total": self.best_val_total,
            "sizes": self.sizes,
            "grid": [g.to_json_obj() for g in self.grid],
        }


def _wrap(params: ModelParams):
    """Mirror the parameter tree with tape-tracked tensors."""
    tape = T.GradientTape()

    def module(m):
        return type(m)(**{f.name: tape.param(getattr(m, f.name)) for f in fields(m)})

    wrapped = ModelParams(
        ext=module(params.ext), inf=module(params.inf), ql=module(params.ql), tt=module(params.tt)
    )
    return tape, wrapped, dict(wrapped.named())


def sgd_epoch(params: ModelParams, prepared, cfg: TrainConfig, weight_decay: float,
              velocity: dict, rng: np.random.Generator) -> dict:
    """One pass over the training records in shuffled mini-batches;
    updates params and velocity in place, returns mean per-task losses."""
    order = rng.permutation(len(prepared))
    sums = dict.fromkeys(TASKS, 0.0)
    for start in range(0, len(order), cfg.batch_size):
        batch = [prepared[i] for i in order[start : start + cfg.batch_size]]
        tape, wrapped, handles = _wrap(params)
        batch_total = None
        for prep in batch:
            losses = task_losses(wrapped, prep)
            for name in TASKS:
                sums[name] += float(losses[name].data)
            rec_total = total_loss(losses)
            batch_total = rec_total if batch_total is None else T.add(batch_total, rec_total)
        tape.backward(T.mul(batch_total, 1.0 / len(batch)))
        for name, arr in params.named():
            g = tape.grad(handles[name])
            if weight_decay:
                g = g + weight_decay * arr
            v = velocity[name]
            v *= cfg.momentum
            v += g
            params.set(name, arr - cfg.lr * v)
    n = max(len(prepared), 1)
    out = {name: s / n for name, s in sums.items()}
    out["total"] = sum(out[name] for name in TASKS)
    return out


def train(records, topology: IntersectionTopology, cfg: TrainConfig):
    """Fit the model; returns (params, norm, report).

    Normalization statistics are fitted on the training split only.
    """
    if len(records) < 3:
        raise ContractError("training needs at least 3 records to split")
    train_recs, val_recs, _ = split_records(records, cfg.seed)
    norm = NormalizationSpec.fit(train_recs)
    train_prep = [prepare_record(r, topology, norm) for r in train_recs]
    val_prep = [prepare_record(r, topology, norm) for r in val_recs]

    grid_reports = []
    best = None  # (val_total, grid_idx, params_snapshot, epoch)
    for grid_idx, wd in enumerate(cfg.weight_decay_grid):
        params = ModelParams.init(cfg.seed)
        velocity = {name: np.zeros_like(arr) for name, arr in params.named()}
        rng = np.random.default_rng((cfg.seed, grid_idx))
        report = GridPointReport(weight_decay=wd, status="ok", best_epoch=0, best_val_total=np.inf)
        for epoch in range(1, cfg.epochs + 1):
            train_stats = sgd_epoch(params, train_prep, cfg, wd, velocity, rng)
            val_stats = eval_losses(params, val_prep) if val_prep else train_stats
            report.history.append({"train": train_stats, "val": val_stats})
            if any(
                not np.isfinite(s["total"]) or s["total"] > DIVERGENCE_LIMIT
                for s in (train_stats, val_stats)
            ):
                report.status = "diverged"
                break
            if val_stats["total"] < report.best_val_total:
                report.best_val_total = val_stats["total"]
                report.best_epoch = epoch
                if best is None or val_stats["total"] < best[0]:
                    best = (val_stats["total"], grid_idx, params.copy(), epoch)
        grid_reports.append(report)

    if best is None:
        raise ContractError("every weight-decay grid point diverged")
    val_total, grid_idx, best_params, best_epoch = best
    report = TrainReport(
        chosen_weight_decay=cfg.weight_decay_grid[grid_idx],
        best_epoch=best_epoch,
        best_val_total=val_total,
        sizes={
            "train": len(train_recs),
            "val": len(val_recs),
            "test": len(records) - len(train_recs) - len(val_recs),
        },
        grid=grid_reports,
    )
    return best_params, norm, report
