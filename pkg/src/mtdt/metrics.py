"""Evaluation metrics and the report the eval command produces.

Errors are reported as MAE, RMSE, NRMSE (range-normalized; omitted when
the true values are constant) and the 95% confidence band 1.96 * RMSE.
Waveform counts re-aggregate across coarser buckets by summing, queue
lengths by taking the maximum; travel-time histograms are compared over
the bins up to each true percentile cutoff.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, ShapeError
from .model import ModelParams, NormalizationSpec, mtdt_forward
from .sim.topology import IntersectionTopology

CI_FACTOR = 1.96
AGG_FACTORS = (1, 2, 3, 4)          # 5 s, 10 s, 15 s, 20 s buckets
TT_PERCENTILES = (60, 75, 85, 90)

QUEUE_PARTITIONS = (
    ("L1", 0.0, 40.0),
    ("L2", 40.0, 80.0),
    ("M1", 80.0, 120.0),
    ("M2", 120.0, 160.0),
    ("H1", 160.0, 200.0),
    ("H2", 200.0, float("inf")),
)

GREEN_PARTITIONS = (
    ("low", 0.45, 0.60),
    ("medium", 0.60, 0.75),
    ("high", 0.75, 0.90),
)


def mae(pred: np.ndarray, true: np.ndarray) -> float:
    return float(np.abs(np.asarray(pred) - np.asarray(true)).mean())


def rmse(pred: np.ndarray, true: np.ndarray) -> float:
    diff = np.asarray(pred, dtype=float) - np.asarray(true, dtype=float)
    return float(np.sqrt((diff * diff).mean()))


def nrmse(pred: np.ndarray, true: np.ndarray) -> float | None:
    """RMSE divided by the true value range; None when the range is zero."""
    true = np.asarray(true, dtype=float)
    span = float(true.max() - true.min())
    if span == 0.0:
        return None
    return rmse(pred, true) / span


def ci95(pred: np.ndarray, true: np.ndarray) -> float:
    return CI_FACTOR * rmse(pred, true)


@dataclass
class ErrorStats:
    mae: float
    rmse: float
    ci95: float
    nrmse: float | None

    @classmethod
    def from_arrays(cls, pred: np.ndarray, true: np.ndarray) -> "ErrorStats":
        pred, true = np.asarray(pred, dtype=float), np.asarray(true, dtype=float)
        if pred.shape != true.shape:
            raise ShapeError(f"stats need matching shapes, got {pred.shape} vs {true.shape}")
        if pred.size == 0:
            raise ContractError("stats need at least one value")
        return cls(mae=mae(pred, true), rmse=rmse(pred, true), ci95=ci95(pred, true), nrmse=nrmse(pred, true))

    def to_json_obj(self) -> dict:
        return {"mae": self.mae, "rmse": self.rmse, "ci95": self.ci95, "nrmse": self.nrmse}


def reaggregate(series: np.ndarray, factor: int, mode: str) -> np.ndarray:
    """Merge groups of ``factor`` adjacent buckets along the last axis;
    counts are summed, queue maxima are taken.  A remainder that does not
    fill a whole group is dropped (factor 3 over 80 buckets gives 26)."""
    if factor < 1:
        raise ContractError("aggregation factor must be >= 1")
    if mode not in ("sum", "max"):
        raise ContractError(f"unknown aggregation mode {mode!r}")
    series = np.asarray(series, dtype=float)
    groups = series.shape[-1] // factor
    if groups == 0:
        raise ContractError("aggregation factor exceeds the series length")
    trimmed = series[..., : groups * factor].reshape(*series.shape[:-1], groups, factor)
    return trimmed.sum(axis=-1) if mode == "sum" else trimmed.max(axis=-1)


def percentile_cutoff(hist: np.ndarray, q: float) -> int | None:
    """Smallest bin index whose cumulative count reaches q% of the total."""
    hist = np.asarray(hist, dtype=float)
    total = hist.sum()
    if total <= 0:
        return None
    return int(np.searchsorted(np.cumsum(hist), q / 100.0 * total))


def percentile_error_pairs(pred: np.ndarray, true: np.ndarray, q: float):
    """Per phase: (pred, true) bin values up to the true q-th percentile
    cutoff, concatenated; empty phases are skipped."""
    preds, trues = [], []
    for phase in range(true.shape[0]):
        cut = percentile_cutoff(true[phase], q)
        if cut is None:
            continue
        preds.append(pred[phase, : cut + 1])
        trues.append(true[phase, : cut + 1])
    if not preds:
        return np.empty(0), np.empty(0)
    return np.concatenate(preds), np.concatenate(trues)


def green_fraction(sig: np.ndarray) -> float:
    """Share of buckets during which either coordinated through phase
    (2 or 6) shows green."""
    sig = np.asarray(sig)
    return float(np.logical_or(sig[1], sig[5]).mean())


def partition_by_max_queue(records) -> dict:
    out = {label: [] for label, _, _ in QUEUE_PARTITIONS}
    for idx, rec in enumerate(records):
        peak = float(rec.ql.max())
        for label, lo, hi in QUEUE_PARTITIONS:
            if lo <= peak < hi:
                out[label].append(idx)
                break
    return out


def partition_by_green_time(records) -> tuple[dict, list]:
    """Returns ({label: indices}, excluded indices)."""
    out = {label: [] for label, _, _ in GREEN_PARTITIONS}
    excluded = []
    for idx, rec in enumerate(records):
        frac = green_fraction(rec.sig)
        for label, lo, hi in GREEN_PARTITIONS:
            # the top band includes its upper edge
            if lo <= frac < hi or (label == "high" and frac == hi):
                out[label].append(idx)
                break
        else:
            excluded.append(idx)
    return out, excluded


# ---------------------------------------------------------------------------
# report


@dataclass
class EvaluationReport:
    n_records: int
    variant: str
    waveforms: dict = field(default_factory=dict)   # task -> factor -> ErrorStats
    queues: dict = field(default_factory=dict)      # factor -> ErrorStats
    travel_time: dict = field(default_factory=dict) # percentile -> ErrorStats
    queue_partitions: dict = field(default_factory=dict)
    green_partitions: dict = field(default_factory=dict)
    green_excluded: int = 0

    def to_json_obj(self) -> dict:
        def stats(obj):
            return obj.to_json_obj() if obj is not None else None

        return {
            "n_records": self.n_records,
            "variant": self.variant,
            "waveforms": {
                task: {str(f): stats(s) for f, s in by_factor.items()}
                for task, by_factor in self.waveforms.items()
            },
            "queues": {str(f): stats(s) for f, s in self.queues.items()},
            "travel_time": {str(q): stats(s) for q, s in self.travel_time.items()},
            "queue_partitions": {
                label: {"count": entry["count"], "stats": stats(entry["stats"])}
                for label, entry in self.queue_partitions.items()
            },
            "green_partitions": {
                label: {
                    "count": entry["count"],
                    **{t: stats(entry[t]) for t in ("ext", "inf", "ql")},
                }
                for label, entry in self.green_partitions.items()
            },
            "green_excluded": self.green_excluded,
        }

    def write_csv(self, path) -> None:
        rows = [("section", "label", "metric", "value")]

        def emit(section, label, s):
            if s is None:
                return
            for metric, value in s.to_json_obj().items():
                rows.append((section, label, metric, "" if value is None else f"{value:.6f}"))

        for task, by_factor in self.waveforms.items():
            for f, s in by_factor.items():
                emit(f"waveform/{task}", f"{5 * f}s", s)
        for f, s in self.queues.items():
            emit("queue", f"{5 * f}s", s)
        for q, s in self.travel_time.items():
            emit("travel-time", f"p{q}", s)
        for label, entry in self.queue_partitions.items():
            rows.append(("queue-partition", label, "count", str(entry["count"])))
            emit("queue-partition", label, entry["stats"])
        for label, entry in self.green_partitions.items():
            rows.append(("green-partition", label, "count", str(entry["count"])))
            for t in ("ext", "inf", "ql"):
                emit(f"green-partition/{t}", label, entry[t])
        rows.append(("green-partition", "excluded", "count", str(self.green_excluded)))
        with open(path, "w", newline="") as fh:
            csv.writer(fh).writerows(rows)


def _pooled(stats_pairs):
    preds = [p for p, _ in stats_pairs]
    trues = [t for _, t in stats_pairs]
    if not preds:
        return None
    return ErrorStats.from_arrays(np.concatenate([p.ravel() for p in preds]),
                                  np.concatenate([t.ravel() for t in trues]))


def evaluate(
    records,
    topology: IntersectionTopology,
    params: ModelParams,
    norm: NormalizationSpec,
    *,
    use_true_aggregates: bool = False,
) -> EvaluationReport:
    """Run inference over the records and score every task."""
    if not records:
        raise ContractError("evaluation needs at least one record")
    predictions = []
    for rec in records:
        predictions.append(
            mtdt_forward(
                topology, params, norm,
                rec.sig.astype(float), rec.tmc, rec.drv.astype(float), rec.stp.astype(float),
                true_ext=rec.ext.astype(float), true_inf=rec.inf.astype(float),
                use_true_aggregates=use_true_aggregates,
            )
        )

    report = EvaluationReport(
        n_records=len(records),
        variant="true-aggregates" if use_true_aggregates else "chained",
    )
    for task in ("ext", "inf"):
        report.waveforms[task] = {
            f: _pooled([
                (reaggregate(pred[task], f, "sum"), reaggregate(getattr(rec, task), f, "sum"))
                for pred, rec in zip(predictions, records)
            ])
            for f in AGG_FACTORS
        }
    report.queues = {
        f: _pooled([
            (reaggregate(pred["ql"], f, "max"), reaggregate(rec.ql, f, "max"))
            for pred, rec in zip(predictions, records)
        ])
        for f in AGG_FACTORS
    }
    for q in TT_PERCENTILES:
        pairs = [percentile_error_pairs(pred["tt"], rec.tt, q) for pred, rec in zip(predictions, records)]
        pairs = [(p, t) for p, t in pairs if p.size]
        report.travel_time[q] = _pooled(pairs)

    by_queue = partition_by_max_queue(records)
    for label, idxs in by_queue.items():
        report.queue_partitions[label] = {
            "count": len(idxs),
            "stats": _pooled([(predictions[i]["ql"], records[i].ql) for i in idxs]),
        }
    by_green, excluded = partition_by_green_time(records)
    for label, idxs in by_green.items():
        report.green_partitions[label] = {
            "count": len(idxs),
            "ext": _pooled([(predictions[i]["ext"], records[i].ext) for i in idxs]),
            "inf": _pooled([(predictions[i]["inf"], records[i].inf) for i in idxs]),
            "ql": _pooled([(predictions[i]["ql"], records[i].ql) for i in idxs]),
        }
    report.green_excluded = len(excluded)
    return report
