"""Metric tests, checked against hand-computed values and brute-force
loops over partitions and percentile cutoffs."""

import csv

import numpy as np
import pytest

from mtdt.errors import ContractError
from mtdt.metrics import (
    ErrorStats,
    ci95,
    evaluate,
    green_fraction,
    mae,
    nrmse,
    partition_by_green_time,
    partition_by_max_queue,
    percentile_cutoff,
    percentile_error_pairs,
    reaggregate,
    rmse,
)
from mtdt.model import ModelParams, NormalizationSpec
from mtdt.sim.dataset import ScenarioConfig, generate_dataset
from mtdt.sim.topology import four_way_topology
from mtdt.training import TrainConfig, split_records, train

TOPO = four_way_topology()


# ---------------------------------------------------------------------------
# basic stats


def test_point_errors_hand_example():
    pred = np.array([1.0, 2.0, 5.0])
    true = np.array([2.0, 2.0, 1.0])
    assert mae(pred, true) == pytest.approx((1 + 0 + 4) / 3)
    assert rmse(pred, true) == pytest.approx(np.sqrt((1 + 0 + 16) / 3))
    assert nrmse(pred, true) == pytest.approx(rmse(pred, true) / 1.0)
    assert ci95(pred, true) == pytest.approx(1.96 * rmse(pred, true))


@pytest.mark.parametrize(
    "r, want",
    [(0.2995, 0.5870), (0.3189, 0.6250), (0.3456, 0.6773)],
)
def test_ci95_factor(r, want):
    # the confidence band is 1.96x the RMSE (printed at 4 decimals,
    # truncated, so allow one unit in the last place)
    assert abs(1.96 * r - want) < 1e-4


def test_nrmse_degenerate_range_is_none():
    assert nrmse(np.array([1.0, 2.0]), np.array([3.0, 3.0])) is None
    s = ErrorStats.from_arrays(np.array([1.0, 2.0]), np.array([3.0, 3.0]))
    assert s.nrmse is None and s.mae == 1.5


def test_error_stats_validation():
    with pytest.raises(ContractError):
        ErrorStats.from_arrays(np.empty(0), np.empty(0))


# ---------------------------------------------------------------------------
# re-aggregation


def test_reaggregate_sum_and_max():
    row = np.arange(80.0).reshape(1, 80)
    summed = reaggregate(row, 2, "sum")
    assert summed.shape == (1, 40)
    assert summed[0, 0] == 1.0 and summed[0, 39] == 78.0 + 79.0
    maxed = reaggregate(row, 4, "max")
    assert maxed.shape == (1, 20)
    assert maxed[0, 0] == 3.0 and maxed[0, 19] == 79.0


def test_reaggregate_factor_three_drops_remainder():
    row = np.ones((8, 80))
    out = reaggregate(row, 3, "sum")
    assert out.shape == (8, 26)
    assert (out == 3.0).all()  # the last two buckets never show up
    assert reaggregate(row, 1, "sum").shape == (8, 80)


def test_reaggregate_bad_inputs():
    with pytest.raises(ContractError):
        reaggregate(np.ones((2, 10)), 0, "sum")
    with pytest.raises(ContractError):
        reaggregate(np.ones((2, 10)), 11, "sum")
    with pytest.raises(ContractError):
        reaggregate(np.ones((2, 10)), 2, "median")


@pytest.mark.parametrize("seed", range(5))
def test_coarser_buckets_never_reduce_count_error(seed):
    # summing before differencing can only cancel error, never add it;
    # the MAE of the 5-s series is computed on more, smaller pieces
    rng = np.random.default_rng(seed)
    true = rng.integers(0, 9, (16, 80)).astype(float)
    pred = np.maximum(true + rng.normal(0, 1, true.shape), 0)
    fine = np.abs(pred - true).sum()
    for f in (2, 4):
        coarse = np.abs(reaggregate(pred, f, "sum") - reaggregate(true, f, "sum")).sum()
        assert coarse <= fine + 1e-9


# ---------------------------------------------------------------------------
# travel-time percentiles


def test_percentile_cutoff_examples():
    hist = np.zeros(200)
    hist[[2, 4, 9]] = [5, 3, 2]  # cumulative 5, 8, 10
    assert percentile_cutoff(hist, 50) == 2
    assert percentile_cutoff(hist, 60) == 4
    assert percentile_cutoff(hist, 80) == 4
    assert percentile_cutoff(hist, 90) == 9
    assert percentile_cutoff(np.zeros(200), 60) is None


def test_percentile_cutoff_single_bin():
    hist = np.zeros(200)
    hist[9] = 4  # e.g. all trips took ~47 s
    for q in (60, 75, 85, 90):
        assert percentile_cutoff(hist, q) == 9


def test_percentile_pairs_match_bruteforce():
    rng = np.random.default_rng(8)
    true = rng.integers(0, 6, (8, 200)).astype(float)
    true[3] = 0.0  # an empty phase is skipped
    pred = rng.random((8, 200))
    p, t = percentile_error_pairs(pred, true, 75)
    want_p, want_t = [], []
    for phase in range(8):
        total = true[phase].sum()
        if total == 0:
            continue
        c = 0.0
        for b in range(200):
            c += true[phase, b]
            if c >= 0.75 * total:
                break
        want_p.extend(pred[phase, : b + 1])
        want_t.extend(true[phase, : b + 1])
    np.testing.assert_array_equal(p, np.array(want_p))
    np.testing.assert_array_equal(t, np.array(want_t))


def test_perfect_prediction_scores_zero():
    rng = np.random.default_rng(9)
    true = rng.integers(0, 6, (8, 200)).astype(float)
    p, t = percentile_error_pairs(true, true, 85)
    assert mae(p, t) == 0.0 and rmse(p, t) == 0.0


# ---------------------------------------------------------------------------
# partitions


class FakeRecord:
    def __init__(self, peak=None, frac=None):
        self.ql = np.zeros((8, 80))
        if peak is not None:
            self.ql[2, 11] = peak
        self.sig = np.zeros((8, 80), dtype=int)
        if frac is not None:
            self.sig[1, : int(round(frac * 80))] = 1


def test_queue_partition_boundaries_exhaustive():
    peaks = [0, 39.9, 40, 79.9, 80, 119.9, 120, 159.9, 160, 199.9, 200, 377, 1200]
    recs = [FakeRecord(peak=p) for p in peaks]
    parts = partition_by_max_queue(recs)
    assert parts["L1"] == [0, 1]
    assert parts["L2"] == [2, 3]
    assert parts["M1"] == [4, 5]
    assert parts["M2"] == [6, 7]
    assert parts["H1"] == [8, 9]
    assert parts["H2"] == [10, 11, 12]
    assert sum(len(v) for v in parts.values()) == len(recs)


def test_green_fraction_uses_rows_of_phases_2_and_6():
    sig = np.zeros((8, 80), dtype=int)
    sig[1, :20] = 1          # phase 2
    sig[5, 10:40] = 1        # phase 6 overlaps half of it
    assert green_fraction(sig) == pytest.approx(40 / 80)
    sig[0] = 1               # other phases don't matter
    sig[7] = 1
    assert green_fraction(sig) == pytest.approx(40 / 80)


def test_green_partition_bands_and_exclusion():
    # all fractions are exact multiples of 1/80 so the rendered rows hit
    # the intended values
    fracs = [0.10, 0.4375, 0.45, 0.5875, 0.60, 0.7375, 0.75, 0.8875, 0.90, 0.95]
    recs = [FakeRecord(frac=f) for f in fracs]
    parts, excluded = partition_by_green_time(recs)
    assert parts["low"] == [2, 3]
    assert parts["medium"] == [4, 5]
    assert parts["high"] == [6, 7, 8]  # the top band keeps its upper edge
    assert excluded == [0, 1, 9]


# ---------------------------------------------------------------------------
# end-to-end evaluation


def test_evaluate_report_structure(tmp_path):
    records = generate_dataset(TOPO, ScenarioConfig(duration=700, warmup=300), n=8, seed=31)
    cfg = TrainConfig(epochs=2, weight_decay_grid=(0.0,), seed=3)
    params, norm, _ = train(records, TOPO, cfg)
    _, _, test_recs = split_records(records, cfg.seed)
    report = evaluate(test_recs, TOPO, params, norm)
    obj = report.to_json_obj()
    assert obj["n_records"] == len(test_recs)
    assert obj["variant"] == "chained"
    assert set(obj["waveforms"]) == {"ext", "inf"}
    assert set(obj["waveforms"]["ext"]) == {"1", "2", "3", "4"}
    assert set(obj["queues"]) == {"1", "2", "3", "4"}
    assert set(obj["travel_time"]) == {"60", "75", "85", "90"}
    assert set(obj["queue_partitions"]) == {"L1", "L2", "M1", "M2", "H1", "H2"}
    assert set(obj["green_partitions"]) == {"low", "medium", "high"}
    counted = sum(e["count"] for e in obj["green_partitions"].values()) + obj["green_excluded"]
    assert counted == len(test_recs)
    for by_factor in obj["waveforms"].values():
        for stats in by_factor.values():
            assert stats["rmse"] >= 0 and stats["ci95"] == pytest.approx(1.96 * stats["rmse"])

    out = tmp_path / "report.csv"
    report.write_csv(out)
    with open(out) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["section", "label", "metric", "value"]
    assert any(r[0] == "travel-time" and r[1] == "p85" for r in rows)


def test_true_aggregate_variant_ignores_imputation_params():
    records = generate_dataset(TOPO, ScenarioConfig(duration=700, warmup=300), n=4, seed=32)
    norm = NormalizationSpec.fit(records)
    a = ModelParams.init(0)
    b = a.copy()
    b.ext.B = b.ext.B + 2.0
    ra = evaluate(records, TOPO, a, norm, use_true_aggregates=True)
    rb = evaluate(records, TOPO, b, norm, use_true_aggregates=True)
    assert ra.variant == "true-aggregates"
    assert ra.to_json_obj()["queues"] == rb.to_json_obj()["queues"]
    assert ra.to_json_obj()["travel_time"] == rb.to_json_obj()["travel_time"]
    assert ra.to_json_obj()["waveforms"] != rb.to_json_obj()["waveforms"]


def test_evaluate_requires_records():
    with pytest.raises(ContractError):
        evaluate([], TOPO, ModelParams.init(0), NormalizationSpec.fit(
            generate_dataset(TOPO, ScenarioConfig(duration=700, warmup=300), n=1, seed=33)))
