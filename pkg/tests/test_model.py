"""Model tests.

The attention module is checked against a loop-based oracle (explicit
per-target softmax, no segment ops), and both module kinds are checked
against central finite differences on sampled parameter coordinates.
"""

from dataclasses import fields

import numpy as np
import pytest

from mtdt import tensor as T
from mtdt.errors import ConfigurationError, ContractError
from mtdt.graphs import build_exit_graph, build_inflow_graph, context_vector
from mtdt.model import (
    CNN_FLAT,
    CnnParams,
    GatParams,
    Log1pStats,
    MinMaxStats,
    ModelParams,
    NormalizationSpec,
    aggregate_to_phases,
    build_mts,
    cnn_forward,
    gat_forward,
    load_checkpoint,
    mtdt_forward,
    normalize_mts,
    save_checkpoint,
)
from mtdt.sim.topology import four_way_topology

TOPO = four_way_topology()


def scenario_inputs(seed=0):
    rng = np.random.default_rng(seed)
    stp = rng.integers(0, 9, (48, 80)).astype(float)
    sig = rng.integers(0, 2, (8, 80)).astype(float)
    tmc = rng.random((35, 35))
    tmc /= tmc.sum(axis=1, keepdims=True)
    drv = rng.random(9) * 30
    return stp, sig, tmc, drv


def default_norm():
    return NormalizationSpec(
        ext=MinMaxStats(0.0, 8.0),
        inf=MinMaxStats(0.0, 8.0),
        tt=MinMaxStats(0.0, 30.0),
        ql=Log1pStats(400.0),
    )


# ---------------------------------------------------------------------------
# oracle


def gat_oracle(p, graph, z):
    """Loop-based attention module: per-target stable softmax, no segments."""
    zn = z.copy()
    zn[-9:] /= 30.0
    x = graph.x / 8.0
    h = np.maximum(x @ p.B + p.b, 0.0)
    zp = np.maximum(zn @ p.Wz + p.bz, 0.0)
    out = np.zeros((len(graph.target_ids), 80))
    for k, tgt in enumerate(graph.target_ids):
        incoming = [int(s) for s, d in graph.edges if d == tgt]
        logits = np.array([max(float((np.concatenate([h[s], h[tgt]]) @ p.a)[0]), 0.0) for s in incoming])
        w = np.exp(logits - logits.max())
        w /= w.sum()
        m = np.zeros(64)
        for wi, s in zip(w, incoming):
            m += wi * (h[s] + zp)
        out[k] = np.maximum(m @ p.Wo + p.bo, 0.0)
    return out


# ---------------------------------------------------------------------------
# parameters


def test_init_shapes_and_determinism():
    p = ModelParams.init(3)
    named = dict(p.named())
    assert len(named) == 30
    assert named["ext.B"].shape == (80, 64)
    assert named["ext.a"].shape == (128, 1)
    assert named["ext.Wz"].shape == (1874, 64)
    assert named["ql.c1"].shape == (16, 7, 5)
    assert named["ql.w"].shape == (CNN_FLAT, 80)
    assert named["tt.w"].shape == (CNN_FLAT, 200)
    q = ModelParams.init(3)
    assert all(np.array_equal(a, dict(q.named())[n]) for n, a in p.named())
    r = ModelParams.init(4)
    assert not np.array_equal(named["ext.B"], dict(r.named())["ext.B"])


def test_copy_is_deep():
    p = ModelParams.init(3)
    q = p.copy()
    q.ext.B[0, 0] += 1.0
    assert p.ext.B[0, 0] != q.ext.B[0, 0]


# ---------------------------------------------------------------------------
# attention module


@pytest.mark.parametrize("seed", range(5))
def test_gat_matches_loop_oracle(seed):
    stp, sig, tmc, drv = scenario_inputs(seed)
    z = context_vector(sig, tmc, drv)
    p = ModelParams.init(seed).ext
    for graph in (build_exit_graph(TOPO, stp), build_inflow_graph(TOPO, stp)):
        got = gat_forward(p, graph, z).data
        want = gat_oracle(p, graph, z)
        np.testing.assert_allclose(got, want, atol=1e-12)


def test_gat_zero_parameters_give_zero_output():
    stp, sig, tmc, drv = scenario_inputs()
    z = context_vector(sig, tmc, drv)
    p = ModelParams.init(0).ext
    zero = GatParams(**{f.name: np.zeros_like(getattr(p, f.name)) for f in fields(GatParams)})
    out = gat_forward(zero, build_exit_graph(TOPO, stp), z).data
    assert not out.any()


def test_gat_output_nonnegative():
    stp, sig, tmc, drv = scenario_inputs(1)
    z = context_vector(sig, tmc, drv)
    out = gat_forward(ModelParams.init(1).ext, build_inflow_graph(TOPO, stp), z).data
    assert out.shape == (12, 80)
    assert out.min() >= 0.0


# ---------------------------------------------------------------------------
# series input assembly


def test_aggregate_to_phases_sums_member_rows():
    lanes = np.arange(12.0).reshape(4, 3)
    members = [[0, 2], [], [1], [], [], [], [], [3]]
    out = aggregate_to_phases(lanes, members)
    assert out.shape == (8, 3)
    np.testing.assert_array_equal(out[0], lanes[0] + lanes[2])
    assert not out[1].any()
    np.testing.assert_array_equal(out[2], lanes[1])
    np.testing.assert_array_equal(out[7], lanes[3])


def test_mts_channels():
    stp, sig, tmc, drv = scenario_inputs(2)
    pm = TOPO.phase_map()
    primary = aggregate_to_phases(stp[:16], pm.exit)
    stp_phase = aggregate_to_phases(stp, pm.stop)
    total = stp.sum(axis=0)
    v = build_mts(primary, stp_phase, sig, drv, total)
    assert v.shape == (8, 7, 80)
    np.testing.assert_array_equal(v[:, 0], primary)
    np.testing.assert_array_equal(v[:, 1], stp_phase)
    np.testing.assert_array_equal(v[:, 2], sig)
    # the three driving channels are constant over time and hold the raw
    # values of accel, lc_cooperative and min_gap
    for k, j in enumerate((0, 6, 3)):
        assert (v[:, 3 + k] == drv[j]).all()
    for phase in range(8):
        np.testing.assert_array_equal(v[phase, 6], total)


def test_normalize_mts_scales_and_preserves_input():
    stp, sig, tmc, drv = scenario_inputs(3)
    pm = TOPO.phase_map()
    v = build_mts(
        aggregate_to_phases(stp[:16], pm.exit),
        aggregate_to_phases(stp, pm.stop),
        sig,
        drv,
        stp.sum(axis=0),
    )
    before = v.copy()
    n = normalize_mts(v)
    np.testing.assert_array_equal(v, before)
    np.testing.assert_allclose(n[:, 0], v[:, 0] / 24.0)
    np.testing.assert_allclose(n[:, 1], v[:, 1] / 24.0)
    np.testing.assert_array_equal(n[:, 2], v[:, 2])
    np.testing.assert_allclose(n[:, 3:6], v[:, 3:6] / 30.0)
    np.testing.assert_allclose(n[:, 6], v[:, 6] / 384.0)


# ---------------------------------------------------------------------------
# series modules


def test_cnn_shapes_and_relu_head():
    rng = np.random.default_rng(5)
    v = rng.normal(size=(8, 7, 80))
    p = ModelParams.init(5)
    ql = cnn_forward(p.ql, v, relu_head=True).data
    tt = cnn_forward(p.tt, v, relu_head=False).data
    assert ql.shape == (8, 80) and ql.min() >= 0.0
    assert tt.shape == (8, 200) and tt.min() < 0.0


def test_cnn_weights_shared_across_phases():
    rng = np.random.default_rng(6)
    v = rng.normal(size=(8, 7, 80))
    p = ModelParams.init(6).ql
    perm = rng.permutation(8)
    out = cnn_forward(p, v, relu_head=True).data
    out_perm = cnn_forward(p, v[perm], relu_head=True).data
    np.testing.assert_array_equal(out_perm, out[perm])


# ---------------------------------------------------------------------------
# gradients through whole modules


def tape_wrap(module):
    tape = T.GradientTape()
    wrapped = type(module)(**{f.name: tape.param(getattr(module, f.name)) for f in fields(module)})
    return tape, wrapped


def randomized(module, seed):
    """Jitter every parameter: freshly initialized biases are exactly zero,
    which parks relu preactivations of the zero-feature target rows right on
    the kink where finite differences are meaningless."""
    rng = np.random.default_rng(seed)
    return type(module)(
        **{
            f.name: getattr(module, f.name) + rng.normal(0.0, 0.05, getattr(module, f.name).shape)
            for f in fields(module)
        }
    )


def fd_check_module(module, run, coords_per_param=3, seed=0, h=1e-5, rtol=1e-4):
    """Compare tape gradients against central differences on sampled
    coordinates of every parameter.  ``run(module) -> scalar float/Tensor``."""
    rng = np.random.default_rng(seed)
    tape, wrapped = tape_wrap(module)
    loss = run(wrapped)
    tape.backward(loss)
    for f in fields(module):
        arr = getattr(module, f.name)
        grad = tape.grad(getattr(wrapped, f.name))
        flat_idx = rng.choice(arr.size, size=min(coords_per_param, arr.size), replace=False)
        for fi in flat_idx:
            idx = np.unravel_index(fi, arr.shape)
            bumped = type(module)(**{g.name: getattr(module, g.name) for g in fields(module)})
            plus = arr.copy()
            plus[idx] += h
            setattr(bumped, f.name, plus)
            up = float(run(bumped).data)
            minus = arr.copy()
            minus[idx] -= h
            setattr(bumped, f.name, minus)
            down = float(run(bumped).data)
            numeric = (up - down) / (2 * h)
            analytic = float(grad[idx])
            tol = rtol * max(abs(numeric), abs(analytic), 1e-3)
            assert abs(numeric - analytic) <= tol, (f.name, idx, numeric, analytic)


@pytest.mark.parametrize("seed", range(3))
def test_gat_gradients_match_finite_differences(seed):
    stp, sig, tmc, drv = scenario_inputs(seed)
    z = context_vector(sig, tmc, drv)
    graph = build_exit_graph(TOPO, stp)
    weights = np.random.default_rng(seed + 50).normal(size=(16, 80))

    def run(p):
        return T.total(T.mul(gat_forward(p, graph, z), T.Tensor(weights)))

    fd_check_module(randomized(ModelParams.init(seed).ext, seed + 100), run, seed=seed)


@pytest.mark.parametrize("seed", range(3))
def test_cnn_gradients_match_finite_differences(seed):
    rng = np.random.default_rng(seed + 20)
    v = rng.normal(size=(2, 7, 80))  # two phase slices keep the check fast
    weights = rng.normal(size=(2, 200))

    def run(p):
        return T.total(T.mul(cnn_forward(p, v, relu_head=False), T.Tensor(weights)))

    fd_check_module(randomized(ModelParams.init(seed).tt, seed + 100), run, seed=seed)


# ---------------------------------------------------------------------------
# full forward


def test_forward_shapes_and_ranges():
    stp, sig, tmc, drv = scenario_inputs(7)
    out = mtdt_forward(TOPO, ModelParams.init(7), default_norm(), sig, tmc, drv, stp)
    assert out["ext"].shape == (16, 80) and out["ext"].min() >= 0.0
    assert out["inf"].shape == (12, 80) and out["inf"].min() >= 0.0
    assert out["ql"].shape == (8, 80) and out["ql"].min() >= 0.0
    assert out["tt"].shape == (8, 200) and out["tt"].min() >= 0.0
    assert out["tt_logits"].shape == (8, 200)
    # predicted histograms are denormalized distributions: each row's
    # softmax sums to one before scaling
    probs = (out["tt"] - 0.0) / 30.0
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-9)


def test_chained_and_forced_paths_agree_when_truth_matches_prediction():
    # feeding the imputed waveforms back in as "ground truth" must give
    # bit-identical series outputs: both paths share the aggregation code
    stp, sig, tmc, drv = scenario_inputs(8)
    params = ModelParams.init(8)
    norm = default_norm()
    chained = mtdt_forward(TOPO, params, norm, sig, tmc, drv, stp)
    forced = mtdt_forward(
        TOPO, params, norm, sig, tmc, drv, stp,
        true_ext=chained["ext"], true_inf=chained["inf"], use_true_aggregates=True,
    )
    np.testing.assert_array_equal(forced["ql"], chained["ql"])
    np.testing.assert_array_equal(forced["tt"], chained["tt"])


def test_forced_aggregates_ignore_imputation_parameters():
    stp, sig, tmc, drv = scenario_inputs(9)
    params = ModelParams.init(9)
    norm = default_norm()
    true_ext = np.minimum(stp[:16], 8.0)
    true_inf = np.minimum(stp[:12], 8.0)
    a = mtdt_forward(TOPO, params, norm, sig, tmc, drv, stp,
                     true_ext=true_ext, true_inf=true_inf, use_true_aggregates=True)
    params.ext.B = params.ext.B + 1.0
    params.inf.Wo = params.inf.Wo - 0.5
    b = mtdt_forward(TOPO, params, norm, sig, tmc, drv, stp,
                     true_ext=true_ext, true_inf=true_inf, use_true_aggregates=True)
    np.testing.assert_array_equal(a["ql"], b["ql"])
    np.testing.assert_array_equal(a["tt"], b["tt"])
    assert not np.array_equal(a["ext"], b["ext"])


def test_forcing_requires_true_waveforms():
    stp, sig, tmc, drv = scenario_inputs(10)
    with pytest.raises(ContractError):
        mtdt_forward(TOPO, ModelParams.init(0), default_norm(), sig, tmc, drv, stp,
                     use_true_aggregates=True)


# ---------------------------------------------------------------------------
# normalization stats


def test_minmax_roundtrip_and_degenerate():
    s = MinMaxStats(2.0, 10.0)
    y = np.linspace(2, 10, 13)
    np.testing.assert_allclose(s.denormalize(s.normalize(y)), y, atol=1e-12)
    d = MinMaxStats(3.0, 3.0)
    assert d.degenerate
    assert not d.normalize(np.array([5.0])).any()
    assert d.denormalize(np.array([0.7]))[0] == 3.0


def test_log1p_roundtrip():
    s = Log1pStats(1200.0)
    y = np.array([0.0, 1.0, 7.0, 377.0, 1200.0])
    np.testing.assert_allclose(s.denormalize(s.normalize(y)), y, rtol=1e-12)
    assert Log1pStats(0.0).scale == 1.0


def test_fit_takes_global_extrema():
    topo = TOPO

    class Rec:
        def __init__(self, k):
            rng = np.random.default_rng(k)
            self.ext = rng.integers(0, 9, (16, 80))
            self.inf = rng.integers(0, 9, (12, 80))
            self.tt = rng.integers(0, 5 + k, (8, 200))
            self.ql = rng.integers(0, 300 + 100 * k, (8, 80))

    recs = [Rec(k) for k in range(4)]
    spec = NormalizationSpec.fit(recs)
    assert spec.ext.lo == min(r.ext.min() for r in recs)
    assert spec.ext.hi == max(r.ext.max() for r in recs)
    assert spec.tt.hi == max(r.tt.max() for r in recs)
    assert spec.ql.cap == max(r.ql.max() for r in recs)
    with pytest.raises(ContractError):
        NormalizationSpec.fit([])
    back = NormalizationSpec.from_json_obj(spec.to_json_obj())
    assert back == spec


# ---------------------------------------------------------------------------
# checkpoints


def test_checkpoint_roundtrip(tmp_path):
    params = ModelParams.init(11)
    norm = default_norm()
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, TOPO, params, norm, extra={"epochs": 12})
    topo2, params2, norm2, extra = load_checkpoint(path)
    assert topo2.to_json_obj() == TOPO.to_json_obj()
    assert norm2 == norm
    assert extra == {"epochs": 12}
    for (n1, a1), (n2, a2) in zip(params.named(), params2.named()):
        assert n1 == n2
        assert np.array_equal(a1, a2)


def test_checkpoint_rejects_corruption(tmp_path):
    params = ModelParams.init(12)
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, TOPO, params, default_norm())
    blob = path.read_bytes()

    short = tmp_path / "short.ckpt"
    short.write_bytes(blob[:3])
    with pytest.raises(ConfigurationError):
        load_checkpoint(short)

    truncated = tmp_path / "trunc.ckpt"
    truncated.write_bytes(blob[: len(blob) - 100])
    with pytest.raises(ConfigurationError):
        load_checkpoint(truncated)

    trailing = tmp_path / "trail.ckpt"
    trailing.write_bytes(blob + b"\x00")
    with pytest.raises(ConfigurationError):
        load_checkpoint(trailing)

    garbled = tmp_path / "garbled.ckpt"
    garbled.write_bytes(blob[:4] + b"\xff" * 32 + blob[36:])
    with pytest.raises(ConfigurationError):
        load_checkpoint(garbled)
