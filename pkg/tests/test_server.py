"""HTTP service tests: request validation, both prediction modes, the
error contract (400 field lists, 409 without a checkpoint) and response
determinism, all through the in-process test client."""

import numpy as np
import pytest
from fastapi.testclient import TestClient

from mtdt.model import aggregate_to_phases, save_checkpoint
from mtdt.server import (
    RequestError,
    ServiceBundle,
    create_app,
    load_bundle,
    parse_predict_request,
)
from mtdt.sim.dataset import ScenarioConfig, SimulationRecord, generate_dataset
from mtdt.sim.signal import SignalTimingPlan, render_signal
from mtdt.sim.topology import four_way_topology
from mtdt.training import TrainConfig, train

TOPO = four_way_topology()
TOPOLOGIES = {TOPO.intersection_id: TOPO}

GREENS = {1: 12, 2: 53, 3: 14, 4: 51, 5: 10, 6: 55, 7: 16, 8: 49}


def make_request(**overrides) -> dict:
    req = {
        "signal_plan": {
            "cycle": 160,
            "offset": 0,
            "phases": {str(p): {"green": g} for p, g in GREENS.items()},
        },
        "demand_rate": 0.15,
        "seed": 5,
        "duration": 700,
        "window_start": 300,
    }
    req.update(overrides)
    return req


@pytest.fixture(scope="module")
def bundle(tmp_path_factory) -> ServiceBundle:
    records = generate_dataset(TOPO, ScenarioConfig(duration=700, warmup=300), 6, seed=11)
    params, norm, _ = train(records, TOPO, TrainConfig(epochs=1, weight_decay_grid=(0.0,), seed=0))
    path = tmp_path_factory.mktemp("ckpt") / "model.ckpt"
    save_checkpoint(path, TOPO, params, norm, extra={"train_config": {"seed": 0}})
    return load_bundle(path)


@pytest.fixture(scope="module")
def client(bundle) -> TestClient:
    return TestClient(create_app(bundle))


# ---------------------------------------------------------------------------
# request parsing


def test_parse_fills_defaults():
    parsed = parse_predict_request({"signal_plan": make_request()["signal_plan"]}, TOPOLOGIES)
    assert parsed.topology is TOPO
    assert parsed.seed == 0 and parsed.mode == "predict" and parsed.stp is None
    assert parsed.window.start + parsed.window.seconds <= parsed.duration
    assert parsed.demand.shape == (4,) and (parsed.demand > 0).all()


def test_parse_scalar_demand_broadcasts():
    parsed = parse_predict_request(make_request(demand_rate=0.3), TOPOLOGIES)
    assert np.array_equal(parsed.demand, np.full(4, 0.3))


def test_parse_renormalizes_turn_ratio_rows():
    rows = [[0.5, 0.5, 0.5]] * 4
    parsed = parse_predict_request(make_request(turn_ratios=rows), TOPOLOGIES)
    assert np.allclose(parsed.ratios.reduced, 1.0 / 3.0)


def test_parse_collects_every_field_error():
    bad = make_request(
        demand_rate=-1,
        seed="x",
        turn_ratios=[[1, 2], [3, 4]],
        drv={"accel": 99, "nope": 1},
        mode="guess",
        bogus=3,
    )
    with pytest.raises(RequestError) as exc:
        parse_predict_request(bad, TOPOLOGIES)
    fields = {e["field"] for e in exc.value.errors}
    assert {"demand_rate", "seed", "turn_ratios", "drv.accel", "drv.nope", "mode", "bogus"} <= fields


def test_parse_rejects_unknown_topology():
    with pytest.raises(RequestError, match="unknown topology"):
        parse_predict_request(make_request(topology="nowhere"), TOPOLOGIES)


def test_parse_rejects_window_past_duration():
    with pytest.raises(RequestError, match="window"):
        parse_predict_request(make_request(duration=500, window_start=200), TOPOLOGIES)


def test_parse_validates_observed_counts():
    good = np.zeros((48, 80), dtype=int)
    parsed = parse_predict_request(make_request(stp=good.tolist()), TOPOLOGIES)
    assert parsed.stp.shape == (48, 80)
    for bad in (np.full((48, 80), 9), np.zeros((48, 79)), np.full((48, 80), 0.5)):
        with pytest.raises(RequestError) as exc:
            parse_predict_request(make_request(stp=bad.tolist()), TOPOLOGIES)
        assert [e["field"] for e in exc.value.errors] == ["stp"]


def test_parse_rejects_non_object_body():
    with pytest.raises(RequestError, match="JSON object"):
        parse_predict_request([1, 2, 3], TOPOLOGIES)


# ---------------------------------------------------------------------------
# /v1/simulate


def test_simulate_returns_valid_record(client):
    resp = client.post("/v1/simulate", json=make_request())
    assert resp.status_code == 200
    rec = SimulationRecord.from_json_obj(resp.json())
    assert rec.seed == 5
    plan = SignalTimingPlan.from_json_obj(make_request()["signal_plan"])
    want_sig = render_signal(plan, parse_predict_request(make_request(), TOPOLOGIES).window)
    assert np.array_equal(rec.sig, want_sig)


def test_simulate_is_deterministic(client):
    a = client.post("/v1/simulate", json=make_request()).json()
    b = client.post("/v1/simulate", json=make_request()).json()
    assert a == b


def test_simulate_rejects_cycle_out_of_range(client):
    req = make_request()
    req["signal_plan"]["cycle"] = 500
    resp = client.post("/v1/simulate", json=req)
    assert resp.status_code == 400
    (err,) = resp.json()["errors"]
    assert err["field"] == "signal_plan"
    assert "120" in err["message"] and "240" in err["message"]


def test_simulate_rejects_malformed_json(client):
    resp = client.post(
        "/v1/simulate", content=b'{"signal_plan": ', headers={"content-type": "application/json"}
    )
    assert resp.status_code == 400
    assert resp.json()["errors"][0]["message"].startswith("malformed JSON")


# ---------------------------------------------------------------------------
# /v1/predict


def test_predict_shapes_and_metadata(client, bundle):
    resp = client.post("/v1/predict", json=make_request())
    assert resp.status_code == 200
    body = resp.json()
    assert np.asarray(body["ext"]).shape == (16, 80)
    assert np.asarray(body["inf"]).shape == (12, 80)
    assert np.asarray(body["ql"]).shape == (8, 80)
    assert np.asarray(body["tt"]).shape == (8, 200)
    assert np.asarray(body["ql"]).min() >= 0
    meta = body["metadata"]
    assert meta["checkpoint_id"] == bundle.checkpoint_id
    assert meta["seed"] == 5 and meta["mode"] == "predict"
    assert meta["stp_source"] == "simulated" and meta["latency_ms"] > 0


def test_predict_phase_views_aggregate_lane_rows(client):
    body = client.post("/v1/predict", json=make_request()).json()
    pm = TOPO.phase_map()
    want_ext = aggregate_to_phases(np.asarray(body["ext"]), pm.exit)
    want_inf = aggregate_to_phases(np.asarray(body["inf"]), pm.inflow)
    assert np.allclose(body["phase_views"]["ext"], want_ext)
    assert np.allclose(body["phase_views"]["inf"], want_inf)


def test_predict_is_deterministic(client):
    a = client.post("/v1/predict", json=make_request()).json()
    b = client.post("/v1/predict", json=make_request()).json()
    a["metadata"].pop("latency_ms"), b["metadata"].pop("latency_ms")
    assert a == b


def test_predict_accepts_observed_counts(client):
    rec = client.post("/v1/simulate", json=make_request()).json()
    resp = client.post("/v1/predict", json=make_request(stp=rec["stp"]))
    assert resp.status_code == 200
    body = resp.json()
    assert body["metadata"]["stp_source"] == "provided"
    # same counts as the simulated path, so the same model output
    chained = client.post("/v1/predict", json=make_request()).json()
    assert body["ext"] == chained["ext"] and body["tt"] == chained["tt"]


def test_simulate_then_predict_round_trip(client):
    truth = client.post("/v1/simulate", json=make_request()).json()
    pred = client.post("/v1/predict", json=make_request()).json()
    for key, shape in (("ext", (16, 80)), ("inf", (12, 80)), ("ql", (8, 80)), ("tt", (8, 200))):
        t = np.asarray(truth[key], dtype=float)
        p = np.asarray(pred[key], dtype=float)
        assert t.shape == shape and p.shape == shape
        assert np.isfinite(np.abs(p - t).mean())


def test_predict_simulate_mode_returns_ground_truth(client):
    rec = client.post("/v1/simulate", json=make_request()).json()
    resp = client.post("/v1/predict", json=make_request(mode="simulate"))
    body = resp.json()
    assert body["metadata"]["mode"] == "simulate"
    for key in ("ext", "inf", "ql", "tt"):
        assert np.array_equal(np.asarray(body[key]), np.asarray(rec[key], dtype=float))


def test_predict_without_checkpoint_is_409():
    client = TestClient(create_app(None))
    resp = client.post("/v1/predict", json=make_request())
    assert resp.status_code == 409
    assert "checkpoint" in resp.json()["errors"][0]["message"]
    # simulation stays available
    assert client.post("/v1/simulate", json=make_request()).status_code == 200


# ---------------------------------------------------------------------------
# read-only endpoints


def test_topologies_lists_the_served_layout(client):
    body = client.get("/v1/topologies").json()
    (topo,) = body["topologies"]
    assert topo["id"] == TOPO.intersection_id
    assert len(topo["stop_lanes"]) == len(TOPO.stop_lanes)
    assert len(topo["exit_lanes"]) == len(TOPO.exit_lanes)


def test_model_info_reports_checkpoint(client, bundle):
    body = client.get("/v1/model/info").json()
    assert body["loaded"] is True
    assert body["checkpoint_id"] == bundle.checkpoint_id
    assert body["parameter_shapes"]["ext.B"] == [80, 64]
    assert "ext" in body["normalization"]


def test_model_info_without_checkpoint():
    client = TestClient(create_app(None))
    body = client.get("/v1/model/info").json()
    assert body == {"loaded": False, "topology": TOPO.intersection_id}
