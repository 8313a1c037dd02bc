"""Multi-task intersection model.

Four task modules share one scenario context:

* two graph-attention modules impute the unobserved lane waveforms
  (exit counts and upstream-inflow counts) from stop-bar waveforms, and
* two convolutional modules read an 8-phase multichannel time series and
  produce the queue-length series and the travel-time histogram.

The convolutional inputs chain on the imputation outputs: during training
they are built from ground-truth waveforms (teacher forcing), at inference
from the imputed ones.  All forwards run on the tape-based tensor engine so
the same code path serves training and inference.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields

import numpy as np

from . import tensor as T
from .errors import ConfigurationError, ContractError, ShapeError
from .graphs import CONTEXT_SIZE, SimulationGraph, build_exit_graph, build_inflow_graph, context_vector
from .sim.dataset import N_BUCKETS, QL_MAX
from .sim.extract import COUNT_CAP, TT_BINS
from .sim.topology import N_EXIT_SLOTS, N_INFLOW_SLOTS, N_PHASES, IntersectionTopology

GAT_HIDDEN = 64
CNN_CHANNELS = (16, 32, 32)
CNN_KERNEL = 5
MTS_CHANNELS = 7

# fixed input scales: per-lane counts are capped at 8, phase aggregates sum
# a handful of lanes, the intersection total sums all 48 slots, and every
# driving parameter lives in [0, 30]
WAVEFORM_SCALE = float(COUNT_CAP)
PHASE_AGG_SCALE = 3.0 * COUNT_CAP
TOTAL_SCALE = 48.0 * COUNT_CAP
DRV_SCALE = 30.0

# three driving parameters are surfaced as series channels
MTS_DRV_INDICES = (0, 6, 3)  # accel, lc_cooperative, min_gap


def _conv_stack_width(length: int) -> int:
    for _ in CNN_CHANNELS:
        length = (length - CNN_KERNEL + 1) // 2
    return length


CNN_FLAT = CNN_CHANNELS[-1] * _conv_stack_width(N_BUCKETS)  # 32 * 6 = 192


# ---------------------------------------------------------------------------
# parameters


def _glorot(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, fan_out: int) -> np.ndarray:
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=shape)


@dataclass
class GatParams:
    """One imputation module: input/context projections, attention, output."""

    B: np.ndarray   # (N_BUCKETS, GAT_HIDDEN)
    b: np.ndarray   # (GAT_HIDDEN,)
    a: np.ndarray   # (2 * GAT_HIDDEN, 1)
    Wz: np.ndarray  # (CONTEXT_SIZE, GAT_HIDDEN)
    bz: np.ndarray  # (GAT_HIDDEN,)
    Wo: np.ndarray  # (GAT_HIDDEN, N_BUCKETS)
    bo: np.ndarray  # (N_BUCKETS,)

    @classmethod
    def init(cls, rng: np.random.Generator) -> "GatParams":
        h = GAT_HIDDEN
        return cls(
            B=_glorot(rng, (N_BUCKETS, h), N_BUCKETS, h),
            b=np.zeros(h),
            a=_glorot(rng, (2 * h, 1), 2 * h, 1),
            Wz=_glorot(rng, (CONTEXT_SIZE, h), CONTEXT_SIZE, h),
            bz=np.zeros(h),
            Wo=_glorot(rng, (h, N_BUCKETS), h, N_BUCKETS),
            bo=np.zeros(N_BUCKETS),
        )


@dataclass
class CnnParams:
    """One series module: three conv/pool stages and a linear head."""

    c1: np.ndarray  # (16, MTS_CHANNELS, 5)
    b1: np.ndarray
    c2: np.ndarray  # (32, 16, 5)
    b2: np.ndarray
    c3: np.ndarray  # (32, 32, 5)
    b3: np.ndarray
    w: np.ndarray   # (CNN_FLAT, out)
    bias: np.ndarray

    @classmethod
    def init(cls, rng: np.random.Generator, out: int) -> "CnnParams":
        k = CNN_KERNEL
        c1, c2, c3 = CNN_CHANNELS
        return cls(
            c1=_glorot(rng, (c1, MTS_CHANNELS, k), MTS_CHANNELS * k, c1 * k),
            b1=np.zeros(c1),
            c2=_glorot(rng, (c2, c1, k), c1 * k, c2 * k),
            b2=np.zeros(c2),
            c3=_glorot(rng, (c3, c2, k), c2 * k, c3 * k),
            b3=np.zeros(c3),
            w=_glorot(rng, (CNN_FLAT, out), CNN_FLAT, out),
            bias=np.zeros(out),
        )


@dataclass
class ModelParams:
    ext: GatParams
    inf: GatParams
    ql: CnnParams
    tt: CnnParams

    @classmethod
    def init(cls, seed: int) -> "ModelParams":
        rng = np.random.default_rng(seed)
        return cls(
            ext=GatParams.init(rng),
            inf=GatParams.init(rng),
            ql=CnnParams.init(rng, N_BUCKETS),
            tt=CnnParams.init(rng, TT_BINS),
        )

    def named(self):
        """(name, array) pairs in a fixed order, e.g. ("ext.B", ...)."""
        for module_field in fields(self):
            module = getattr(self, module_field.name)
            for f in fields(module):
                yield f"{module_field.name}.{f.name}", getattr(module, f.name)

    def copy(self) -> "ModelParams":
        def dup(module):
            return type(module)(**{f.name: getattr(module, f.name).copy() for f in fields(module)})

        return ModelParams(ext=dup(self.ext), inf=dup(self.inf), ql=dup(self.ql), tt=dup(self.tt))

    def get(self, name: str) -> np.ndarray:
        mod, _, leaf = name.partition(".")
        return getattr(getattr(self, mod), leaf)

    def set(self, name: str, value: np.ndarray) -> None:
        mod, _, leaf = name.partition(".")
        setattr(getattr(self, mod), leaf, value)


# ---------------------------------------------------------------------------
# normalization

# target statistics are fitted on the training split; inputs use the fixed
# scales above, so only outputs need fitted stats


@dataclass
class MinMaxStats:
    lo: float
    hi: float

    @property
    def degenerate(self) -> bool:
        return self.hi <= self.lo

    def normalize(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        if self.degenerate:
            return np.zeros_like(y)
        return (y - self.lo) / (self.hi - self.lo)

    def denormalize(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        if self.degenerate:
            return np.full_like(v, self.lo)
        return v * (self.hi - self.lo) + self.lo


@dataclass
class Log1pStats:
    cap: float

    @property
    def scale(self) -> float:
        return float(np.log1p(self.cap)) if self.cap > 0 else 1.0

    def normalize(self, y: np.ndarray) -> np.ndarray:
        return np.log1p(np.asarray(y, dtype=np.float64)) / self.scale

    def denormalize(self, v: np.ndarray) -> np.ndarray:
        return np.expm1(np.asarray(v, dtype=np.float64) * self.scale)


@dataclass
class NormalizationSpec:
    ext: MinMaxStats
    inf: MinMaxStats
    tt: MinMaxStats
    ql: Log1pStats

    @classmethod
    def fit(cls, records) -> "NormalizationSpec":
        if not records:
            raise ContractError("cannot fit normalization on an empty split")

        def minmax(name):
            arrs = [getattr(r, name) for r in records]
            return MinMaxStats(lo=float(min(a.min() for a in arrs)), hi=float(max(a.max() for a in arrs)))

        return cls(
            ext=minmax("ext"),
            inf=minmax("inf"),
            tt=minmax("tt"),
            ql=Log1pStats(cap=float(max(r.ql.max() for r in records))),
        )

    def to_json_obj(self) -> dict:
        return {
            "ext": {"lo": self.ext.lo, "hi": self.ext.hi},
            "inf": {"lo": self.inf.lo, "hi": self.inf.hi},
            "tt": {"lo": self.tt.lo, "hi": self.tt.hi},
            "ql": {"cap": self.ql.cap},
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "NormalizationSpec":
        try:
            return cls(
                ext=MinMaxStats(float(obj["ext"]["lo"]), float(obj["ext"]["hi"])),
                inf=MinMaxStats(float(obj["inf"]["lo"]), float(obj["inf"]["hi"])),
                tt=MinMaxStats(float(obj["tt"]["lo"]), float(obj["tt"]["hi"])),
                ql=Log1pStats(float(obj["ql"]["cap"])),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigurationError(f"malformed normalization stats: {exc}") from exc


# ---------------------------------------------------------------------------
# module forwards (tensor in, tensor out; parameters may be Tensors on a
# tape for training or plain arrays for inference)


def _context_scale() -> np.ndarray:
    # signal and turn-ratio entries are already in [0, 1]; only the trailing
    # driving vector needs scaling
    scale = np.ones(CONTEXT_SIZE)
    scale[-9:] = 1.0 / DRV_SCALE
    return scale


_Z_SCALE = _context_scale()


def gat_forward(p: GatParams, graph: SimulationGraph, z: np.ndarray):
    """Impute target waveforms.  Returns (n_targets, N_BUCKETS) on the
    normalized output scale (non-negative)."""
    if z.shape != (CONTEXT_SIZE,):
        raise ShapeError(f"context must be ({CONTEXT_SIZE},), got {z.shape}")
    x = graph.x / WAVEFORM_SCALE
    zn = (z * _Z_SCALE)[None, :]
    h = T.relu(T.add_rowvec(T.matmul(T.Tensor(x), p.B), p.b))
    zp = T.relu(T.add_rowvec(T.matmul(T.Tensor(zn), p.Wz), p.bz))
    src, dst = graph.edges[:, 0], graph.edges[:, 1]
    hs = T.gather_rows(h, src)
    hd = T.gather_rows(h, dst)
    e = T.relu(T.matmul(T.concat([hs, hd], axis=1), p.a))
    alpha = T.segment_softmax(T.reshape(e, (len(graph.edges),)), graph.segments)
    msg = T.scale_rows(T.add_rowvec(hs, T.reshape(zp, (GAT_HIDDEN,))), alpha)
    m = T.segment_sum_rows(msg, graph.segments, len(graph.target_ids))
    return T.relu(T.add_rowvec(T.matmul(m, p.Wo), p.bo))


def aggregate_to_phases(lanes: np.ndarray, members) -> np.ndarray:
    """Sum lane rows into 8 phase rows; phases with no member lanes stay 0."""
    lanes = np.asarray(lanes, dtype=np.float64)
    out = np.zeros((N_PHASES, lanes.shape[1]))
    for phase_idx, ids in enumerate(members):
        if ids:
            out[phase_idx] = lanes[list(ids)].sum(axis=0)
    return out


def build_mts(primary: np.ndarray, stp_phase: np.ndarray, sig: np.ndarray,
              drv: np.ndarray, stp_total: np.ndarray) -> np.ndarray:
    """Stack the per-phase series input (N_PHASES, MTS_CHANNELS, N_BUCKETS).

    Channels: [0] phase-aggregated target waveform, [1] phase-aggregated
    stop-bar waveform, [2] the phase's signal row, [3..5] three driving
    parameters held constant over time, [6] the intersection-wide stop-bar
    total (same series for every phase).
    """
    for name, arr, want in (
        ("primary", primary, (N_PHASES, N_BUCKETS)),
        ("stp_phase", stp_phase, (N_PHASES, N_BUCKETS)),
        ("sig", sig, (N_PHASES, N_BUCKETS)),
        ("drv", drv, (9,)),
        ("stp_total", stp_total, (N_BUCKETS,)),
    ):
        if np.asarray(arr).shape != want:
            raise ShapeError(f"build_mts: {name} must have shape {want}")
    v = np.zeros((N_PHASES, MTS_CHANNELS, N_BUCKETS))
    v[:, 0] = primary
    v[:, 1] = stp_phase
    v[:, 2] = sig
    for k, j in enumerate(MTS_DRV_INDICES):
        v[:, 3 + k] = drv[j]
    v[:, 6] = stp_total
    return v


def normalize_mts(v: np.ndarray) -> np.ndarray:
    """Scale every channel into roughly [0, 1] using the fixed input ranges."""
    out = np.array(v, dtype=np.float64)
    out[:, 0] /= PHASE_AGG_SCALE
    out[:, 1] /= PHASE_AGG_SCALE
    out[:, 3:6] /= DRV_SCALE
    out[:, 6] /= TOTAL_SCALE
    return out


def cnn_forward(p: CnnParams, v: np.ndarray, relu_head: bool):
    """Run the shared conv stack over each phase slice; (N_PHASES, out)."""
    if v.shape[1:] != (MTS_CHANNELS, N_BUCKETS):
        raise ShapeError(f"series input must be (p, {MTS_CHANNELS}, {N_BUCKETS}), got {v.shape}")
    rows = []
    for phase_idx in range(v.shape[0]):
        t = T.Tensor(v[phase_idx])
        t = T.maxpool1d(T.relu(T.add_colvec(T.conv1d(t, p.c1), p.b1)))
        t = T.maxpool1d(T.relu(T.add_colvec(T.conv1d(t, p.c2), p.b2)))
        t = T.maxpool1d(T.relu(T.add_colvec(T.conv1d(t, p.c3), p.b3)))
        out = T.add_rowvec(T.matmul(T.reshape(t, (1, CNN_FLAT)), p.w), p.bias)
        rows.append(T.relu(out) if relu_head else out)
    return T.concat(rows, axis=0)


# ---------------------------------------------------------------------------
# full forward (inference plumbing, numpy in / numpy out)


def _scatter_rows(values: np.ndarray, ids, n_rows: int) -> np.ndarray:
    out = np.zeros((n_rows, values.shape[1]))
    out[list(ids)] = values
    return out


def mtdt_forward(
    topology: IntersectionTopology,
    params: ModelParams,
    norm: NormalizationSpec,
    sig: np.ndarray,
    tmc: np.ndarray,
    drv: np.ndarray,
    stp: np.ndarray,
    *,
    true_ext: np.ndarray | None = None,
    true_inf: np.ndarray | None = None,
    use_true_aggregates: bool = False,
) -> dict:
    """Predict all four targets for one scenario, on original scales.

    With ``use_true_aggregates`` the series modules read ground-truth
    waveform aggregates instead of the imputed ones (the imputation
    modules still run, but nothing downstream depends on them).
    """
    if use_true_aggregates and (true_ext is None or true_inf is None):
        raise ContractError("true waveforms are required to bypass the imputed aggregates")
    z = context_vector(sig, tmc, drv)
    stp = np.asarray(stp, dtype=np.float64)

    ext_ids = [l.id for l in topology.exit_lanes]
    inf_ids = [l.id for l in topology.inflow_lanes]
    ext_rows = gat_forward(params.ext, build_exit_graph(topology, stp), z).data
    inf_rows = gat_forward(params.inf, build_inflow_graph(topology, stp), z).data
    ext_pred = _scatter_rows(norm.ext.denormalize(ext_rows), ext_ids, N_EXIT_SLOTS)
    inf_pred = _scatter_rows(norm.inf.denormalize(inf_rows), inf_ids, N_INFLOW_SLOTS)

    ext_src = np.asarray(true_ext, dtype=np.float64) if use_true_aggregates else ext_pred
    inf_src = np.asarray(true_inf, dtype=np.float64) if use_true_aggregates else inf_pred

    pm = topology.phase_map()
    sig = np.asarray(sig, dtype=np.float64)
    drv = np.asarray(drv, dtype=np.float64)
    stp_phase = aggregate_to_phases(stp, pm.stop)
    stp_total = stp.sum(axis=0)
    v_ql = normalize_mts(build_mts(aggregate_to_phases(ext_src, pm.exit), stp_phase, sig, drv, stp_total))
    v_tt = normalize_mts(build_mts(aggregate_to_phases(inf_src, pm.inflow), stp_phase, sig, drv, stp_total))

    ql_norm = cnn_forward(params.ql, v_ql, relu_head=True).data
    tt_logits = cnn_forward(params.tt, v_tt, relu_head=False).data
    tt_probs = np.exp(tt_logits - tt_logits.max(axis=1, keepdims=True))
    tt_probs /= tt_probs.sum(axis=1, keepdims=True)
    return {
        "ext": ext_pred,
        "inf": inf_pred,
        "ql": norm.ql.denormalize(ql_norm),
        "tt": norm.tt.denormalize(tt_probs),
        "tt_logits": tt_logits,
    }


# ---------------------------------------------------------------------------
# checkpoint I/O: 4-byte little-endian header length, UTF-8 JSON header
# (hyperparameters, topology, normalization stats, parameter manifest),
# then one contiguous little-endian float64 payload per parameter


CHECKPOINT_FORMAT = 1


def save_checkpoint(path, topology: IntersectionTopology, params: ModelParams,
                    norm: NormalizationSpec, extra: dict | None = None) -> None:
    manifest = [{"name": name, "shape": list(arr.shape)} for name, arr in params.named()]
    header = {
        "format": CHECKPOINT_FORMAT,
        "hyperparameters": {
            "gat_hidden": GAT_HIDDEN,
            "cnn_channels": list(CNN_CHANNELS),
            "cnn_kernel": CNN_KERNEL,
            "mts_channels": MTS_CHANNELS,
        },
        "topology": topology.to_json_obj(),
        "normalization": norm.to_json_obj(),
        "parameters": manifest,
        "extra": extra or {},
    }
    blob = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(np.uint32(len(blob)).astype("<u4").tobytes())
        fh.write(blob)
        for _, arr in params.named():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Returns (topology, params, norm, extra)."""
    with open(path, "rb") as fh:
        raw = fh.read(4)
        if len(raw) < 4:
            raise ConfigurationError(f"{path}: not a checkpoint file")
        header_len = int(np.frombuffer(raw, dtype="<u4")[0])
        blob = fh.read(header_len)
        if len(blob) < header_len:
            raise ConfigurationError(f"{path}: truncated checkpoint header")
        try:
            header = json.loads(blob.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"{path}: invalid checkpoint header: {exc}") from exc
        if header.get("format") != CHECKPOINT_FORMAT:
            raise ConfigurationError(f"{path}: unsupported checkpoint format {header.get('format')!r}")
        topology = IntersectionTopology.from_json_obj(header["topology"])
        norm = NormalizationSpec.from_json_obj(header["normalization"])
        params = ModelParams.init(0)
        expected = {name for name, _ in params.named()}
        listed = [entry["name"] for entry in header["parameters"]]
        if set(listed) != expected or len(listed) != len(expected):
            raise ConfigurationError(f"{path}: parameter manifest does not match the model")
        for entry in header["parameters"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            payload = fh.read(8 * count)
            if len(payload) < 8 * count:
                raise ConfigurationError(f"{path}: truncated payload for {entry['name']}")
            params.set(entry["name"], np.frombuffer(payload, dtype="<f8").reshape(shape).copy())
        if fh.read(1):
            raise ConfigurationError(f"{path}: trailing bytes after the last parameter")
    return topology, params, norm, header.get("extra", {})
