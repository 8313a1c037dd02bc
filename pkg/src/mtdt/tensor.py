"""Dense float64 tensors with reverse-mode automatic differentiation.

The layer set is intentionally small: exactly the operations the traffic
surrogate model needs (linear algebra, 1-d convolution/pooling, relu,
softmax variants, row gather/scatter for graph attention).  Values are
numpy arrays; gradients are tracked on an explicit :class:`GradientTape`.

A tensor is either *constant* (``tape is None``) or *tracked* (it carries
the tape that recorded it plus its ``tape_id``).  Operations record a node
on the tape whenever at least one input is tracked; nodes are appended in
creation order, which is already a topological order, so the backward pass
is a single reverse sweep that visits each node exactly once.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, ShapeError

Array = np.ndarray


def _as_f64(data) -> Array:
    arr = np.asarray(data, dtype=np.float64)
    if not arr.flags["C_CONTIGUOUS"]:
        arr = np.ascontiguousarray(arr)
    return arr


class Tensor:
    """A dense float64 array, optionally tracked on a gradient tape."""

    __slots__ = ("data", "tape", "tape_id")

    def __init__(self, data, tape: "GradientTape | None" = None, tape_id: int | None = None):
        self.data = _as_f64(data)
        self.tape = tape
        self.tape_id = tape_id

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def tracked(self) -> bool:
        return self.tape is not None

    def __repr__(self) -> str:
        tag = f", tape_id={self.tape_id}" if self.tracked else ""
        return f"Tensor(shape={self.shape}{tag})"

    # arithmetic sugar -------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


class _Node:
    __slots__ = ("parents", "backward")

    def __init__(self, parents: tuple[int, ...], backward: Callable[[Array], tuple]):
        self.parents = parents
        self.backward = backward


class GradientTape:
    """Ordered record of operations plus per-node accumulated gradients."""

    def __init__(self):
        self._nodes: list[_Node] = []
        self._grads: list[Array | None] | None = None

    def __len__(self) -> int:
        return len(self._nodes)

    def param(self, data) -> Tensor:
        """Register a leaf tensor (a trainable parameter or watched input)."""
        tid = len(self._nodes)
        self._nodes.append(_Node((), lambda g: ()))
        return Tensor(data, self, tid)

    def _record(self, out: Array, parents: Sequence[Tensor], backward) -> Tensor:
        ids = tuple(p.tape_id for p in parents)
        tid = len(self._nodes)
        self._nodes.append(_Node(ids, backward))
        return Tensor(out, self, tid)

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(node) for every node reachable from *loss*."""
        if loss.tape is not self:
            raise ContractError("loss tensor does not belong to this tape")
        if loss.data.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        grads: list[Array | None] = [None] * len(self._nodes)
        grads[loss.tape_id] = np.ones_like(loss.data)
        for tid in range(loss.tape_id, -1, -1):
            g = grads[tid]
            if g is None:
                continue
            node = self._nodes[tid]
            if not node.parents:
                continue
            for pid, pg in zip(node.parents, node.backward(g)):
                if pg is None:
                    continue
                if grads[pid] is None:
                    grads[pid] = pg
                else:
                    grads[pid] = grads[pid] + pg
        self._grads = grads

    def grad(self, t: Tensor) -> Array:
        """Gradient accumulated for *t* by the last backward(); zeros if untouched."""
        if t.tape is not self:
            raise ContractError("tensor does not belong to this tape")
        if self._grads is None:
            raise ContractError("backward() has not been called on this tape")
        g = self._grads[t.tape_id]
        if g is None:
            return np.zeros_like(t.data)
        return g


# ---------------------------------------------------------------------------
# op plumbing


def _tape_of(*tensors: Tensor) -> GradientTape | None:
    tape = None
    for t in tensors:
        if t.tracked:
            if tape is None:
                tape = t.tape
            elif tape is not t.tape:
                raise ContractError("operands were recorded on different tapes")
    return tape


def _emit(out: Array, inputs: Sequence[Tensor], backward) -> Tensor:
    """Return a tracked tensor when any input is tracked, else a constant."""
    tape = _tape_of(*inputs)
    if tape is None:
        return Tensor(out)
    tracked = [t for t in inputs if t.tracked]
    idx = [i for i, t in enumerate(inputs) if t.tracked]

    def bwd(g: Array):
        all_grads = backward(g)
        return tuple(all_grads[i] for i in idx)

    return tape._record(out, tracked, bwd)


def _coerce(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# ---------------------------------------------------------------------------
# elementwise / linear algebra


def add(a: Tensor, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    if a.shape != b.shape:
        raise ShapeError(f"add: shapes differ {a.shape} vs {b.shape}")
    return _emit(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    if a.shape != b.shape:
        raise ShapeError(f"sub: shapes differ {a.shape} vs {b.shape}")
    return _emit(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b) -> Tensor:
    """Elementwise product; *b* may be a python scalar."""
    a = _coerce(a)
    if isinstance(b, (int, float)):
        s = float(b)
        return _emit(a.data * s, (a,), lambda g: (g * s,))
    b = _coerce(b)
    if a.shape != b.shape:
        raise ShapeError(f"mul: shapes differ {a.shape} vs {b.shape}")
    return _emit(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError("matmul expects 2-d operands")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dims differ {a.shape} vs {b.shape}")
    return _emit(
        a.data @ b.data,
        (a, b),
        lambda g: (g @ b.data.T, a.data.T @ g),
    )


def relu(x: Tensor) -> Tensor:
    """max(x, 0); the subgradient at exactly 0 is taken as 0."""
    x = _coerce(x)
    mask = x.data > 0.0
    return _emit(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def total(x: Tensor) -> Tensor:
    """Sum of all elements, returned as a scalar tensor."""
    x = _coerce(x)
    return _emit(np.asarray(x.data.sum()), (x,), lambda g: (np.broadcast_to(g, x.shape).copy(),))


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    x = _coerce(x)
    old = x.shape
    out = x.data.reshape(shape)
    return _emit(out.copy(), (x,), lambda g: (g.reshape(old),))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    ts = [_coerce(t) for t in tensors]
    if not ts:
        raise ShapeError("concat of an empty sequence")
    out = np.concatenate([t.data for t in ts], axis=axis)
    sizes = [t.shape[axis] for t in ts]
    bounds = np.cumsum(sizes)[:-1]

    def bwd(g: Array):
        return tuple(np.split(g, bounds, axis=axis))

    return _emit(out, ts, bwd)


# ---------------------------------------------------------------------------
# softmax family


def _stable_softmax(x: Array, axis: int) -> Array:
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Softmax along *axis*, stabilised by max subtraction."""
    x = _coerce(x)
    s = _stable_softmax(x.data, axis)

    def bwd(g: Array):
        inner = (g * s).sum(axis=axis, keepdims=True)
        return (s * (g - inner),)

    return _emit(s, (x,), bwd)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    x = _coerce(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    ls = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    s = np.exp(ls)

    def bwd(g: Array):
        return (g - s * g.sum(axis=axis, keepdims=True),)

    return _emit(ls, (x,), bwd)


# ---------------------------------------------------------------------------
# convolution / pooling (valid padding, stride 1; pooling kernel 2 stride 2)


def conv1d(x: Tensor, k: Tensor) -> Tensor:
    """Cross-correlate channels: x (c_in, L) with kernels k (c_out, c_in, K)."""
    x, k = _coerce(x), _coerce(k)
    if x.data.ndim != 2 or k.data.ndim != 3:
        raise ShapeError("conv1d expects x (c_in, L) and k (c_out, c_in, K)")
    c_in, length = x.shape
    c_out, kc_in, ksize = k.shape
    if kc_in != c_in:
        raise ShapeError(f"conv1d: channel mismatch {c_in} vs {kc_in}")
    if ksize > length:
        raise ShapeError(f"conv1d: kernel {ksize} longer than input {length}")
    win = np.lib.stride_tricks.sliding_window_view(x.data, ksize, axis=1)  # (c_in, L', K)
    out = np.einsum("iwk,oik->ow", win, k.data, optimize=True)
    out_len = length - ksize + 1

    def bwd(g: Array):
        dk = np.einsum("ow,iwk->oik", g, win, optimize=True)
        dx = np.zeros_like(x.data)
        for off in range(ksize):
            dx[:, off : off + out_len] += np.einsum("ow,oi->iw", g, k.data[:, :, off], optimize=True)
        return dx, dk

    return _emit(out, (x, k), bwd)


def maxpool1d(x: Tensor) -> Tensor:
    """Non-overlapping max over pairs along the last axis; ties pick the first
    element, and a trailing odd element is dropped."""
    x = _coerce(x)
    if x.data.ndim != 2:
        raise ShapeError("maxpool1d expects (channels, L)")
    c, length = x.shape
    if length < 2:
        raise ShapeError("maxpool1d needs L >= 2")
    half = length // 2
    pairs = x.data[:, : 2 * half].reshape(c, half, 2)
    idx = pairs.argmax(axis=2)  # argmax returns the first maximal element
    out = np.take_along_axis(pairs, idx[:, :, None], axis=2)[:, :, 0]

    def bwd(g: Array):
        dpairs = np.zeros_like(pairs)
        np.put_along_axis(dpairs, idx[:, :, None], g[:, :, None], axis=2)
        dx = np.zeros_like(x.data)
        dx[:, : 2 * half] = dpairs.reshape(c, 2 * half)
        return (dx,)

    return _emit(out, (x,), bwd)


# ---------------------------------------------------------------------------
# row-wise helpers used by the graph attention layers


def gather_rows(x: Tensor, idx) -> Tensor:
    """Select rows x[idx]; the gradient scatter-adds back (duplicates sum)."""
    x = _coerce(x)
    idx = np.asarray(idx, dtype=np.intp)
    if x.data.ndim != 2:
        raise ShapeError("gather_rows expects a 2-d tensor")
    if idx.ndim != 1:
        raise ShapeError("gather_rows expects a 1-d index array")
    if idx.size and (idx.min() < 0 or idx.max() >= x.shape[0]):
        raise ContractError("gather_rows: index out of range")
    out = x.data[idx]

    def bwd(g: Array):
        dx = np.zeros_like(x.data)
        np.add.at(dx, idx, g)
        return (dx,)

    return _emit(out, (x,), bwd)


def scale_rows(m: Tensor, v: Tensor) -> Tensor:
    """Multiply row i of m (n, h) by v[i] (n,)."""
    m, v = _coerce(m), _coerce(v)
    if m.data.ndim != 2 or v.data.ndim != 1 or m.shape[0] != v.shape[0]:
        raise ShapeError(f"scale_rows: incompatible shapes {m.shape}, {v.shape}")
    out = m.data * v.data[:, None]

    def bwd(g: Array):
        return g * v.data[:, None], (g * m.data).sum(axis=1)

    return _emit(out, (m, v), bwd)


def add_rowvec(m: Tensor, v: Tensor) -> Tensor:
    """Add a length-h row vector to every row of m (n, h)."""
    m, v = _coerce(m), _coerce(v)
    if m.data.ndim != 2 or v.data.ndim != 1 or m.shape[1] != v.shape[0]:
        raise ShapeError(f"add_rowvec: incompatible shapes {m.shape}, {v.shape}")
    return _emit(m.data + v.data[None, :], (m, v), lambda g: (g, g.sum(axis=0)))


def add_colvec(m: Tensor, v: Tensor) -> Tensor:
    """Add v[i] (n,) to every element of row i of m (n, h)."""
    m, v = _coerce(m), _coerce(v)
    if m.data.ndim != 2 or v.data.ndim != 1 or m.shape[0] != v.shape[0]:
        raise ShapeError(f"add_colvec: incompatible shapes {m.shape}, {v.shape}")
    return _emit(m.data + v.data[:, None], (m, v), lambda g: (g, g.sum(axis=1)))


def _segment_starts(segments: Array, n: int) -> Array:
    if segments.ndim != 1 or segments.shape[0] != n:
        raise ShapeError("segment ids must be 1-d and match the value count")
    if n == 0:
        raise ContractError("segment ops need at least one element")
    if np.any(np.diff(segments) < 0):
        raise ContractError("segment ids must be sorted ascending")
    return np.flatnonzero(np.r_[True, np.diff(segments) > 0])


def segment_softmax(e: Tensor, segments) -> Tensor:
    """Softmax of a 1-d tensor within each contiguous run of equal segment ids."""
    e = _coerce(e)
    if e.data.ndim != 1:
        raise ShapeError("segment_softmax expects a 1-d tensor")
    seg = np.asarray(segments, dtype=np.intp)
    starts = _segment_starts(seg, e.shape[0])
    mx = np.maximum.reduceat(e.data, starts)
    shifted = e.data - np.repeat(mx, np.diff(np.r_[starts, e.shape[0]]))
    ex = np.exp(shifted)
    denom = np.add.reduceat(ex, starts)
    a = ex / np.repeat(denom, np.diff(np.r_[starts, e.shape[0]]))

    def bwd(g: Array):
        inner = np.add.reduceat(g * a, starts)
        rep = np.repeat(inner, np.diff(np.r_[starts, e.shape[0]]))
        return (a * (g - rep),)

    return _emit(a, (e,), bwd)


def segment_sum_rows(m: Tensor, segments, num_segments: int) -> Tensor:
    """Sum rows of m (n, h) that share a segment id into (num_segments, h)."""
    m = _coerce(m)
    if m.data.ndim != 2:
        raise ShapeError("segment_sum_rows expects a 2-d tensor")
    seg = np.asarray(segments, dtype=np.intp)
    if seg.ndim != 1 or seg.shape[0] != m.shape[0]:
        raise ShapeError("segment ids must be 1-d and match the row count")
    if seg.size and (seg.min() < 0 or seg.max() >= num_segments):
        raise ContractError("segment id out of range")
    out = np.zeros((num_segments, m.shape[1]))
    np.add.at(out, seg, m.data)

    def bwd(g: Array):
        return (g[seg],)

    return _emit(out, (m,), bwd)
