"""Minimal reverse-mode automatic differentiation over dense float64 matrices.

Every value is a 2-D (rows, cols) array. Ops compute eagerly; when a Tape is
active (``with Tape() as tape:``) each op also records a backward closure, and
``tape.backward(loss)`` fills the ``grad`` slot of every tensor that the loss
depends on. Outside a tape, ops are plain numpy with a thin wrapper.

Broadcasting is restricted to row-wise shapes: operands must agree per
dimension or have extent 1 there ((1, C), (R, 1), (1, 1) against (R, C)).
"""
from __future__ import annotations

import numpy as np

_EXP_MAX = 700.0  # exp(709.8) overflows float64
_LOG_MIN = 1e-300


class Tensor:
    """A dense float64 matrix with a gradient slot filled by Tape.backward."""

    __slots__ = ("values", "grad")

    def __init__(self, values):
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ValueError(f"tensors are 2-D; got shape {arr.shape}")
        self.values = arr
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def item(self) -> float:
        if self.values.size != 1:
            raise ValueError(f"item() on non-scalar tensor of shape {self.shape}")
        return float(self.values[0, 0])

    def __repr__(self):
        return f"Tensor(shape={self.shape})"

    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __neg__(self):
        return mul(self, Tensor(-1.0))

    def __matmul__(self, other):
        return matmul(self, other)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class Tape:
    """Recorded operation list; backward walks it in reverse execution order."""

    _active: "Tape | None" = None

    def __init__(self):
        self._ops: list[tuple[Tensor, tuple[Tensor, ...], object]] = []
        self._prev: Tape | None = None

    def __enter__(self) -> "Tape":
        self._prev = Tape._active
        Tape._active = self
        return self

    def __exit__(self, *exc):
        Tape._active = self._prev
        return False

    def backward(self, loss: Tensor) -> None:
        """Populate ``grad`` on every tensor the scalar loss depends on."""
        if loss.values.shape != (1, 1):
            raise ValueError("backward requires a scalar (1,1) loss")
        for out, parents, _ in self._ops:
            out.grad = None
            for p in parents:
                p.grad = None
        loss.grad = np.ones((1, 1))
        # execution order is a topological order, so one reverse sweep
        # visits each recorded op exactly once
        for out, parents, bwd in reversed(self._ops):
            if out.grad is not None:
                bwd(out.grad)


def _record(out: Tensor, parents: tuple[Tensor, ...], bwd) -> None:
    tape = Tape._active
    if tape is not None:
        tape._ops.append((out, parents, bwd))


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    t.grad = g if t.grad is None else t.grad + g


def _reduce_to(g: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Sum a gradient over the axes that were broadcast in the forward op."""
    if g.shape == shape:
        return g
    if shape[0] == 1 and g.shape[0] > 1:
        g = g.sum(axis=0, keepdims=True)
    if shape[1] == 1 and g.shape[1] > 1:
        g = g.sum(axis=1, keepdims=True)
    return g


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    for da, db in zip(a.shape, b.shape):
        if da != db and da != 1 and db != 1:
            raise ValueError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    out = Tensor(a.values @ b.values)

    def bwd(g):
        _accumulate(a, g @ b.values.T)
        _accumulate(b, a.values.T @ g)

    _record(out, (a, b), bwd)
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "add")
    out = Tensor(a.values + b.values)

    def bwd(g):
        _accumulate(a, _reduce_to(g, a.shape))
        _accumulate(b, _reduce_to(g, b.shape))

    _record(out, (a, b), bwd)
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "sub")
    out = Tensor(a.values - b.values)

    def bwd(g):
        _accumulate(a, _reduce_to(g, a.shape))
        _accumulate(b, _reduce_to(-g, b.shape))

    _record(out, (a, b), bwd)
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "mul")
    out = Tensor(a.values * b.values)

    def bwd(g):
        _accumulate(a, _reduce_to(g * b.values, a.shape))
        _accumulate(b, _reduce_to(g * a.values, b.shape))

    _record(out, (a, b), bwd)
    return out


def transpose(a: Tensor) -> Tensor:
    out = Tensor(a.values.T)

    def bwd(g):
        _accumulate(a, g.T)

    _record(out, (a,), bwd)
    return out


def concat_rows(tensors: list[Tensor]) -> Tensor:
    cols = tensors[0].shape[1]
    if any(t.shape[1] != cols for t in tensors):
        raise ValueError("concat_rows: column counts differ")
    out = Tensor(np.concatenate([t.values for t in tensors], axis=0))
    offsets = np.cumsum([0] + [t.shape[0] for t in tensors])

    def bwd(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            _accumulate(t, g[lo:hi])

    _record(out, tuple(tensors), bwd)
    return out


class BlockScatterPlan:
    """Scatter-add for an index array made of ``batch`` shifted copies of one
    block, computed as batched matmul with a dense per-block incidence matrix.
    Much faster than np.add.at for the repeated small-graph case."""

    def __init__(self, block_index: np.ndarray, block_rows: int, batch: int = 1):
        idx = np.asarray(block_index, dtype=np.int64)
        incidence = np.zeros((block_rows, idx.shape[0]))
        incidence[idx, np.arange(idx.shape[0])] = 1.0
        self.incidence = incidence[None]
        self.block_rows = block_rows
        self.block_cols = idx.shape[0]
        self.batch = batch

    def apply(self, values: np.ndarray) -> np.ndarray:
        cols = values.shape[1]
        stacked = self.incidence @ values.reshape(self.batch, self.block_cols, cols)
        return stacked.reshape(self.batch * self.block_rows, cols)


def _scatter_rows(values: np.ndarray, idx: np.ndarray, num_rows: int, plan) -> np.ndarray:
    if plan is not None:
        return plan.apply(values)
    out = np.zeros((num_rows, values.shape[1]))
    np.add.at(out, idx, values)
    return out


def gather_rows(a: Tensor, index, scatter_plan=None) -> Tensor:
    """Rows of ``a`` at ``index``; ``scatter_plan`` speeds up the backward
    accumulation for a fixed index array."""
    idx = np.asarray(index, dtype=np.int64)
    out = Tensor(a.values[idx])

    def bwd(g):
        _accumulate(a, _scatter_rows(g, idx, a.shape[0], scatter_plan))

    _record(out, (a,), bwd)
    return out


def scatter_add_rows(a: Tensor, index, num_rows: int, scatter_plan=None) -> Tensor:
    idx = np.asarray(index, dtype=np.int64)
    out = Tensor(_scatter_rows(a.values, idx, num_rows, scatter_plan))

    def bwd(g):
        _accumulate(a, g[idx])

    _record(out, (a,), bwd)
    return out


def mean_blocks(a: Tensor, block_size: int) -> Tensor:
    """Mean over consecutive row blocks of equal size -> (rows/size, cols)."""
    rows, cols = a.shape
    if rows % block_size:
        raise ValueError("row count must be a multiple of block_size")
    n = rows // block_size
    out = Tensor(a.values.reshape(n, block_size, cols).mean(axis=1))

    def bwd(g):
        _accumulate(a, np.repeat(g / block_size, block_size, axis=0))

    _record(out, (a,), bwd)
    return out


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    pos = a.values > 0
    out = Tensor(np.where(pos, a.values, slope * a.values))

    def bwd(g):
        _accumulate(a, g * np.where(pos, 1.0, slope))

    _record(out, (a,), bwd)
    return out


def tanh(a: Tensor) -> Tensor:
    out = Tensor(np.tanh(a.values))
    y = out.values

    def bwd(g):
        _accumulate(a, g * (1.0 - y * y))

    _record(out, (a,), bwd)
    return out


def exp(a: Tensor) -> Tensor:
    out = Tensor(np.exp(np.minimum(a.values, _EXP_MAX)))
    y = out.values

    def bwd(g):
        _accumulate(a, g * y)

    _record(out, (a,), bwd)
    return out


def log(a: Tensor) -> Tensor:
    safe = np.maximum(a.values, _LOG_MIN)
    out = Tensor(np.log(safe))

    def bwd(g):
        _accumulate(a, g / safe)

    _record(out, (a,), bwd)
    return out


def _segment_starts(segment_ids: np.ndarray) -> np.ndarray:
    if segment_ids.size == 0:
        return np.zeros(0, dtype=np.int64)
    if np.any(np.diff(segment_ids) < 0):
        raise ValueError("segment ids must be non-decreasing (contiguous segments)")
    changes = np.flatnonzero(np.diff(segment_ids)) + 1
    return np.concatenate([[0], changes]).astype(np.int64)


def segment_softmax(a: Tensor, segment_ids, starts=None) -> Tensor:
    """Softmax across rows within each contiguous segment, per column.

    ``starts`` may carry precomputed segment boundaries for a fixed id array.
    """
    ids = np.asarray(segment_ids, dtype=np.int64)
    if ids.shape[0] != a.shape[0]:
        raise ValueError("segment ids length must match row count")
    if starts is None:
        starts = _segment_starts(ids)
    counts = np.diff(np.concatenate([starts, [a.shape[0]]]))
    rep = np.repeat(np.arange(starts.size), counts)
    seg_max = np.maximum.reduceat(a.values, starts, axis=0)
    e = np.exp(np.minimum(a.values - seg_max[rep], _EXP_MAX))
    denom = np.add.reduceat(e, starts, axis=0)
    soft = e / denom[rep]
    out = Tensor(soft)

    def bwd(g):
        inner = np.add.reduceat(g * soft, starts, axis=0)
        _accumulate(a, soft * (g - inner[rep]))

    _record(out, (a,), bwd)
    return out


def segment_mean(a: Tensor, segment_ids, num_segments: int) -> Tensor:
    """Mean of rows grouped by segment id -> (num_segments, cols)."""
    ids = np.asarray(segment_ids, dtype=np.int64)
    counts = np.bincount(ids, minlength=num_segments).astype(np.float64)
    if np.any(counts == 0):
        raise ValueError("every segment must contain at least one row")
    sums = np.zeros((num_segments, a.shape[1]))
    np.add.at(sums, ids, a.values)
    out = Tensor(sums / counts[:, None])

    def bwd(g):
        _accumulate(a, g[ids] / counts[ids, None])

    _record(out, (a,), bwd)
    return out


def mean_rows(a: Tensor) -> Tensor:
    n = a.shape[0]
    out = Tensor(a.values.mean(axis=0, keepdims=True))

    def bwd(g):
        _accumulate(a, np.repeat(g / n, n, axis=0))

    _record(out, (a,), bwd)
    return out


def total_sum(a: Tensor) -> Tensor:
    out = Tensor([[a.values.sum()]])

    def bwd(g):
        _accumulate(a, np.full_like(a.values, g[0, 0]))

    _record(out, (a,), bwd)
    return out


def minimum(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"minimum: shapes {a.shape} and {b.shape} differ")
    take_a = a.values <= b.values
    out = Tensor(np.where(take_a, a.values, b.values))

    def bwd(g):
        _accumulate(a, g * take_a)
        _accumulate(b, g * ~take_a)

    _record(out, (a, b), bwd)
    return out


def clip_values(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp to [lo, hi]; gradient is zero outside the open interval."""
    inside = (a.values > lo) & (a.values < hi)
    out = Tensor(np.clip(a.values, lo, hi))

    def bwd(g):
        _accumulate(a, g * inside)

    _record(out, (a,), bwd)
    return out
