"""Dense rank-2 tensor engine with reverse-mode differentiation.

All model math runs on numpy arrays wrapped in :class:`Tensor`; every
differentiable op appends a record to a :class:`Tape`, and
:func:`backward` replays the records in reverse. float32 is the training
dtype; tests switch to float64 where finite-difference checks need the
precision. Sparse adjacency products use scipy CSR kernels, which are
sequential and therefore bit-deterministic.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .errors import IOHunterError

SCORE_CLAMP = 1e-7  # keeps log() in the cross-entropy total


class ShapeMismatch(IOHunterError):
    def __init__(self, op: str, *shapes: tuple) -> None:
        super().__init__(f"{op}: incompatible shapes {' vs '.join(str(s) for s in shapes)}")


class Tensor:
    """A rank <= 2 dense array, optionally receiving a gradient."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.ndim > 2:
            raise ShapeMismatch("tensor", arr.shape)
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self) -> str:  # pragma: no cover
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, grad={self.requires_grad})"


@dataclass
class _Record:
    output: Tensor
    inputs: tuple[Tensor, ...]
    backward_fns: tuple[Callable[[np.ndarray], np.ndarray], ...]


@dataclass
class Tape:
    """Ordered log of ops from one forward pass; replayed once backward."""

    records: list[_Record] = field(default_factory=list)

    def record(self, output: Tensor, inputs: tuple[Tensor, ...], backward_fns) -> None:
        self.records.append(_Record(output, inputs, tuple(backward_fns)))


def _emit(tape: Optional[Tape], out: Tensor, inputs, backward_fns) -> Tensor:
    if tape is not None:
        tape.record(out, tuple(inputs), backward_fns)
    return out


def matmul(tape: Optional[Tape], a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatch("matmul", a.shape, b.shape)
    out = Tensor(a.data @ b.data)
    a_data, b_data = a.data, b.data
    return _emit(tape, out, (a, b), (lambda g: g @ b_data.T, lambda g: a_data.T @ g))


def add_bias(tape: Optional[Tape], x: Tensor, b: Tensor) -> Tensor:
    if b.data.ndim != 1 or x.shape[-1] != b.shape[0]:
        raise ShapeMismatch("add_bias", x.shape, b.shape)
    out = Tensor(x.data + b.data)
    return _emit(tape, out, (x, b), (lambda g: g, lambda g: g.sum(axis=0) if g.ndim == 2 else g))


def add(tape: Optional[Tape], a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeMismatch("add", a.shape, b.shape)
    out = Tensor(a.data + b.data)
    return _emit(tape, out, (a, b), (lambda g: g, lambda g: g))


def relu(tape: Optional[Tape], x: Tensor) -> Tensor:
    mask = x.data > 0
    out = Tensor(np.where(mask, x.data, 0))
    return _emit(tape, out, (x,), (lambda g: g * mask,))


def sigmoid(tape: Optional[Tape], x: Tensor) -> Tensor:
    # Two-branch form avoids overflow in exp for large |x|.
    d = x.data
    s = np.where(d >= 0, 1.0 / (1.0 + np.exp(-np.abs(d))), np.exp(-np.abs(d)) / (1.0 + np.exp(-np.abs(d))))
    s = s.astype(d.dtype, copy=False)
    out = Tensor(s)
    return _emit(tape, out, (x,), (lambda g: g * s * (1 - s),))


def elementwise_mul(tape: Optional[Tape], a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeMismatch("elementwise_mul", a.shape, b.shape)
    out = Tensor(a.data * b.data)
    a_data, b_data = a.data, b.data
    return _emit(tape, out, (a, b), (lambda g: g * b_data, lambda g: g * a_data))


def concat_rows(tape: Optional[Tape], a: Tensor, b: Tensor) -> Tensor:
    """Concatenate per-row vectors, i.e. along axis 1."""
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[0] != b.shape[0]:
        raise ShapeMismatch("concat_rows", a.shape, b.shape)
    out = Tensor(np.concatenate([a.data, b.data], axis=1))
    da = a.shape[1]
    return _emit(tape, out, (a, b), (lambda g: g[:, :da], lambda g: g[:, da:]))


def dropout(tape: Optional[Tape], x: Tensor, p: float, rng: Optional[np.random.Generator], train: bool) -> Tensor:
    """Inverted dropout; identity when p == 0 or not training."""
    if not train or p == 0.0:
        return x
    if rng is None:
        raise IOHunterError("dropout in training mode requires a seeded generator")
    keep = (rng.random(x.shape) >= p).astype(x.data.dtype)
    scale = np.asarray(1.0 / (1.0 - p), dtype=x.data.dtype)
    out = Tensor(x.data * keep * scale)
    return _emit(tape, out, (x,), (lambda g: g * keep * scale,))


class SparseMatrix:
    """Immutable sparse matrix (CSR) used for graph aggregation."""

    def __init__(self, rows, cols, vals, shape: tuple[int, int]):
        self.shape = shape
        self._csr = sp.csr_matrix((np.asarray(vals, dtype=np.float64), (rows, cols)), shape=shape)
        self._csr_t = self._csr.T.tocsr()

    @classmethod
    def from_csr(cls, csr: sp.csr_matrix) -> "SparseMatrix":
        obj = cls.__new__(cls)
        obj.shape = csr.shape
        obj._csr = csr
        obj._csr_t = csr.T.tocsr()
        return obj

    def dot(self, dense: np.ndarray) -> np.ndarray:
        return (self._csr @ dense).astype(dense.dtype, copy=False)

    def tdot(self, dense: np.ndarray) -> np.ndarray:
        return (self._csr_t @ dense).astype(dense.dtype, copy=False)

    def toarray(self) -> np.ndarray:
        return self._csr.toarray()


def spmm(tape: Optional[Tape], adj: SparseMatrix, x: Tensor) -> Tensor:
    if x.data.ndim != 2 or adj.shape[1] != x.shape[0]:
        raise ShapeMismatch("spmm", adj.shape, x.shape)
    out = Tensor(adj.dot(x.data))
    return _emit(tape, out, (x,), (lambda g: adj.tdot(g),))


def bce_loss(
    tape: Optional[Tape],
    scores: Tensor,
    targets: np.ndarray,
    mask: Optional[np.ndarray] = None,
) -> Tensor:
    """Mean binary cross-entropy over the selected rows.

    Scores are clamped to [SCORE_CLAMP, 1-SCORE_CLAMP] before the log so
    the loss stays finite at the probability extremes; the clamp kills
    the gradient outside that range.
    """
    s = scores.data.reshape(-1)
    y = np.asarray(targets, dtype=s.dtype).reshape(-1)
    if s.shape != y.shape:
        raise ShapeMismatch("bce_loss", scores.shape, y.shape)
    if mask is None:
        sel = np.ones(s.shape[0], dtype=bool)
    else:
        sel = np.asarray(mask, dtype=bool).reshape(-1)
        if sel.shape != s.shape:
            raise ShapeMismatch("bce_loss mask", sel.shape, s.shape)
    m = int(sel.sum())
    if m == 0:
        raise IOHunterError("bce_loss: empty selection")

    eps = SCORE_CLAMP
    sc = np.clip(s, eps, 1.0 - eps)
    per_node = -(y * np.log(sc) + (1.0 - y) * np.log(1.0 - sc))
    loss = Tensor(np.asarray(per_node[sel].mean(), dtype=s.dtype))

    inside = (s > eps) & (s < 1.0 - eps)
    orig_shape = scores.shape

    def grad_scores(g: np.ndarray) -> np.ndarray:
        ds = np.zeros_like(s)
        ds[sel] = (sc[sel] - y[sel]) / (sc[sel] * (1.0 - sc[sel]) * m)
        ds *= inside
        return (g * ds).reshape(orig_shape)

    return _emit(tape, loss, (scores,), (grad_scores,))


def backward(tape: Tape, loss: Tensor) -> None:
    """Populate .grad for every requires_grad tensor reachable from loss."""
    if not tape.records:
        raise IOHunterError("backward called before any forward op was recorded")
    if tape.records[-1].output is not loss and all(r.output is not loss for r in tape.records):
        raise IOHunterError("loss tensor was not produced on this tape")

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for rec in reversed(tape.records):
        g = grads.pop(id(rec.output), None)
        if g is None:
            continue
        for inp, fn in zip(rec.inputs, rec.backward_fns):
            contrib = fn(g)
            key = id(inp)
            if key in grads:
                grads[key] = grads[key] + contrib
            else:
                grads[key] = contrib
            if inp.requires_grad:
                inp.grad = grads[key]


def zero_grads(params) -> None:
    for p in params:
        p.grad = None


@dataclass
class AdamState:
    """First/second moment estimates for one parameter list."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: list[Tensor]) -> "AdamState":
        return cls(
            m=[np.zeros_like(p.data) for p in params],
            v=[np.zeros_like(p.data) for p in params],
        )


def adam_step(params: list[Tensor], grads: list[Optional[np.ndarray]], state: AdamState, lr: float) -> None:
    """One in-place Adam update with bias correction.

    A None gradient is treated as zero: moments decay but the parameter
    does not move. The step counter increments regardless.
    """
    if len(params) != len(state.m):
        raise IOHunterError("adam_step: parameter count does not match optimizer state")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    for i, p in enumerate(params):
        g = grads[i]
        if g is None:
            g = np.zeros_like(p.data)
        g = g.astype(p.data.dtype, copy=False)
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * (g * g)
        m_hat = state.m[i] / bc1
        v_hat = state.v[i] / bc2
        p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + state.eps)
