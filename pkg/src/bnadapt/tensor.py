"""Dense float64 tensors with tape-based reverse-mode differentiation.

Values are numpy arrays under the hood. A :class:`DiffTape` records every
primitive operation touching a tracked tensor, so a scalar loss can later be
differentiated with respect to a chosen set of leaf tensors. Anything not
registered as a leaf enters the tape as a constant and receives no gradient,
which keeps the trace small when only a handful of coefficients are learnable.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .exceptions import (
    EmptyBatchError,
    NonScalarLossError,
    NumericError,
    ShapeError,
)


class Tensor:
    """A dense float64 array, optionally tracked on a DiffTape.

    ``data`` is always a C-contiguous (row-major) float64 ndarray. ``tape``
    and ``node`` are set only for tracked tensors; plain value tensors have
    both as None.
    """

    __slots__ = ("data", "tape", "node")

    def __init__(self, data, tape: "DiffTape | None" = None, node: int | None = None):
        arr = np.asarray(data, dtype=np.float64)
        if not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.tape = tape
        self.node = node

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def tracked(self) -> bool:
        return self.tape is not None

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        tag = f", node={self.node}" if self.tracked else ""
        return f"Tensor(shape={self.shape}{tag})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


class DiffTape:
    """Append-only trace of primitive ops for one reverse sweep.

    Nodes are integer ids handed out in execution order, so every node's
    inputs reference strictly earlier ids and a single reverse pass visits
    each node exactly once.
    """

    def __init__(self):
        # per node: tuple of (parent id, vector-Jacobian product) pairs
        self._parents: list[tuple[tuple[int, Callable[[np.ndarray], np.ndarray]], ...]] = []
        self._shapes: list[tuple[int, ...]] = []
        self._leaves: list[int] = []

    def __len__(self) -> int:
        return len(self._parents)

    @property
    def leaves(self) -> tuple[int, ...]:
        return tuple(self._leaves)

    def _append(self, shape, parents) -> int:
        self._parents.append(tuple(parents))
        self._shapes.append(tuple(shape))
        return len(self._parents) - 1

    def leaf(self, value) -> Tensor:
        """Register ``value`` as a differentiable leaf and return it tracked."""
        t = Tensor(value)
        node = self._append(t.shape, ())
        self._leaves.append(node)
        return Tensor(t.data, self, node)


def backward(tape: DiffTape, loss: Tensor) -> dict[int, Tensor]:
    """Reverse sweep: gradient of a scalar loss for every leaf on the tape.

    Leaves the loss does not depend on get zero gradients. The sweep is a
    single pass from the loss node down to node 0, so repeated calls on the
    same tape are bit-for-bit identical.
    """
    if loss.data.size != 1:
        raise NonScalarLossError(f"loss must be scalar, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {}
    if loss.tape is tape and loss.node is not None:
        grads[loss.node] = np.ones_like(loss.data)
        for nid in range(loss.node, -1, -1):
            g = grads.get(nid)
            if g is None:
                continue
            for pid, vjp in tape._parents[nid]:
                contrib = vjp(g)
                if pid in grads:
                    grads[pid] = grads[pid] + contrib
                else:
                    grads[pid] = contrib
    return {
        leaf: Tensor(grads.get(leaf, np.zeros(tape._shapes[leaf])))
        for leaf in tape._leaves
    }


def finite_diff(loss_fn: Callable[[np.ndarray], float], leaf, h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient estimate, (f(x+h) - f(x-h)) / 2h per element.

    Independent of the tape; used as the oracle that backward() is checked
    against.
    """
    if h <= 0:
        raise ValueError("step h must be positive")
    x = np.array(np.asarray(leaf, dtype=np.float64))
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        xp = x.copy()
        xp[idx] += h
        xm = x.copy()
        xm[idx] -= h
        grad[idx] = (loss_fn(xp) - loss_fn(xm)) / (2.0 * h)
    return grad


# ---------------------------------------------------------------------------
# primitive op machinery


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum gradient over axes that were expanded by numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _result(data: np.ndarray, contribs) -> Tensor:
    """Wrap an op result, recording it when any input is tracked.

    ``contribs`` is a sequence of (input tensor, vjp) pairs; vjps of
    untracked inputs are dropped.
    """
    tape = None
    for t, _ in contribs:
        if t.tape is not None:
            if tape is not None and t.tape is not tape:
                raise ValueError("operands live on different tapes")
            tape = t.tape
    if tape is None:
        return Tensor(data)
    parents = tuple((t.node, vjp) for t, vjp in contribs if t.tape is not None)
    node = tape._append(np.shape(data), parents)
    return Tensor(data, tape, node)


# ---------------------------------------------------------------------------
# elementwise ops


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data + b.data
    return _result(out, [
        (a, lambda g: _unbroadcast(g, a.data.shape)),
        (b, lambda g: _unbroadcast(g, b.data.shape)),
    ])


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data - b.data
    return _result(out, [
        (a, lambda g: _unbroadcast(g, a.data.shape)),
        (b, lambda g: _unbroadcast(-g, b.data.shape)),
    ])


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data * b.data
    return _result(out, [
        (a, lambda g: _unbroadcast(g * b.data, a.data.shape)),
        (b, lambda g: _unbroadcast(g * a.data, b.data.shape)),
    ])


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data
    return _result(out, [
        (a, lambda g: _unbroadcast(g / b.data, a.data.shape)),
        (b, lambda g: _unbroadcast(-g * out / b.data, b.data.shape)),
    ])


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _result(-a.data, [(a, lambda g: -g)])


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _result(np.where(mask, a.data, 0.0), [(a, lambda g: g * mask)])


def leaky_relu(a, negative_slope: float) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    out = np.where(mask, a.data, negative_slope * a.data)
    return _result(out, [(a, lambda g: g * np.where(mask, 1.0, negative_slope))])


def log(a) -> Tensor:
    a = as_tensor(a)
    return _result(np.log(a.data), [(a, lambda g: g / a.data)])


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    if np.any(a.data < 0):
        raise NumericError("sqrt of a negative value")
    out = np.sqrt(a.data)
    return _result(out, [(a, lambda g: g * 0.5 / out)])


def clamp_min(a, lo: float) -> Tensor:
    a = as_tensor(a)
    mask = a.data >= lo
    return _result(np.maximum(a.data, lo), [(a, lambda g: g * mask)])


# ---------------------------------------------------------------------------
# reductions and structural ops


def sum_all(a) -> Tensor:
    a = as_tensor(a)
    out = np.asarray(a.data.sum())
    return _result(out, [(a, lambda g: np.full(a.data.shape, g))])


def sum_rows(a) -> Tensor:
    """Column sums of a 2-D tensor: (n, c) -> (c,)."""
    a = as_tensor(a)
    if a.data.ndim != 2:
        raise ShapeError(f"sum_rows needs a 2-D tensor, got shape {a.shape}")
    n = a.data.shape[0]
    out = a.data.sum(axis=0)
    return _result(out, [(a, lambda g: np.broadcast_to(g, (n,) + g.shape).copy())])


def vstack(parts: Sequence) -> Tensor:
    """Stack 2-D tensors along axis 0, splitting the gradient back apart."""
    parts = [as_tensor(p) for p in parts]
    for p in parts:
        if p.data.ndim != 2:
            raise ShapeError(f"vstack needs 2-D tensors, got shape {p.shape}")
    out = np.concatenate([p.data for p in parts], axis=0)
    contribs = []
    offset = 0
    for p in parts:
        rows = p.data.shape[0]
        start = offset

        def make_vjp(s=start, r=rows):
            return lambda g: g[s:s + r].copy()

        contribs.append((p, make_vjp()))
        offset += rows
    return _result(out, contribs)


def matmul(a, b) -> Tensor:
    """Standard 2-D matrix product with shape checking."""
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(
            f"matmul needs 2-D operands, got shapes {a.shape} and {b.shape}")
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(
            f"matmul inner dimensions disagree: {a.shape} x {b.shape}")
    out = a.data @ b.data
    return _result(out, [
        (a, lambda g: g @ b.data.T),
        (b, lambda g: a.data.T @ g),
    ])


def batch_stats(x) -> tuple[Tensor, Tensor]:
    """Per-channel mean and biased (divide by n) variance of a 2-D batch."""
    x = as_tensor(x)
    if x.data.ndim != 2:
        raise ShapeError(f"batch_stats needs a 2-D tensor, got shape {x.shape}")
    n = x.data.shape[0]
    if n == 0:
        raise EmptyBatchError("batch_stats needs at least one row")
    mean = div(sum_rows(x), float(n))
    diff = sub(x, mean)
    var = div(sum_rows(mul(diff, diff)), float(n))
    return mean, var


def softmax(logits) -> Tensor:
    """Row-wise softmax of a 2-D tensor, computed with max subtraction."""
    x = as_tensor(logits)
    if x.data.ndim != 2:
        raise ShapeError(f"softmax needs a 2-D tensor, got shape {x.shape}")
    if not np.all(np.isfinite(x.data)):
        raise NumericError("softmax received non-finite logits")
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=1, keepdims=True)

    def vjp(g):
        dot = (g * s).sum(axis=1, keepdims=True)
        return s * (g - dot)

    return _result(s, [(x, vjp)])


def row_max(a) -> Tensor:
    """Per-row maximum; ties route the gradient to the first maximal index."""
    a = as_tensor(a)
    if a.data.ndim != 2:
        raise ShapeError(f"row_max needs a 2-D tensor, got shape {a.shape}")
    idx = np.argmax(a.data, axis=1)
    rows = np.arange(a.data.shape[0])
    out = a.data[rows, idx]

    def vjp(g):
        grad = np.zeros_like(a.data)
        grad[rows, idx] = g
        return grad

    return _result(out, [(a, vjp)])


def row_min(a) -> Tensor:
    """Per-row minimum; ties route the gradient to the first minimal index."""
    a = as_tensor(a)
    if a.data.ndim != 2:
        raise ShapeError(f"row_min needs a 2-D tensor, got shape {a.shape}")
    idx = np.argmin(a.data, axis=1)
    rows = np.arange(a.data.shape[0])
    out = a.data[rows, idx]

    def vjp(g):
        grad = np.zeros_like(a.data)
        grad[rows, idx] = g
        return grad

    return _result(out, [(a, vjp)])
