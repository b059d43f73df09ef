"""Reverse-mode automatic differentiation on an explicit tape.

A :class:`Tape` records every primitive applied to tracked values, in
execution order, together with a closure computing the vector-Jacobian
product. :func:`backward` walks the tape once in reverse.

Operands may be :class:`Var` (tracked) or plain arrays/scalars (constants).
Elementwise binary ops follow numpy broadcasting and reduce gradients back
to each operand's shape.

Example::

    tape = Tape()
    x = tape.param(np.array(3.0))
    grads = backward(tape, x * x)
    grads[x]  # 6.0
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

from ..errors import ContractError, DimensionError, DomainError
from . import linalg

VJP = Callable[[np.ndarray], Sequence[np.ndarray | None]]


class Var:
    """A tracked value: a float64 array plus its position on a tape."""

    __slots__ = ("value", "tape", "index", "name")
    __array_priority__ = 100.0

    def __init__(self, value: np.ndarray, tape: "Tape", index: int, name: str | None = None):
        self.value = value
        self.tape = tape
        self.index = index
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Var{label}(shape={self.shape}, index={self.index})"

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

    def __rmatmul__(self, other):
        return matmul(other, self)


class Tape:
    """Ordered record of primitive operations."""

    def __init__(self):
        self._parents: list[tuple[int | None, ...]] = []
        self._vjps: list[VJP | None] = []

    def __len__(self) -> int:
        return len(self._vjps)

    def param(self, value, name: str | None = None) -> Var:
        """Register a leaf whose gradient is wanted."""
        arr = np.array(value, dtype=np.float64)
        return self._push(arr, (), None, name)

    def _push(self, value, parents, vjp, name=None) -> Var:
        self._parents.append(parents)
        self._vjps.append(vjp)
        return Var(value, self, len(self._vjps) - 1, name)


class Gradients:
    """Gradient lookup returned by :func:`backward`.

    Indexing with a :class:`Var` never fails: values the loss does not depend
    on get an all-zero array of matching shape.
    """

    def __init__(self, grads: list[np.ndarray | None]):
        self._grads = grads

    def __getitem__(self, var: Var) -> np.ndarray:
        g = self._grads[var.index] if var.index < len(self._grads) else None
        if g is None:
            return np.zeros_like(var.value)
        return np.asarray(g, dtype=np.float64).reshape(var.shape)

    def reached(self, var: Var) -> bool:
        return var.index < len(self._grads) and self._grads[var.index] is not None


def backward(tape: Tape, loss: Var) -> Gradients:
    """Accumulate d(loss)/d(v) for every value recorded on ``tape``."""
    if not isinstance(loss, Var) or loss.tape is not tape:
        raise ContractError("loss must be a Var recorded on this tape")
    if loss.value.size != 1:
        raise ContractError(f"loss must be scalar, got shape {loss.shape}")
    grads: list[np.ndarray | None] = [None] * len(tape)
    grads[loss.index] = np.ones_like(loss.value)
    for idx in range(loss.index, -1, -1):
        g = grads[idx]
        vjp = tape._vjps[idx]
        if g is None or vjp is None:
            continue
        for parent, pg in zip(tape._parents[idx], vjp(g)):
            if parent is None or pg is None:
                continue
            grads[parent] = pg if grads[parent] is None else grads[parent] + pg
    return Gradients(grads)


# --------------------------------------------------------------------------
# helpers


def value_of(x) -> np.ndarray:
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=np.float64)


def _tape_of(*xs) -> Tape | None:
    tape = None
    for x in xs:
        if isinstance(x, Var):
            if tape is not None and x.tape is not tape:
                raise ContractError("operands live on different tapes")
            tape = x.tape
    return tape


def _idx(x) -> int | None:
    return x.index if isinstance(x, Var) else None


def _record(value: np.ndarray, inputs: Sequence, vjp: VJP):
    tape = _tape_of(*inputs)
    if tape is None:
        return value
    return tape._push(value, tuple(_idx(x) for x in inputs), vjp)


def unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` over the axes that broadcasting added relative to ``shape``."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def stop_gradient(x) -> np.ndarray:
    return value_of(x)


# --------------------------------------------------------------------------
# arithmetic


def add(a, b):
    av, bv = value_of(a), value_of(b)
    return _record(av + bv, (a, b), lambda g: (unbroadcast(g, av.shape), unbroadcast(g, bv.shape)))


def sub(a, b):
    av, bv = value_of(a), value_of(b)
    return _record(av - bv, (a, b), lambda g: (unbroadcast(g, av.shape), unbroadcast(-g, bv.shape)))


def mul(a, b):
    av, bv = value_of(a), value_of(b)
    return _record(av * bv, (a, b), lambda g: (unbroadcast(g * bv, av.shape), unbroadcast(g * av, bv.shape)))


def div(a, b):
    av, bv = value_of(a), value_of(b)
    out = av / bv
    return _record(out, (a, b), lambda g: (unbroadcast(g / bv, av.shape), unbroadcast(-g * out / bv, bv.shape)))


def neg(a):
    return _record(-value_of(a), (a,), lambda g: (-g,))


def square(a):
    av = value_of(a)
    return _record(av * av, (a,), lambda g: (2.0 * g * av,))


def matmul(a, b):
    """Matrix product over the last two axes, with leading batch axes broadcast."""
    av, bv = value_of(a), value_of(b)
    if av.ndim < 2 or bv.ndim < 2 or av.shape[-1] != bv.shape[-2]:
        raise DimensionError(f"matmul shape mismatch: {av.shape} x {bv.shape}")
    out = np.matmul(av, bv)

    need_a, need_b = isinstance(a, Var), isinstance(b, Var)

    def vjp(g):
        ga = unbroadcast(np.matmul(g, np.swapaxes(bv, -1, -2)), av.shape) if need_a else None
        gb = unbroadcast(np.matmul(np.swapaxes(av, -1, -2), g), bv.shape) if need_b else None
        return ga, gb

    return _record(out, (a, b), vjp)


# --------------------------------------------------------------------------
# elementwise nonlinearities


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return expit(x)


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def elementwise(tag: str, x):
    """Apply a named scalar function entrywise.

    Tags: ``elu`` (alpha = 1), ``sigmoid``, ``tanh``, ``exp``, ``log``,
    ``relu``, ``softplus``, ``log_sigmoid``.
    """
    xv = value_of(x)
    if tag == "elu":
        neg_part = np.expm1(np.minimum(xv, 0.0))
        out = np.where(xv > 0, xv, neg_part)
        deriv = np.where(xv > 0, 1.0, neg_part + 1.0)
    elif tag == "sigmoid":
        out = _sigmoid(xv)
        deriv = out * (1.0 - out)
    elif tag == "tanh":
        out = np.tanh(xv)
        deriv = 1.0 - out * out
    elif tag == "exp":
        out = np.exp(xv)
        deriv = out
    elif tag == "log":
        if np.any(xv <= 0):
            bad = tuple(int(i) for i in np.argwhere(xv <= 0)[0])
            raise DomainError(f"log of non-positive entry at index {bad}")
        out = np.log(xv)
        deriv = 1.0 / xv
    elif tag == "relu":
        out = np.maximum(xv, 0.0)
        deriv = (xv > 0).astype(np.float64)
    elif tag == "softplus":
        out = _softplus(xv)
        deriv = _sigmoid(xv)
    elif tag == "log_sigmoid":
        out = -_softplus(-xv)
        deriv = _sigmoid(-xv)
    else:
        raise ValueError(f"unknown elementwise op {tag!r}")
    return _record(out, (x,), lambda g: (g * deriv,))


def elu(x):
    return elementwise("elu", x)


def sigmoid(x):
    return elementwise("sigmoid", x)


def tanh(x):
    return elementwise("tanh", x)


def exp(x):
    return elementwise("exp", x)


def log(x):
    return elementwise("log", x)


def relu(x):
    return elementwise("relu", x)


def log_sigmoid(x):
    return elementwise("log_sigmoid", x)


# --------------------------------------------------------------------------
# reductions and layout


def sum(x, axis=None, keepdims: bool = False):  # noqa: A001 - mirrors numpy
    xv = value_of(x)
    out = np.sum(xv, axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, xv.shape).copy(),)

    return _record(np.asarray(out, dtype=np.float64), (x,), vjp)


def mean(x, axis=None, keepdims: bool = False):
    xv = value_of(x)
    if axis is None:
        count = xv.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        count = int(np.prod([xv.shape[a] for a in axes]))
    return mul(sum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def reshape(x, shape):
    xv = value_of(x)
    return _record(xv.reshape(shape), (x,), lambda g: (g.reshape(xv.shape),))


def transpose(x):
    """Swap the last two axes."""
    return _record(np.swapaxes(value_of(x), -1, -2), (x,), lambda g: (np.swapaxes(g, -1, -2),))


def concat(xs: Sequence, axis: int = -1):
    vals = [value_of(x) for x in xs]
    out = np.concatenate(vals, axis=axis)
    splits = np.cumsum([v.shape[axis] for v in vals])[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return _record(out, tuple(xs), vjp)


def broadcast_to(x, shape):
    xv = value_of(x)
    return _record(np.broadcast_to(xv, shape).copy(), (x,), lambda g: (unbroadcast(g, xv.shape),))


# --------------------------------------------------------------------------
# structured ops


def masked_row_softmax(logits, mask):
    """Softmax over the unmasked entries of each row.

    ``mask`` is a boolean (or 0/1) array broadcastable to ``logits``. Masked
    entries are exactly zero; a row with no unmasked entry is all zero.
    """
    lv = value_of(logits)
    m = np.broadcast_to(np.asarray(mask, dtype=bool), lv.shape)
    shifted = np.where(m, lv, -np.inf)
    row_max = np.max(shifted, axis=-1, keepdims=True)
    row_max = np.where(np.isfinite(row_max), row_max, 0.0)
    e = np.where(m, np.exp(np.where(m, lv, 0.0) - row_max), 0.0)
    total = e.sum(axis=-1, keepdims=True)
    out = np.divide(e, total, out=np.zeros_like(e), where=total > 0)

    def vjp(g):
        inner = np.sum(g * out, axis=-1, keepdims=True)
        return (out * (g - inner), None)

    return _record(out, (logits, mask), vjp)


def unit_lt_solve(w, rhs, check: bool = True):
    """Solve ``w @ y = rhs`` by forward substitution (``w`` unit lower triangular).

    Differentiable with respect to the strictly lower part of ``w`` and to
    ``rhs``; diagonal and upper entries are structural and get zero gradient.
    """
    wv, rv = value_of(w), value_of(rhs)
    y = linalg.forward_substitution(wv, rv, check=check)

    def vjp(g):
        g_rhs = linalg.transposed_back_substitution(wv, g)
        g_w = -np.matmul(g_rhs, np.swapaxes(y, -1, -2))
        g_w = np.tril(g_w, -1)
        return unbroadcast(g_w, wv.shape), unbroadcast(g_rhs, rv.shape)

    return _record(y, (w, rhs), vjp)
