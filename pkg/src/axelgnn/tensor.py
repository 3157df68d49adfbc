"""Dense 2-D tensors with a reverse-mode differentiation tape.

Every value is a float64 matrix. Operations executed inside an active
:class:`Tape` context are recorded together with their backward rule;
:func:`backward` replays the tape in reverse and accumulates gradients
into the leaf tensors that requested them.

    >>> x = Tensor([[1.0, 2.0, 3.0]], requires_grad=True)
    >>> with Tape() as tape:
    ...     loss = tsum(mul(x, x))
    >>> backward(loss, tape)
    >>> x.grad
    array([[2., 4., 6.]])
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

__all__ = [
    "Tensor", "Tape", "backward", "check_gradients", "zero_grad",
    "add", "sub", "mul", "neg", "scale", "matmul", "sigmoid", "tanh", "relu",
    "exp", "absolute", "cosine_rows", "tsum", "mean", "log_softmax",
    "concat_cols", "slice_cols", "take_rows", "gather_rows", "spmm", "pick",
    "dropout",
]

_SIG_LO = np.finfo(np.float64).tiny
_SIG_HI = np.nextafter(1.0, 0.0)


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class Tensor:
    """A float64 matrix that can take part in differentiation."""

    __slots__ = ("data", "grad", "requires_grad", "_is_leaf")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ShapeError(f"Tensor must be 2-D, got ndim={arr.ndim}")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._is_leaf = True

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.data[0, 0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class Tape:
    """Ordered record of differentiable operations.

    Use as a context manager; operations whose inputs require gradients are
    recorded while the tape is active. A tape supports exactly one backward
    pass until :meth:`clear` is called.
    """

    _stack: list["Tape"] = []

    def __init__(self):
        self.ops: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []
        self.consumed = False

    def __enter__(self) -> "Tape":
        Tape._stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        Tape._stack.remove(self)

    def __len__(self) -> int:
        return len(self.ops)

    def clear(self) -> None:
        self.ops.clear()
        self.consumed = False

    @staticmethod
    def active() -> "Tape | None":
        return Tape._stack[-1] if Tape._stack else None


def _record(out_data: np.ndarray, inputs: tuple[Tensor, ...], rule: Callable) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = out_data
    out.grad = None
    out._is_leaf = False
    tape = Tape.active()
    out.requires_grad = tape is not None and any(t.requires_grad for t in inputs)
    if out.requires_grad:
        tape.ops.append((out, inputs, rule))
    return out


def backward(loss: Tensor, tape: Tape | None = None) -> None:
    """Populate ``.grad`` on every leaf reachable from the scalar ``loss``.

    Leaf gradients accumulate into any existing ``.grad``; call
    :func:`zero_grad` between steps.
    """
    if loss.shape != (1, 1):
        raise ValueError(f"backward() needs a scalar (1x1) loss, got {loss.shape}")
    if tape is None:
        tape = Tape.active()
    if tape is None:
        raise RuntimeError("backward() needs the tape the loss was recorded on")
    if tape.consumed:
        raise RuntimeError("tape already consumed by a backward pass; clear() it first")
    tape.consumed = True
    if not loss.requires_grad:
        return
    grads: dict[int, np.ndarray] = {id(loss): np.ones((1, 1))}
    for out, inputs, rule in reversed(tape.ops):
        g = grads.pop(id(out), None)
        if g is None:
            continue
        for inp, gi in zip(inputs, rule(g)):
            if gi is None or not inp.requires_grad:
                continue
            if inp._is_leaf:
                inp.grad = gi.copy() if inp.grad is None else inp.grad + gi
            else:
                key = id(inp)
                grads[key] = gi if key not in grads else grads[key] + gi


def zero_grad(params: Sequence[Tensor]) -> None:
    for p in params:
        p.grad = None


def _unbroadcast(g: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    if g.shape == shape:
        return g
    if shape[0] == 1 and g.shape[0] != 1:
        g = g.sum(axis=0, keepdims=True)
    if shape[1] == 1 and g.shape[1] != 1:
        g = g.sum(axis=1, keepdims=True)
    return g


def _check_broadcast(a: Tensor, b: Tensor, name: str) -> None:
    for da, db in zip(a.shape, b.shape):
        if da != db and da != 1 and db != 1:
            raise ShapeError(f"{name}: cannot broadcast {a.shape} with {b.shape}")


# ---------------------------------------------------------------- elementwise

def add(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "add")
    sa, sb = a.shape, b.shape
    return _record(a.data + b.data, (a, b),
                   lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "sub")
    sa, sb = a.shape, b.shape
    return _record(a.data - b.data, (a, b),
                   lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Hadamard product with row/column broadcasting."""
    _check_broadcast(a, b, "mul")
    ad, bd = a.data, b.data

    def rule(g):
        ga = _unbroadcast(g * bd, ad.shape) if a.requires_grad else None
        gb = _unbroadcast(g * ad, bd.shape) if b.requires_grad else None
        return ga, gb

    return _record(ad * bd, (a, b), rule)


def neg(a: Tensor) -> Tensor:
    return _record(-a.data, (a,), lambda g: (-g,))


def scale(a: Tensor, c: float) -> Tensor:
    return _record(a.data * c, (a,), lambda g: (g * c,))


def sigmoid(a: Tensor) -> Tensor:
    # clipped so the output stays strictly inside (0, 1) even when saturated
    y = np.clip(expit(a.data), _SIG_LO, _SIG_HI)
    return _record(y, (a,), lambda g: (g * y * (1.0 - y),))


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    return _record(y, (a,), lambda g: (g * (1.0 - y * y),))


def relu(a: Tensor) -> Tensor:
    m = a.data > 0
    return _record(a.data * m, (a,), lambda g: (g * m,))


def exp(a: Tensor) -> Tensor:
    y = np.exp(a.data)
    return _record(y, (a,), lambda g: (g * y,))


def absolute(a: Tensor) -> Tensor:
    s = np.sign(a.data)
    return _record(np.abs(a.data), (a,), lambda g: (g * s,))


# ---------------------------------------------------------------- linear algebra

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dims differ, {a.shape} x {b.shape}")
    ad, bd = a.data, b.data
    return _record(ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g))


def spmm(s: sp.spmatrix, a: Tensor, s_t: sp.spmatrix | None = None) -> Tensor:
    """Left-multiply by a constant sparse matrix; ``s_t`` is an optional cached transpose."""
    if s.shape[1] != a.shape[0]:
        raise ShapeError(f"spmm: inner dims differ, {s.shape} x {a.shape}")

    def rule(g):
        st = s.T.tocsr() if s_t is None else s_t
        return (np.asarray(st @ g),)

    return _record(np.asarray(s @ a.data), (a,), rule)


def cosine_rows(a: Tensor, b: Tensor, eps: float = 1e-8) -> Tensor:
    """Row-wise cosine similarity ``a_i . b_i / (|a_i| |b_i| + eps)`` as an n x 1 column."""
    if a.shape != b.shape:
        raise ShapeError(f"cosine_rows: shapes differ, {a.shape} vs {b.shape}")
    if eps <= 0:
        raise ValueError("eps must be positive")
    ad, bd = a.data, b.data
    dot = np.einsum("ij,ij->i", ad, bd)[:, None]
    na = np.sqrt(np.einsum("ij,ij->i", ad, ad))[:, None]
    nb = np.sqrt(np.einsum("ij,ij->i", bd, bd))[:, None]
    den = na * nb + eps
    y = dot / den

    def rule(g):
        # d|a|/da = a/|a|, taken as 0 on zero rows
        q = g * dot / (den * den)
        gd = g / den
        ga = gb = None
        if a.requires_grad:
            ca = np.divide(q * nb, na, out=np.zeros_like(na), where=na > 0)
            ga = gd * bd - ca * ad
        if b.requires_grad:
            cb = np.divide(q * na, nb, out=np.zeros_like(nb), where=nb > 0)
            gb = gd * ad - cb * bd
        return ga, gb

    return _record(y, (a, b), rule)


# ---------------------------------------------------------------- reductions

def tsum(a: Tensor) -> Tensor:
    shape = a.shape
    return _record(np.array([[a.data.sum()]]), (a,), lambda g: (np.full(shape, g[0, 0]),))


def mean(a: Tensor) -> Tensor:
    shape, n = a.shape, a.data.size
    return _record(np.array([[a.data.mean()]]), (a,), lambda g: (np.full(shape, g[0, 0] / n),))


def log_softmax(a: Tensor) -> Tensor:
    z = a.data - a.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    y = z - lse
    sm = np.exp(y)
    return _record(y, (a,), lambda g: (g - sm * g.sum(axis=1, keepdims=True),))


# ---------------------------------------------------------------- indexing

def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    rows = {p.shape[0] for p in parts}
    if len(rows) != 1:
        raise ShapeError(f"concat_cols: row counts differ {sorted(rows)}")
    bounds = np.cumsum([0] + [p.shape[1] for p in parts])
    return _record(np.concatenate([p.data for p in parts], axis=1), tuple(parts),
                   lambda g: tuple(g[:, bounds[i]:bounds[i + 1]] for i in range(len(parts))))


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    if not 0 <= start < stop <= a.shape[1]:
        raise ShapeError(f"slice_cols: bad range [{start}, {stop}) for {a.shape}")
    shape = a.shape

    def rule(g):
        out = np.zeros(shape)
        out[:, start:stop] = g
        return (out,)

    return _record(a.data[:, start:stop], (a,), rule)


def take_rows(a: Tensor, rows) -> Tensor:
    """Select rows by boolean mask or integer index; duplicates accumulate on backward."""
    idx = np.flatnonzero(rows) if np.asarray(rows).dtype == bool else np.asarray(rows, dtype=np.int64)
    shape = a.shape

    def rule(g):
        out = np.zeros(shape)
        np.add.at(out, idx, g)
        return (out,)

    return _record(a.data[idx], (a,), rule)


gather_rows = take_rows


def pick(a: Tensor, cols) -> Tensor:
    """Column ``cols[i]`` of row ``i``, returned as an n x 1 column."""
    cols = np.asarray(cols, dtype=np.int64)
    if cols.shape != (a.shape[0],):
        raise ShapeError(f"pick: need one column index per row, got {cols.shape}")
    rows = np.arange(a.shape[0])
    shape = a.shape

    def rule(g):
        out = np.zeros(shape)
        out[rows, cols] = g[:, 0]
        return (out,)

    return _record(a.data[rows, cols][:, None], (a,), rule)


def dropout(a: Tensor, p: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout: zero with probability ``p``, rescale survivors by 1/(1-p)."""
    if p <= 0.0:
        return a
    if p >= 1.0:
        raise ValueError("dropout rate must be < 1")
    m = (rng.random(a.shape) >= p) / (1.0 - p)
    return _record(a.data * m, (a,), lambda g: (g * m,))


# ---------------------------------------------------------------- checking

def check_gradients(f: Callable, x, h: float = 1e-5) -> float:
    """Max relative error between autodiff and central-difference gradients.

    ``x`` is a Tensor or a list of Tensors; ``f`` receives it unchanged and
    must return a 1x1 Tensor. The error for each coordinate is
    ``|a - n| / max(1, |a|, |n|)``.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    xs = [x] if isinstance(x, Tensor) else list(x)
    saved = [(t.requires_grad, t.grad) for t in xs]
    for t in xs:
        t.data = np.ascontiguousarray(t.data)
        t.requires_grad = True
        t.grad = None
    try:
        with Tape() as tape:
            loss = f(x)
        backward(loss, tape)
        analytic = [t.grad if t.grad is not None else np.zeros(t.shape) for t in xs]
        worst = 0.0
        for t, a in zip(xs, analytic):
            flat = t.data.reshape(-1)
            af = a.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                fp = f(x).item()
                flat[i] = orig - h
                fm = f(x).item()
                flat[i] = orig
                num = (fp - fm) / (2.0 * h)
                err = abs(af[i] - num) / max(1.0, abs(af[i]), abs(num))
                worst = max(worst, err)
        return worst
    finally:
        for t, (rg, gr) in zip(xs, saved):
            t.requires_grad = rg
            t.grad = gr
