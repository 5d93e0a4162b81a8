"""Immutable rank-4 tensors (batch, rows, cols, channels) of 64-bit floats.

All operations are pure functions returning new tensors. When a
:class:`~gridloss.autodiff.Tape` is active, each operation also records its
local gradient rule so losses built from these primitives are differentiable.

Binary operations accept two tensors of identical shape, or a tensor and a
scalar (a Python number or a ``(1, 1, 1, 1)`` tensor). No other broadcasting
is performed.
"""

from __future__ import annotations

from enum import IntEnum
from typing import Iterable, Union

import numpy as np

from . import autodiff
from .errors import DomainError, InvalidAxis, NonFiniteOperand, ShapeMismatch

RANK = 4
SCALAR_SHAPE = (1, 1, 1, 1)


class Axis(IntEnum):
    BATCH = 0
    ROWS = 1
    COLS = 2
    CHANNELS = 3


ALL_AXES = (Axis.BATCH, Axis.ROWS, Axis.COLS, Axis.CHANNELS)
SPATIAL = (Axis.ROWS, Axis.COLS)
PER_SAMPLE = (Axis.ROWS, Axis.COLS, Axis.CHANNELS)


def normalize_axes(axes) -> tuple[int, ...]:
    """Turn an axis set (names, ints or Axis members) into sorted ints.

    ``None`` or ``"all"`` means every axis.
    """
    if axes is None or axes == "all":
        return tuple(range(RANK))
    if isinstance(axes, (int, str)):
        axes = (axes,)
    out = []
    for a in axes:
        if isinstance(a, str):
            try:
                a = Axis[a.upper()]
            except KeyError:
                raise InvalidAxis(f"unknown axis name {a!r}") from None
        if isinstance(a, bool) or not isinstance(a, (int, np.integer)):
            raise InvalidAxis(f"invalid axis {a!r}")
        a = int(a)
        if not 0 <= a < RANK:
            raise InvalidAxis(f"axis {a} out of range for rank {RANK}")
        if a in out:
            raise InvalidAxis(f"duplicate axis {a}")
        out.append(a)
    if not out:
        raise InvalidAxis("empty axis set")
    return tuple(sorted(out))


class GridTensor:
    """Dense (batch, rows, cols, channels) array; channel varies fastest."""

    __slots__ = ("_data", "__weakref__")
    __array_ufunc__ = None  # make numpy scalars defer to our operators

    def __init__(self, data):
        arr = _as_rank4(data)
        if not np.all(np.isfinite(arr)):
            raise NonFiniteOperand("GridTensor values must be finite; use GridTensor.unchecked")
        self._data = arr

    @classmethod
    def unchecked(cls, data) -> "GridTensor":
        """Build a tensor that may hold NaN or infinity."""
        return cls._wrap(_as_rank4(data))

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "GridTensor":
        t = object.__new__(cls)
        arr = np.asarray(arr, dtype=np.float64)
        if arr.flags.writeable:
            arr = arr.copy() if arr.base is not None else arr
            arr.flags.writeable = False
        t._data = arr
        return t

    @classmethod
    def scalar(cls, value: float) -> "GridTensor":
        return cls(np.full(SCALAR_SHAPE, float(value)))

    @classmethod
    def filled(cls, shape, value: float) -> "GridTensor":
        return cls(np.full(tuple(shape), float(value)))

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self._data.shape

    @property
    def size(self) -> int:
        return self._data.size

    @property
    def is_scalar(self) -> bool:
        return self._data.shape == SCALAR_SHAPE

    def numpy(self) -> np.ndarray:
        """Read-only view of the underlying array."""
        return self._data

    def item(self) -> float:
        if not self.is_scalar:
            raise ShapeMismatch(f"item() needs a scalar tensor, got shape {self.shape}")
        return float(self._data[0, 0, 0, 0])

    def __float__(self):
        return self.item()

    def __repr__(self):
        if self.is_scalar:
            return f"GridTensor({self.item()!r})"
        return f"GridTensor(shape={self.shape})"

    def __len__(self):
        return self.shape[0]

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return subtract(self, other)

    def __rsub__(self, other):
        return subtract(other, self)

    def __mul__(self, other):
        return multiply(self, other)

    def __rmul__(self, other):
        return multiply(other, self)

    def __truediv__(self, other):
        return divide(self, other)

    def __rtruediv__(self, other):
        return divide(other, self)

    def __neg__(self):
        return negative(self)

    def __pow__(self, exponent):
        return power(self, exponent)


Operand = Union[GridTensor, float, int]


def _as_rank4(data) -> np.ndarray:
    if isinstance(data, GridTensor):
        return data._data
    arr = np.array(data, dtype=np.float64)
    if arr.ndim != RANK:
        raise ShapeMismatch(f"GridTensor needs rank {RANK}, got rank {arr.ndim}; see embed()")
    if min(arr.shape) < 1:
        raise ShapeMismatch(f"every dimension must be >= 1, got {arr.shape}")
    arr.flags.writeable = False
    return arr


def embed(values, checked: bool = True) -> GridTensor:
    """Embed lower-rank data with singleton axes.

    0-D -> (1,1,1,1); 1-D (n,) -> (1,1,n,1); 2-D grid -> (1,rows,cols,1);
    3-D (batch,rows,cols) -> (batch,rows,cols,1); 4-D unchanged.
    """
    arr = np.array(values, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(SCALAR_SHAPE)
    elif arr.ndim == 1:
        arr = arr.reshape(1, 1, -1, 1)
    elif arr.ndim == 2:
        arr = arr[None, :, :, None]
    elif arr.ndim == 3:
        arr = arr[..., None]
    elif arr.ndim != 4:
        raise ShapeMismatch(f"cannot embed rank-{arr.ndim} data")
    return GridTensor(arr) if checked else GridTensor.unchecked(arr)


def as_tensor(x: Operand) -> GridTensor:
    if isinstance(x, GridTensor):
        return x
    return GridTensor.scalar(x)


def _result(data, op, parents=(), backward=None, blocked=False) -> GridTensor:
    out = GridTensor._wrap(data)
    tape = autodiff.current_tape()
    if tape is not None and parents:
        tape.record(out, op, parents, backward, blocked)
    return out


def _reduce_to(grad: np.ndarray, shape) -> np.ndarray:
    if grad.shape == tuple(shape):
        return grad
    return grad.sum().reshape(shape)


def _binary(a: Operand, b: Operand, op, fwd, da, db) -> GridTensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape and not (a.is_scalar or b.is_scalar):
        raise ShapeMismatch(f"{op}: shapes {a.shape} and {b.shape} differ")
    x, y = a._data, b._data
    out = fwd(x, y)

    def backward(g):
        return (_reduce_to(da(g, x, y, out), a.shape), _reduce_to(db(g, x, y, out), b.shape))

    return _result(out, op, (a, b), backward)


def _unary(a: GridTensor, op, fwd, dfn) -> GridTensor:
    x = a._data
    out = fwd(x)
    return _result(out, op, (a,), lambda g: (dfn(g, x, out),))


# -- elementwise -----------------------------------------------------------


def add(a: Operand, b: Operand) -> GridTensor:
    return _binary(a, b, "add", np.add, lambda g, x, y, o: g, lambda g, x, y, o: g)


def subtract(a: Operand, b: Operand) -> GridTensor:
    return _binary(a, b, "subtract", np.subtract, lambda g, x, y, o: g, lambda g, x, y, o: -g)


def multiply(a: Operand, b: Operand) -> GridTensor:
    return _binary(
        a, b, "multiply", np.multiply,
        lambda g, x, y, o: g * y,
        lambda g, x, y, o: g * x,
    )


def divide(a: Operand, b: Operand) -> GridTensor:
    bt = as_tensor(b)
    if np.any(bt._data == 0):
        raise DomainError("division by zero")
    return _binary(
        a, bt, "divide", np.divide,
        lambda g, x, y, o: g / y,
        lambda g, x, y, o: -g * x / (y * y),
    )


def negative(a: GridTensor) -> GridTensor:
    return _unary(a, "negative", np.negative, lambda g, x, o: -g)


def square(a: GridTensor) -> GridTensor:
    return _unary(a, "square", np.square, lambda g, x, o: 2.0 * x * g)


def sqrt(a: GridTensor) -> GridTensor:
    if np.any(a._data < 0):
        raise DomainError("sqrt of a negative value")
    def grad(g, x, o):
        with np.errstate(divide="ignore", invalid="ignore"):
            return g / (2.0 * o)

    return _unary(a, "sqrt", np.sqrt, grad)


def exp(a: GridTensor) -> GridTensor:
    return _unary(a, "exp", np.exp, lambda g, x, o: g * o)


def abs(a: GridTensor) -> GridTensor:  # noqa: A001 - mirrors the math vocabulary
    return _unary(a, "abs", np.abs, lambda g, x, o: g * np.where(x >= 0, 1.0, -1.0))


def power(a: GridTensor, exponent: float) -> GridTensor:
    """Elementwise ``a ** exponent`` for a constant exponent."""
    exponent = float(exponent)
    if exponent != int(exponent) and np.any(a._data < 0):
        raise DomainError("fractional power of a negative value")

    def grad(g, x, o):
        if exponent == 0.0:
            return np.zeros_like(g)
        with np.errstate(divide="ignore", invalid="ignore"):
            return g * exponent * np.power(x, exponent - 1.0)

    return _unary(a, "power", lambda x: np.power(x, exponent), grad)


def maximum(a: Operand, b: Operand) -> GridTensor:
    # ties send the whole gradient to the first argument
    return _binary(
        a, b, "maximum", np.maximum,
        lambda g, x, y, o: np.where(x >= y, g, 0.0),
        lambda g, x, y, o: np.where(x >= y, 0.0, g),
    )


def minimum(a: Operand, b: Operand) -> GridTensor:
    return _binary(
        a, b, "minimum", np.minimum,
        lambda g, x, y, o: np.where(x <= y, g, 0.0),
        lambda g, x, y, o: np.where(x <= y, 0.0, g),
    )


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a: GridTensor) -> GridTensor:
    return _unary(a, "sigmoid", _sigmoid, lambda g, x, o: g * o * (1.0 - o))


def ones_like(a: GridTensor) -> GridTensor:
    return GridTensor._wrap(np.ones(a.shape))


def zeros_like(a: GridTensor) -> GridTensor:
    return GridTensor._wrap(np.zeros(a.shape))


def _compare(a: Operand, b: Operand, op, fn) -> GridTensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape and not (a.is_scalar or b.is_scalar):
        raise ShapeMismatch(f"{op}: shapes {a.shape} and {b.shape} differ")
    out = fn(a._data, b._data).astype(np.float64)
    return _result(out, op, (a, b), None, blocked=True)


def greater(a: Operand, b: Operand) -> GridTensor:
    """1.0 where ``a > b`` else 0.0. Not differentiable."""
    return _compare(a, b, "greater", np.greater)


def less(a: Operand, b: Operand) -> GridTensor:
    """1.0 where ``a < b`` else 0.0. Not differentiable."""
    return _compare(a, b, "less", np.less)


def where(cond: GridTensor, a: Operand, b: Operand) -> GridTensor:
    """Select ``a`` where ``cond`` is 1 and ``b`` where it is 0.

    Both branches must be finite: a NaN in the unselected branch would still
    poison the gradient of a multiplicative mask, so it is rejected up front.
    The condition never receives gradient; if it depends on a watched
    parameter the backward pass flags it as blocked.
    """
    a, b = as_tensor(a), as_tensor(b)
    shape = cond.shape
    for name, t in (("a", a), ("b", b)):
        if t.shape != shape and not t.is_scalar:
            raise ShapeMismatch(f"where: branch {name} has shape {t.shape}, condition {shape}")
        if not np.all(np.isfinite(t._data)):
            raise NonFiniteOperand(f"where: branch {name} contains non-finite values")
    c = cond._data
    if not np.all((c == 0.0) | (c == 1.0)):
        raise DomainError("where: condition must contain only 0 and 1")
    mask = c == 1.0
    out = np.where(mask, a._data, b._data)

    def backward(g):
        return (
            np.zeros_like(g),
            _reduce_to(np.where(mask, g, 0.0), a.shape),
            _reduce_to(np.where(mask, 0.0, g), b.shape),
        )

    tape = autodiff.current_tape()
    if tape is not None and tape.is_tracked(cond):
        # record the blocked condition edge separately so it is reported
        flag = _result(c, "where_condition", (cond,), None, blocked=True)
        return _result(out, "where", (flag, a, b), backward)
    return _result(out, "where", (cond, a, b), backward)


# -- reductions and reshaping --------------------------------------------------


def reduce_sum(a: GridTensor, axes=None) -> GridTensor:
    """Sum over ``axes`` keeping reduced axes as size 1."""
    ax = normalize_axes(axes)
    out = np.sum(a._data, axis=ax, keepdims=True)
    return _result(out, "reduce_sum", (a,), lambda g: (np.broadcast_to(g, a.shape),))


def reduce_mean(a: GridTensor, axes=None) -> GridTensor:
    """Mean over ``axes`` keeping reduced axes as size 1."""
    ax = normalize_axes(axes)
    n = int(np.prod([a.shape[i] for i in ax]))
    out = np.mean(a._data, axis=ax, keepdims=True)
    return _result(out, "reduce_mean", (a,), lambda g: (np.broadcast_to(g / n, a.shape),))


def reduce(a: GridTensor, axes=None, kind: str = "mean") -> GridTensor:
    if kind == "mean":
        return reduce_mean(a, axes)
    if kind == "sum":
        return reduce_sum(a, axes)
    raise ValueError(f"unknown reduction {kind!r}")


def reshape(a: GridTensor, shape) -> GridTensor:
    shape = tuple(int(s) for s in shape)
    if len(shape) != RANK or int(np.prod(shape)) != a.size:
        raise ShapeMismatch(f"cannot reshape {a.shape} to {shape}")
    out = a._data.reshape(shape)
    return _result(out, "reshape", (a,), lambda g: (g.reshape(a.shape),))


def flatten_samples(a: GridTensor) -> GridTensor:
    """Keep the batch axis and flatten each sample into the channel axis."""
    return reshape(a, (a.shape[0], 1, 1, a.size // a.shape[0]))


def transpose_spatial(a: GridTensor) -> GridTensor:
    """Swap the rows and cols axes."""
    out = a._data.transpose(0, 2, 1, 3)
    return _result(out, "transpose_spatial", (a,), lambda g: (g.transpose(0, 2, 1, 3),))


def channel(a: GridTensor, index: int) -> GridTensor:
    """Select one channel, keeping the channel axis (size 1)."""
    k = a.shape[3]
    if not -k <= index < k:
        raise ShapeMismatch(f"channel {index} out of range for {k} channels")
    index %= k
    out = a._data[..., index:index + 1]

    def backward(g):
        full = np.zeros(a.shape)
        full[..., index:index + 1] = g
        return (full,)

    return _result(out, "channel", (a,), backward)


def concat_channels(tensors: Iterable[GridTensor]) -> GridTensor:
    tensors = list(tensors)
    base = tensors[0].shape[:3]
    for t in tensors:
        if t.shape[:3] != base:
            raise ShapeMismatch("concat_channels: batch/rows/cols must agree")
    out = np.concatenate([t._data for t in tensors], axis=3)
    bounds = np.cumsum([0] + [t.shape[3] for t in tensors])

    def backward(g):
        return tuple(g[..., bounds[i]:bounds[i + 1]] for i in range(len(tensors)))

    return _result(out, "concat_channels", tuple(tensors), backward)


def repeat_batch(a: GridTensor, n: int) -> GridTensor:
    """Tile a single-sample tensor ``n`` times along the batch axis."""
    if a.shape[0] != 1:
        raise ShapeMismatch("repeat_batch needs a batch of one")
    out = np.repeat(a._data, n, axis=0)
    return _result(out, "repeat_batch", (a,), lambda g: (g.sum(axis=0, keepdims=True),))


def batch_slice(a: GridTensor, start: int, stop: int) -> GridTensor:
    out = a._data[start:stop]

    def backward(g):
        full = np.zeros(a.shape)
        full[start:stop] = g
        return (full,)

    return _result(out, "batch_slice", (a,), backward)


def assert_same_shape(*tensors: GridTensor, op: str = "op") -> None:
    shapes = {t.shape for t in tensors}
    if len(shapes) > 1:
        raise ShapeMismatch(f"{op}: shapes differ: {sorted(shapes)}")
