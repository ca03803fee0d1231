"""Dense float64 tensors with reverse-mode automatic differentiation.

Everything upstream (layers, model, training) is expressed in the small set
of operations defined here plus a few fused layer ops built through
``make_op``. Design points:

* float64 storage throughout, so finite-difference gradient checks are
  decisive.
* Gradients accumulate into ``Tensor.grad`` across ``backward`` calls until
  explicitly zeroed.
* Elementwise broadcasting is restricted to the leading-1 rule: the smaller
  operand (after stripping leading length-1 axes) must be a trailing suffix
  of the larger shape. That covers bias addition and per-feature scaling,
  which is all the model needs.
* A non-finite value produced by any op raises ``NonFiniteError`` instead of
  propagating silently.

The recorded graph is implicit: each tracked tensor keeps its parent tensors
and a backward closure. Node ids increase monotonically with construction,
and ``backward`` replays nodes in exact reverse construction order (which is
a valid reverse-topological order, since inputs always precede their
consumers).
"""

from __future__ import annotations

import heapq
import itertools
import threading
from contextlib import contextmanager
from typing import Callable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested op."""


class NonFiniteError(ArithmeticError):
    """An operation produced NaN or Inf (or a tensor was built from one)."""


_NODE_IDS = itertools.count()
_LOCAL = threading.local()


def grad_enabled() -> bool:
    return getattr(_LOCAL, "grad_enabled", True)


@contextmanager
def no_grad():
    """Disable graph recording inside the block (pure forward, no nodes)."""
    prev = grad_enabled()
    _LOCAL.grad_enabled = False
    try:
        yield
    finally:
        _LOCAL.grad_enabled = prev


def _fmt(shape) -> str:
    return "(" + ", ".join(str(d) for d in shape) + ")"


class Tensor:
    """A dense float64 array with an optional gradient buffer.

    Data is immutable by convention after creation; only ``grad`` (and, for
    optimizer updates on leaf parameters, ``data`` in place) mutate.
    """

    __slots__ = ("data", "grad", "requires_grad", "_nid", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError("tensor created with non-finite values")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._nid = next(_NODE_IDS)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], tuple] | None = None

    # ---- basic introspection -------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        grad = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{grad})"

    def zero_grad(self) -> None:
        self.grad = None

    # ---- backward ------------------------------------------------------------

    def backward(self, grad=None) -> None:
        """Accumulate d(self)/d(x) into ``x.grad`` for every tracked x.

        ``self`` must be a scalar produced by a recorded graph; a seed
        gradient may be passed explicitly to start from a non-scalar node.
        Gradients add onto whatever is already in ``grad`` buffers.
        """
        if grad is None:
            if self.data.size != 1:
                raise ValueError(
                    f"backward: loss must be scalar, got shape {_fmt(self.shape)}"
                )
            grad = np.ones_like(self.data)
        else:
            grad = np.asarray(grad, dtype=np.float64)
            if grad.shape != self.data.shape:
                raise ShapeError(
                    f"backward: seed gradient shape {_fmt(grad.shape)} "
                    f"!= tensor shape {_fmt(self.shape)}"
                )
        if self._backward is None:
            raise RuntimeError("backward: tensor has no recorded graph")

        # pending[nid] holds the tensor and its accumulated output gradient;
        # popping the largest nid first guarantees a node runs only after all
        # of its consumers did.
        pending: dict[int, tuple[Tensor, np.ndarray]] = {self._nid: (self, grad)}
        heap = [-self._nid]
        while heap:
            nid = -heapq.heappop(heap)
            t, g = pending.pop(nid)
            if t.requires_grad:
                t.grad = g.copy() if t.grad is None else t.grad + g
            if t._backward is None:
                continue
            for parent, pg in zip(t._parents, t._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                entry = pending.get(parent._nid)
                if entry is None:
                    pending[parent._nid] = (parent, pg)
                    heapq.heappush(heap, -parent._nid)
                else:
                    pending[parent._nid] = (parent, entry[1] + pg)

    # ---- operator sugar --------------------------------------------------------

    def _lift(self, other) -> "Tensor":
        return other if isinstance(other, Tensor) else Tensor(other)

    def __add__(self, other):
        return add(self, self._lift(other))

    def __radd__(self, other):
        return add(self._lift(other), self)

    def __sub__(self, other):
        return sub(self, self._lift(other))

    def __rsub__(self, other):
        return sub(self._lift(other), self)

    def __mul__(self, other):
        return mul(self, self._lift(other))

    def __rmul__(self, other):
        return mul(self._lift(other), self)

    def __neg__(self):
        return mul(self, Tensor(-1.0))

    def __truediv__(self, other):
        if isinstance(other, Tensor) or not np.isscalar(other):
            raise TypeError("tensor division is only supported by a python scalar")
        return mul(self, Tensor(1.0 / float(other)))

    def __matmul__(self, other):
        return matmul(self, self._lift(other))

    def relu(self):
        return relu(self)

    def sigmoid(self):
        return sigmoid(self)

    def tanh(self):
        return tanh(self)

    def sum(self, axis=None):
        return tsum(self, axis)

    def mean(self, axis=None):
        return tmean(self, axis)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], (tuple, list)) else shape)

    def transpose(self, *perm):
        return transpose(self, perm)

    def __getitem__(self, key):
        return getitem(self, key)


def make_op(
    name: str,
    data: np.ndarray,
    parents: Sequence[Tensor],
    backward: Callable[[np.ndarray], tuple] | None,
) -> Tensor:
    """Create the output tensor of op ``name``, recording it when tracking.

    ``backward`` maps the output gradient to one gradient (or None) per
    parent, in order. It is only attached when some parent requires grad and
    grad mode is on; otherwise no graph node is allocated.
    """
    arr = np.asarray(data, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{name}: op produced non-finite values")
    out = Tensor.__new__(Tensor)
    out.data = arr
    out.grad = None
    out._nid = next(_NODE_IDS)
    if grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


# ---- broadcasting (leading-1 rule) ---------------------------------------------


def _strip_leading_ones(shape: tuple[int, ...]) -> tuple[int, ...]:
    i = 0
    while i < len(shape) and shape[i] == 1:
        i += 1
    return shape[i:]


def _broadcast_shape(op: str, sa: tuple, sb: tuple) -> tuple:
    if sa == sb:
        return sa
    ca, cb = _strip_leading_ones(sa), _strip_leading_ones(sb)
    if len(ca) <= len(sb) and (len(ca) == 0 or tuple(sb[len(sb) - len(ca):]) == ca):
        return sb
    if len(cb) <= len(sa) and (len(cb) == 0 or tuple(sa[len(sa) - len(cb):]) == cb):
        return sa
    raise ShapeError(
        f"{op}: shapes {_fmt(sa)} and {_fmt(sb)} are not broadcastable "
        "(leading-1 rule: the smaller shape must be a trailing suffix of the larger)"
    )


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce an output gradient back to an operand broadcast from ``shape``."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    lead = tuple(i for i, d in enumerate(shape) if d == 1 and g.shape[i] != 1)
    if lead:
        g = g.sum(axis=lead, keepdims=True)
    return g


# ---- elementwise arithmetic ------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape("add", a.shape, b.shape)
    na, nb = a.requires_grad, b.requires_grad

    def backward(g):
        return (
            _unbroadcast(g, a.shape) if na else None,
            _unbroadcast(g, b.shape) if nb else None,
        )

    return make_op("add", a.data + b.data, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape("sub", a.shape, b.shape)
    na, nb = a.requires_grad, b.requires_grad

    def backward(g):
        return (
            _unbroadcast(g, a.shape) if na else None,
            _unbroadcast(-g, b.shape) if nb else None,
        )

    return make_op("sub", a.data - b.data, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape("mul", a.shape, b.shape)
    na, nb = a.requires_grad, b.requires_grad
    ad, bd = a.data, b.data

    def backward(g):
        return (
            _unbroadcast(g * bd, a.shape) if na else None,
            _unbroadcast(g * ad, b.shape) if nb else None,
        )

    return make_op("mul", ad * bd, (a, b), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(
            f"matmul: expects 2-D operands, got {_fmt(a.shape)} x {_fmt(b.shape)}"
        )
    if a.shape[1] != b.shape[0]:
        raise ShapeError(
            f"matmul: inner dimensions disagree: {_fmt(a.shape)} x {_fmt(b.shape)}"
        )
    na, nb = a.requires_grad, b.requires_grad
    ad, bd = a.data, b.data

    def backward(g):
        return (
            g @ bd.T if na else None,
            ad.T @ g if nb else None,
        )

    return make_op("matmul", ad @ bd, (a, b), backward)


# ---- activations -----------------------------------------------------------------


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0.0

    def backward(g):
        return (g * mask,)

    return make_op("relu", np.where(mask, x.data, 0.0), (x,), backward)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # stable in both tails
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(x: Tensor) -> Tensor:
    y = _sigmoid(x.data)

    def backward(g):
        return (g * y * (1.0 - y),)

    return make_op("sigmoid", y, (x,), backward)


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)

    def backward(g):
        return (g * (1.0 - y * y),)

    return make_op("tanh", y, (x,), backward)


# ---- reductions ------------------------------------------------------------------


def _norm_axes(axis, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(a % ndim for a in axis))


def tsum(x: Tensor, axis=None) -> Tensor:
    axes = _norm_axes(axis, x.ndim)
    shape = x.shape

    def backward(g):
        for a in axes:
            g = np.expand_dims(g, a)
        return (np.broadcast_to(g, shape),)

    return make_op("sum", x.data.sum(axis=axes), (x,), backward)


def tmean(x: Tensor, axis=None) -> Tensor:
    axes = _norm_axes(axis, x.ndim)
    shape = x.shape
    count = 1
    for a in axes:
        count *= shape[a]

    def backward(g):
        for a in axes:
            g = np.expand_dims(g, a)
        return (np.broadcast_to(g, shape) / count,)

    return make_op("mean", x.data.mean(axis=axes), (x,), backward)


# ---- shape manipulation ------------------------------------------------------------


def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(int(d) for d in shape)
    orig = x.shape

    def backward(g):
        return (g.reshape(orig),)

    return make_op("reshape", x.data.reshape(shape), (x,), backward)


def transpose(x: Tensor, perm) -> Tensor:
    perm = tuple(perm) if perm else tuple(reversed(range(x.ndim)))
    inv = tuple(np.argsort(perm))

    def backward(g):
        return (g.transpose(inv),)

    return make_op("transpose", x.data.transpose(perm), (x,), backward)


def _check_basic_key(key) -> None:
    parts = key if isinstance(key, tuple) else (key,)
    for k in parts:
        if not isinstance(k, (int, np.integer, slice)) and k is not Ellipsis:
            raise TypeError(
                "tensor indexing supports only ints, slices and ellipsis "
                f"(got {type(k).__name__})"
            )


def getitem(x: Tensor, key) -> Tensor:
    _check_basic_key(key)
    shape = x.shape

    def backward(g):
        dx = np.zeros(shape)
        dx[key] = g
        return (dx,)

    return make_op("getitem", x.data[key], (x,), backward)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    if not tensors:
        raise ValueError("concat: empty tensor list")
    nd = tensors[0].ndim
    ax = axis % nd
    ref = tensors[0].shape
    for t in tensors[1:]:
        if t.ndim != nd or any(
            i != ax and d != ref[i] for i, d in enumerate(t.shape)
        ):
            raise ShapeError(
                f"concat: shape {_fmt(t.shape)} incompatible with {_fmt(ref)} "
                f"along axis {ax}"
            )
    sizes = [t.shape[ax] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        grads = []
        index = [slice(None)] * nd
        for i in range(len(sizes)):
            index[ax] = slice(offsets[i], offsets[i + 1])
            grads.append(g[tuple(index)])
        return tuple(grads)

    return make_op(
        "concat", np.concatenate([t.data for t in tensors], axis=ax), tuple(tensors), backward
    )


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ValueError("stack: empty tensor list")
    ref = tensors[0].shape
    for t in tensors[1:]:
        if t.shape != ref:
            raise ShapeError(f"stack: shape {_fmt(t.shape)} != {_fmt(ref)}")
    ax = axis % (len(ref) + 1)

    def backward(g):
        return tuple(np.take(g, i, axis=ax) for i in range(len(tensors)))

    return make_op("stack", np.stack([t.data for t in tensors], axis=ax), tuple(tensors), backward)
