"""Dense float64 tensors with define-by-run reverse-mode differentiation.

Every op builds its output eagerly and, when any input tracks gradients,
records a closure that maps the output gradient to per-input gradients.
``Tensor.backward`` walks the recorded graph once in reverse topological
order.
"""

from __future__ import annotations

import contextlib
import os
from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from cmsanet.errors import DimensionError, NumericError, UsageError

# Finite-value assertion after every op; off by default because it costs a scan.
DEBUG = os.environ.get("CMSANET_DEBUG", "") not in ("", "0")

_grad_enabled = True

BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


@contextlib.contextmanager
def no_grad():
    """Evaluate ops without recording a graph."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """N-dimensional float64 array with optional gradient tracking.

    Leaves are tensors built by the user (``Tensor(...)``); their ``grad``
    accumulates across ``backward`` calls until :meth:`zero_grad`.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "op", "name")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: BackwardFn | None = None
        self.op = "leaf"
        self.name = name

    @classmethod
    def _node(cls, data: np.ndarray, parents: tuple, backward: BackwardFn, op: str) -> "Tensor":
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.op = op
        out.name = None
        track = _grad_enabled and any(p.requires_grad for p in parents)
        out.requires_grad = track
        out._parents = parents if track else ()
        out._backward = backward if track else None
        if DEBUG and not np.all(np.isfinite(data)):
            raise NumericError(f"non-finite output from op '{op}'")
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self.op}{flag})"

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into ``leaf.grad`` for every tracked leaf."""
        if self.data.size != 1:
            raise UsageError(f"backward needs a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            raise UsageError("loss does not depend on any tensor that requires grad")
        order = topological_order(self)
        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.grad is None:
                    node.grad = np.array(g, dtype=np.float64, copy=True)
                else:
                    node.grad += g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    # operator sugar -------------------------------------------------------
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

    def __neg__(self):
        return scalar_mul(self, -1.0)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise UsageError("division by a tensor is not supported")
        return scalar_mul(self, 1.0 / float(other))

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    def sum(self, axis=None, keepdims=False):
        return sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)


def topological_order(root: Tensor) -> list[Tensor]:
    """Nodes reachable from ``root`` through tracked edges, parents first."""
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


# elementwise -----------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")
    sa, sb = a.shape, b.shape
    return Tensor._node(a.data + b.data, (a, b),
                        lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "sub")
    sa, sb = a.shape, b.shape
    return Tensor._node(a.data - b.data, (a, b),
                        lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)), "sub")


def mul(a, b) -> Tensor:
    """Hadamard product; operands broadcast numpy-style."""
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "hadamard")

    def backward(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return Tensor._node(a.data * b.data, (a, b), backward, "mul")


hadamard = mul


def scalar_mul(x: Tensor, c: float) -> Tensor:
    c = float(c)
    return Tensor._node(x.data * c, (x,), lambda g: (g * c,), "scalar_mul")


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return Tensor._node(y, (x,), lambda g: (g * (1.0 - y * y),), "tanh")


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def sigmoid(x: Tensor) -> Tensor:
    y = _sigmoid(x.data)
    return Tensor._node(y, (x,), lambda g: (g * y * (1.0 - y),), "sigmoid")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return Tensor._node(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,), "relu")


def log(x: Tensor, min: float | None = None, max: float | None = None) -> Tensor:
    """Natural log of ``x`` clipped to ``[min, max]``; clipped entries get zero grad."""
    xc = x.data
    inside = None
    if min is not None or max is not None:
        xc = np.clip(x.data, min, max)
        inside = xc == x.data
    y = np.log(xc)

    def backward(g):
        gx = g / xc
        return (gx if inside is None else gx * inside,)

    return Tensor._node(y, (x,), backward, "log")


# shape ops -------------------------------------------------------------------

def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    try:
        y = x.data.reshape(shape)
    except ValueError:
        raise DimensionError(f"cannot reshape {x.shape} to {shape}") from None
    src = x.shape
    return Tensor._node(y, (x,), lambda g: (g.reshape(src),), "reshape")


def transpose(x: Tensor, axes=None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return Tensor._node(x.data.transpose(axes), (x,), lambda g: (g.transpose(inv),), "transpose")


def broadcast_to(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    try:
        y = np.broadcast_to(x.data, shape)
    except ValueError:
        raise DimensionError(f"cannot broadcast {x.shape} to {shape}") from None
    src = x.shape
    return Tensor._node(y, (x,), lambda g: (_unbroadcast(g, src),), "broadcast_to")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise UsageError("concat needs at least one tensor")
    try:
        y = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise DimensionError(f"concat: {exc}") from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return Tensor._node(y, tuple(tensors), backward, "concat")


def take_rows(table: Tensor, ids) -> Tensor:
    """Row lookup ``table[ids]``; gradient scatters back into the chosen rows."""
    ids = np.asarray(ids, dtype=np.int64)
    rows = table.shape[0]

    def backward(g):
        gt = np.zeros(table.shape)
        np.add.at(gt, ids, g)
        return (gt,)

    if ids.size and (ids.min() < 0 or ids.max() >= rows):
        raise DimensionError(f"row index out of range for table with {rows} rows")
    return Tensor._node(table.data[ids], (table,), backward, "take_rows")


# reductions ------------------------------------------------------------------

def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axis(axis, x.ndim)
    src = x.shape

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, src),)

    return Tensor._node(np.sum(x.data, axis=axes, keepdims=keepdims), (x,), backward, "sum")


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axis(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    src = x.shape

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / count, src),)

    return Tensor._node(np.mean(x.data, axis=axes, keepdims=keepdims), (x,), backward, "mean")


# linear algebra --------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes; leading batch axes must match."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.ndim != b.ndim:
        raise DimensionError(f"matmul needs equal-rank operands of rank >= 2, got {a.shape} and {b.shape}")
    if a.shape[:-2] != b.shape[:-2] or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: incompatible shapes {a.shape} and {b.shape}")

    def backward(g):
        ga = g @ np.swapaxes(b.data, -1, -2) if a.requires_grad else None
        gb = np.swapaxes(a.data, -1, -2) @ g if b.requires_grad else None
        return ga, gb

    return Tensor._node(a.data @ b.data, (a, b), backward, "matmul")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    if not -x.ndim <= axis < x.ndim:
        raise UsageError(f"softmax axis {axis} invalid for rank {x.ndim}")
    z = x.data - np.max(x.data, axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / np.sum(e, axis=axis, keepdims=True)

    def backward(g):
        return (y * (g - np.sum(g * y, axis=axis, keepdims=True)),)

    return Tensor._node(y, (x,), backward, "softmax")


def l2_normalize(x: Tensor, axis: int = -1, eps: float = 1e-12) -> Tensor:
    """Scale each slice along ``axis`` to unit L2 norm.

    Slices whose norm is below ``eps`` come back as zeros with zero gradient.
    """
    norm = np.sqrt(np.sum(x.data * x.data, axis=axis, keepdims=True))
    live = norm >= eps
    safe = np.where(live, norm, 1.0)
    y = np.where(live, x.data / safe, 0.0)

    def backward(g):
        gx = (g - y * np.sum(g * y, axis=axis, keepdims=True)) / safe
        return (np.where(live, gx, 0.0),)

    return Tensor._node(y, (x,), backward, "l2_normalize")


def conv2d(x: Tensor, w: Tensor, bias: Tensor | None = None, stride: int = 1) -> Tensor:
    """Same-padded 2-D cross-correlation of a ``C_in x H x W`` map.

    ``w`` is ``C_out x C_in x k x k`` with odd ``k``; zero padding of ``k // 2``
    keeps the extents at ``ceil(H / stride) x ceil(W / stride)``.
    """
    if x.ndim != 3 or w.ndim != 4:
        raise DimensionError(f"conv2d expects x rank 3 and w rank 4, got {x.shape} and {w.shape}")
    c_out, c_in, k, k2 = w.shape
    if k != k2 or k % 2 == 0:
        raise DimensionError(f"conv2d kernel must be square with odd size, got {k}x{k2}")
    if x.shape[0] != c_in:
        raise DimensionError(f"conv2d: input has {x.shape[0]} channels, weight expects {c_in}")
    if bias is not None and bias.shape != (c_out,):
        raise DimensionError(f"conv2d: bias shape {bias.shape} != ({c_out},)")
    _, h, wd = x.shape
    pad = k // 2
    ho, wo = (h - 1) // stride + 1, (wd - 1) // stride + 1

    if k == 1:
        xs = x.data[:, ::stride, ::stride]
        cols = xs.reshape(c_in, ho * wo)
    else:
        xp = np.pad(x.data, ((0, 0), (pad, pad), (pad, pad)))
        win = sliding_window_view(xp, (k, k), axis=(1, 2))[:, ::stride, ::stride]
        # (C_in, Ho, Wo, k, k) -> (C_in, k, k, Ho, Wo)
        cols = np.ascontiguousarray(win.transpose(0, 3, 4, 1, 2)).reshape(c_in * k * k, ho * wo)
    wmat = w.data.reshape(c_out, -1)
    out = wmat @ cols
    if bias is not None:
        out = out + bias.data[:, None]
    out = out.reshape(c_out, ho, wo)

    def backward(g):
        g2 = g.reshape(c_out, ho * wo)
        gw = (g2 @ cols.T).reshape(w.shape) if w.requires_grad else None
        gb = g2.sum(axis=1) if bias is not None and bias.requires_grad else None
        gx = None
        if x.requires_grad:
            gcols = (wmat.T @ g2).reshape(c_in, k, k, ho, wo)
            gxp = np.zeros((c_in, h + 2 * pad, wd + 2 * pad))
            for i in range(k):
                for j in range(k):
                    gxp[:, i:i + stride * ho:stride, j:j + stride * wo:stride] += gcols[:, i, j]
            gx = gxp[:, pad:pad + h, pad:pad + wd]
        return gx, gw, gb

    parents = (x, w) if bias is None else (x, w, bias)
    return Tensor._node(out, parents, backward, "conv2d")


def parameters_of(tensors: Iterable[Tensor]) -> list[Tensor]:
    return [t for t in tensors if t.requires_grad and t.is_leaf]
