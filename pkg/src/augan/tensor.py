"""Dense float64 tensors with tape-based reverse-mode differentiation.

A :class:`Tape` is an append-only record of operations.  Leaves are created
with :meth:`Tape.watch`; every operation with at least one watched input
appends a node to that input's tape.  Plain ``Tensor(array)`` values are
constants and never record anything, so the same forward code runs with or
without gradients.

    >>> tape = Tape()
    >>> x = tape.watch([1.0, 2.0, 3.0, 4.0])
    >>> grads = tape.backward(mean(x))
    >>> grads[x]
    array([0.25, 0.25, 0.25, 0.25])
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, NumericalError, ShapeError

__all__ = [
    "Tensor",
    "Tape",
    "GradientMap",
    "forward_op",
    "finite_diff_check",
    "add",
    "sub",
    "mul",
    "scalar_mul",
    "matmul",
    "transpose",
    "leaky_relu",
    "relu",
    "tanh",
    "mean",
    "sum",
    "l2_normalize",
    "concat",
    "reshape",
    "clip01",
    "bilinear_sample",
    "exp",
    "log",
    "reflect_coords",
]


class Tensor:
    """An n-d array of 64-bit reals, optionally attached to a tape."""

    __slots__ = ("data", "tape", "node")
    __array_ufunc__ = None  # make ndarray operators defer to Tensor

    def __init__(self, data, *, _tape=None, _node=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.tape = _tape
        self.node = _node

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def values(self) -> np.ndarray:
        """Flat row-major view of the data."""
        return self.data.reshape(-1)

    @property
    def requires_grad(self) -> bool:
        return self.tape is not None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def __repr__(self):
        tag = f", node={self.node}" if self.tape is not None else ""
        return f"Tensor(shape={self.shape}{tag})"

    def __len__(self):
        return self.data.shape[0]

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        if np.isscalar(other):
            return scalar_mul(self, other)
        return mul(self, other)

    def __rmul__(self, other):
        if np.isscalar(other):
            return scalar_mul(self, other)
        return mul(other, self)

    def __truediv__(self, other):
        if not np.isscalar(other):
            raise ContractError("only division by a scalar is supported")
        return scalar_mul(self, 1.0 / other)

    def __neg__(self):
        return scalar_mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def sum(self, axis=None, keepdims=False):
        return sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    @property
    def T(self):
        return transpose(self)


@dataclass
class _Node:
    kind: str
    inputs: tuple  # node ids (None for constant operands)
    vjp: Callable | None  # output grad -> tuple of input grads


class GradientMap:
    """Gradients of a scalar root, indexed by the tensors they belong to."""

    def __init__(self, tape: Tape, grads: list):
        self._tape = tape
        self._grads = grads

    def __getitem__(self, t: Tensor) -> np.ndarray:
        if t.tape is not self._tape:
            raise ContractError("tensor is not recorded on this tape")
        g = self._grads[t.node]
        return np.zeros_like(t.data) if g is None else g

    def __contains__(self, t: Tensor) -> bool:
        return t.tape is self._tape and self._grads[t.node] is not None

    def get(self, t: Tensor, default=None):
        if t in self:
            return self._grads[t.node]
        return default


class Tape:
    """Append-only record of differentiable operations."""

    def __init__(self):
        self.nodes: list[_Node] = []

    def __len__(self):
        return len(self.nodes)

    def _append(self, kind, inputs, vjp) -> int:
        self.nodes.append(_Node(kind, inputs, vjp))
        return len(self.nodes) - 1

    def watch(self, data) -> Tensor:
        """Create a leaf tensor whose gradient will be tracked."""
        arr = np.array(data, dtype=np.float64)
        if not np.isfinite(arr).all():
            raise NumericalError("watched value is not finite", len(self.nodes))
        node = self._append("leaf", (), None)
        return Tensor(arr, _tape=self, _node=node)

    def backward(self, root: Tensor) -> GradientMap:
        """Chain-rule gradients of a scalar ``root`` for every recorded node."""
        if root.data.size != 1:
            raise ContractError(f"backward needs a scalar root, got shape {root.shape}")
        if root.tape is not self:
            raise ContractError("root is not recorded on this tape")
        grads: list = [None] * len(self.nodes)
        grads[root.node] = np.ones_like(root.data)
        for idx in range(root.node, -1, -1):
            g = grads[idx]
            node = self.nodes[idx]
            if g is None or node.vjp is None:
                continue
            for src, gi in zip(node.inputs, node.vjp(g)):
                if src is None or gi is None:
                    continue
                if grads[src] is None:
                    grads[src] = np.array(gi, dtype=np.float64)
                else:
                    grads[src] = grads[src] + gi
        return GradientMap(self, grads)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _tape_of(kind, tensors) -> Tape | None:
    tape = None
    for t in tensors:
        if t.tape is not None:
            if tape is not None and t.tape is not tape:
                raise ContractError(f"{kind}: operands live on different tapes")
            tape = t.tape
    return tape


def _record(kind, tensors, out, vjp) -> Tensor:
    tape = _tape_of(kind, tensors)
    if not np.isfinite(out).all():
        node_id = len(tape.nodes) if tape is not None else None
        raise NumericalError(f"{kind} produced a non-finite value", node_id)
    if tape is None:
        return Tensor(out)
    inputs = tuple(t.node if t.tape is tape else None for t in tensors)
    node = tape._append(kind, inputs, vjp)
    return Tensor(out, _tape=tape, _node=node)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _broadcast_shape(kind, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(kind, a.shape, b.shape) from None


# --- elementwise arithmetic -------------------------------------------------

def add(a, b) -> Tensor:
    """Elementwise sum with numpy broadcasting."""
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape("add", a, b)
    sa, sb = a.shape, b.shape
    return _record("add", (a, b), a.data + b.data,
                   lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape("sub", a, b)
    sa, sb = a.shape, b.shape
    return _record("sub", (a, b), a.data - b.data,
                   lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape("mul", a, b)
    av, bv = a.data, b.data

    def vjp(g):
        ga = _unbroadcast(g * bv, av.shape) if a.tape is not None else None
        gb = _unbroadcast(g * av, bv.shape) if b.tape is not None else None
        return ga, gb

    return _record("mul", (a, b), av * bv, vjp)


def scalar_mul(x, c: float) -> Tensor:
    x = _as_tensor(x)
    c = float(c)
    return _record("scalar_mul", (x,), x.data * c, lambda g: (g * c,))


def matmul(a, b) -> Tensor:
    """Product of two rank-2 tensors."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape)
    av, bv = a.data, b.data

    def vjp(g):
        ga = g @ bv.T if a.tape is not None else None
        gb = av.T @ g if b.tape is not None else None
        return ga, gb

    return _record("matmul", (a, b), av @ bv, vjp)


def transpose(x) -> Tensor:
    x = _as_tensor(x)
    if x.data.ndim != 2:
        raise ShapeError("transpose", x.shape, detail="rank-2 input required")
    return _record("transpose", (x,), x.data.T.copy(), lambda g: (g.T,))


# --- nonlinearities ---------------------------------------------------------

def leaky_relu(x, slope: float = 0.2) -> Tensor:
    x = _as_tensor(x)
    pos = x.data > 0
    out = np.where(pos, x.data, slope * x.data)
    return _record("leaky_relu", (x,), out, lambda g: (np.where(pos, g, slope * g),))


def relu(x) -> Tensor:
    x = _as_tensor(x)
    pos = x.data > 0
    out = np.where(pos, x.data, 0.0)
    return _record("relu", (x,), out, lambda g: (np.where(pos, g, 0.0),))


def tanh(x) -> Tensor:
    x = _as_tensor(x)
    y = np.tanh(x.data)
    return _record("tanh", (x,), y, lambda g: (g * (1.0 - y * y),))


def exp(x) -> Tensor:
    x = _as_tensor(x)
    y = np.exp(x.data)
    return _record("exp", (x,), y, lambda g: (g * y,))


def log(x) -> Tensor:
    x = _as_tensor(x)
    xv = x.data
    with np.errstate(divide="ignore", invalid="ignore"):
        y = np.log(xv)
    return _record("log", (x,), y, lambda g: (g / xv,))


def clip01(x) -> Tensor:
    """Clamp into [0, 1]; gradient passes only strictly inside the interval."""
    x = _as_tensor(x)
    if not np.isfinite(x.data).all():
        raise NumericalError("clip01 input is not finite")
    inside = (x.data > 0.0) & (x.data < 1.0)
    out = np.clip(x.data, 0.0, 1.0)
    return _record("clip01", (x,), out, lambda g: (np.where(inside, g, 0.0),))


# --- reductions and shape ---------------------------------------------------

def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def sum(x, axis=None, keepdims=False) -> Tensor:  # noqa: A001
    x = _as_tensor(x)
    shape = x.shape
    axes = _norm_axis(axis, x.data.ndim)
    out = x.data.sum(axis=axes, keepdims=keepdims)

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, shape),)

    return _record("sum", (x,), out, vjp)


def mean(x, axis=None, keepdims=False) -> Tensor:
    x = _as_tensor(x)
    shape = x.shape
    axes = _norm_axis(axis, x.data.ndim)
    count = int(np.prod([shape[a] for a in axes])) if axes else 1
    out = x.data.mean(axis=axes, keepdims=keepdims)

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / count, shape),)

    return _record("mean", (x,), out, vjp)


def reshape(x, shape) -> Tensor:
    x = _as_tensor(x)
    shape = tuple(shape)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", x.shape, shape) from None
    old = x.shape
    return _record("reshape", (x,), out, lambda g: (g.reshape(old),))


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    if not tensors:
        raise ContractError("concat needs at least one operand")
    ref = tensors[0].shape
    ax = axis % len(ref)
    for t in tensors[1:]:
        if len(t.shape) != len(ref) or any(
            s != r for i, (s, r) in enumerate(zip(t.shape, ref)) if i != ax
        ):
            raise ShapeError("concat", ref, t.shape)
    out = np.concatenate([t.data for t in tensors], axis=ax)
    bounds = np.cumsum([t.shape[ax] for t in tensors])[:-1]

    def vjp(g):
        return tuple(np.split(g, bounds, axis=ax))

    return _record("concat", tuple(tensors), out, vjp)


def l2_normalize(x, axis: int = -1) -> Tensor:
    """Scale slices along ``axis`` to unit Euclidean norm."""
    x = _as_tensor(x)
    norm = np.sqrt((x.data * x.data).sum(axis=axis, keepdims=True))
    with np.errstate(divide="ignore", invalid="ignore"):
        y = x.data / norm

    def vjp(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return ((g - y * dot) / norm,)

    return _record("l2_normalize", (x,), y, vjp)


# --- resampling -------------------------------------------------------------

def reflect_coords(c: np.ndarray, n: int) -> np.ndarray:
    """Fold continuous pixel coordinates into [0, n-1] by mirroring.

    Mirrors about the first and last pixel centres (the edge pixel is not
    repeated), so coordinates already inside the range are returned as is.
    """
    if n == 1:
        return np.zeros_like(c)
    period = 2.0 * (n - 1)
    c = np.mod(np.abs(c), period)
    return np.where(c > n - 1, period - c, c)


def bilinear_sample(image, grid: np.ndarray) -> Tensor:
    """Bilinearly sample ``image`` (B, C, H, W) at pixel coordinates.

    ``grid`` has shape (B, Ho, Wo, 2) holding (row, col) positions in pixel
    units, with pixel centres at integers.  Out-of-range positions are
    reflected back into the image.  The grid is a constant; gradients flow to
    the image only.  Returns (B, C, Ho, Wo).
    """
    image = _as_tensor(image)
    grid = np.asarray(grid, dtype=np.float64)
    if image.data.ndim != 4 or grid.ndim != 4 or grid.shape[-1] != 2 or grid.shape[0] != image.shape[0]:
        raise ShapeError("bilinear_sample", image.shape, grid.shape)
    if not np.isfinite(grid).all():
        raise NumericalError("bilinear_sample grid is not finite")
    B, C, H, W = image.shape
    Ho, Wo = grid.shape[1:3]
    ys = reflect_coords(grid[..., 0], H)
    xs = reflect_coords(grid[..., 1], W)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    wy = ys - y0
    wx = xs - x0
    y1 = np.minimum(y0 + 1, H - 1)
    x1 = np.minimum(x0 + 1, W - 1)

    flat = image.data.reshape(B, C, H * W)
    corners = [y0 * W + x0, y0 * W + x1, y1 * W + x0, y1 * W + x1]
    index = [lin.reshape(B, 1, Ho * Wo) for lin in corners]
    v00, v01, v10, v11 = (
        np.take_along_axis(flat, np.broadcast_to(idx, (B, C, Ho * Wo)), axis=2) for idx in index
    )
    fy = wy.reshape(B, 1, Ho * Wo)
    fx = wx.reshape(B, 1, Ho * Wo)
    # nested lerps keep [0, 1] inputs inside [0, 1] and are exact at integer positions
    top = v00 + fx * (v01 - v00)
    bot = v10 + fx * (v11 - v10)
    out = (top + fy * (bot - top)).reshape(B, C, Ho, Wo)
    weight = [(1.0 - fy) * (1.0 - fx), (1.0 - fy) * fx, fy * (1.0 - fx), fy * fx]

    def vjp(g):
        g = g.reshape(B * C, Ho * Wo)
        base = (np.arange(B * C) * (H * W))[:, None]
        gi = np.zeros(B * C * H * W)
        for idx, w in zip(index, weight):
            lin = (np.broadcast_to(idx, (B, C, Ho * Wo)).reshape(B * C, Ho * Wo) + base).ravel()
            contrib = (g * np.broadcast_to(w, (B, C, Ho * Wo)).reshape(B * C, Ho * Wo)).ravel()
            gi += np.bincount(lin, weights=contrib, minlength=gi.size)
        return (gi.reshape(B, C, H, W),)

    return _record("bilinear_sample", (image,), out, vjp)


_OPS = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "scalar_mul": scalar_mul,
    "matmul": matmul,
    "transpose": transpose,
    "leaky_relu": leaky_relu,
    "relu": relu,
    "tanh": tanh,
    "mean": mean,
    "sum": sum,
    "l2_normalize": l2_normalize,
    "concat": lambda *ts, axis=0: concat(ts, axis=axis),
    "reshape": reshape,
    "clip01": clip01,
    "bilinear_sample": bilinear_sample,
    "exp": exp,
    "log": log,
}


def forward_op(kind: str, *inputs, **attrs) -> Tensor:
    """Dispatch an operation by name, e.g. ``forward_op("leaky_relu", x, slope=0.2)``."""
    try:
        fn = _OPS[kind]
    except KeyError:
        raise ContractError(f"unknown operation kind {kind!r}") from None
    return fn(*inputs, **attrs)


def finite_diff_check(f: Callable[[Tensor], Tensor], x, step: float = 1e-5) -> float:
    """Max relative error between the tape gradient and central differences.

    The error per coordinate is ``|analytic - numeric| / max(1, |analytic|)``.
    """
    if step <= 0:
        raise ContractError("finite-difference step must be positive")
    x0 = np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    tape = Tape()
    leaf = tape.watch(x0)
    analytic = tape.backward(f(leaf))[leaf].ravel()
    numeric = np.empty(x0.size)
    flat = x0.ravel()
    for i in range(flat.size):
        hi = flat.copy()
        lo = flat.copy()
        hi[i] += step
        lo[i] -= step
        try:
            fp = f(Tensor(hi.reshape(x0.shape))).item()
            fm = f(Tensor(lo.reshape(x0.shape))).item()
        except NumericalError as exc:
            raise NumericalError(f"function not finite near coordinate {i}") from exc
        numeric[i] = (fp - fm) / (2.0 * step)
    if not np.isfinite(numeric).all():
        raise NumericalError("finite differences are not finite")
    err = np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic))
    return float(err.max()) if err.size else 0.0
