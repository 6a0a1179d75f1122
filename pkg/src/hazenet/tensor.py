"""Dense float64 tensors with reverse-mode differentiation.

Every forward operation records a closure that maps the upstream gradient
onto gradients for its inputs.  ``Tensor.backward`` orders the recorded graph
topologically and replays the closures once each, in reverse.  Only leaves
(tensors created directly by the user with ``requires_grad=True``) keep a
``grad`` accumulator; intermediate gradients live only during the sweep.

Convolution-style operations accept either a single ``[C, H, W]`` item or a
batch ``[N, C, H, W]``.
"""

import contextlib
import math
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DimensionError, ParameterError, UsageError

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (evaluation, optimizer updates)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._parents: tuple = ()
        self._backward: Optional[Callable] = None
        self.op = "leaf"

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def is_leaf(self):
        return self._backward is None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self.op}{flag})"

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise UsageError(f"item() needs a single element, tensor has shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def backward(self):
        """Accumulate d(self)/d(leaf) into every reachable leaf's ``grad``."""
        if self.data.size != 1:
            raise UsageError(f"backward() needs a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            raise UsageError("loss does not depend on any tensor that requires grad")
        ComputationRecord.from_output(self).replay(np.ones_like(self.data))

    # operator sugar; the named functions below carry the checks
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return add(scale(self, -1.0), other)

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, float(other))
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scale(self, -1.0)


class ComputationRecord:
    """Topologically ordered list of the graph nodes feeding one output."""

    def __init__(self, nodes):
        self.nodes = nodes

    @classmethod
    def from_output(cls, out: Tensor) -> "ComputationRecord":
        order, seen = [], set()
        stack = [(out, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))
        return cls(order)

    @property
    def ops(self):
        return [n for n in self.nodes if not n.is_leaf]

    def replay(self, seed: np.ndarray, visit=None):
        grads = {id(self.nodes[-1]): seed}
        for node in reversed(self.nodes):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.is_leaf:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            if visit is not None:
                visit(node)
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data, parents, backward, op) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.op = op
    track = _GRAD_ENABLED and any(p.requires_grad for p in parents)
    out.requires_grad = track
    out._parents = tuple(parents) if track else ()
    out._backward = backward if track else None
    return out


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _check_binary(x: Tensor, y: Tensor, name: str):
    try:
        shape = np.broadcast_shapes(x.shape, y.shape)
    except ValueError:
        shape = None
    if shape != x.shape:
        raise DimensionError(f"{name}: operand not broadcastable onto x", x.shape, y.shape)


# ---------------------------------------------------------------------------
# elementwise


def add(x, y) -> Tensor:
    x, y = as_tensor(x), as_tensor(y)
    _check_binary(x, y, "add")

    def backward(g):
        return g, _unbroadcast(g, y.shape)

    return _result(x.data + y.data, (x, y), backward, "add")


def sub(x, y) -> Tensor:
    x, y = as_tensor(x), as_tensor(y)
    _check_binary(x, y, "sub")

    def backward(g):
        return g, -_unbroadcast(g, y.shape)

    return _result(x.data - y.data, (x, y), backward, "sub")


def mul(x, y) -> Tensor:
    x, y = as_tensor(x), as_tensor(y)
    _check_binary(x, y, "mul")

    def backward(g):
        gx = g * y.data if x.requires_grad else None
        gy = _unbroadcast(g * x.data, y.shape) if y.requires_grad else None
        return gx, gy

    return _result(x.data * y.data, (x, y), backward, "mul")


def scale(x: Tensor, c: float) -> Tensor:
    return _result(x.data * c, (x,), lambda g: (g * c,), "scale")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _result(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,), "relu")


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    factor = np.where(x.data > 0, 1.0, slope)
    return _result(x.data * factor, (x,), lambda g: (g * factor,), "leaky_relu")


def sigmoid(x: Tensor) -> Tensor:
    s = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return _result(s, (x,), lambda g: (g * s * (1.0 - s),), "sigmoid")


def absolute(x: Tensor) -> Tensor:
    sign = np.sign(x.data)
    return _result(np.abs(x.data), (x,), lambda g: (g * sign,), "abs")


def square(x: Tensor) -> Tensor:
    return _result(x.data * x.data, (x,), lambda g: (2.0 * g * x.data,), "square")


_UNARY = {"relu": relu, "sigmoid": sigmoid, "abs": absolute, "square": square}
_BINARY = {"add": add, "sub": sub, "mul": mul}


def elementwise_apply(x: Tensor, op: str, y=None, slope: float = 0.2, c: float = 1.0) -> Tensor:
    """Dispatch one of the named elementwise operations."""
    if op in _BINARY:
        if y is None:
            raise UsageError(f"{op} needs a second operand")
        return _BINARY[op](x, y)
    if op == "leaky_relu":
        return leaky_relu(x, slope)
    if op == "scale":
        return scale(x, c)
    if op in _UNARY:
        return _UNARY[op](x)
    raise ParameterError(f"unknown elementwise op {op!r}")


# ---------------------------------------------------------------------------
# reductions and reshaping


def tsum(x: Tensor, axis=None) -> Tensor:
    out = x.data.sum(axis=axis)

    def backward(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _result(np.asarray(out, dtype=np.float64), (x,), backward, "sum")


def mean(x: Tensor) -> Tensor:
    return scale(tsum(x), 1.0 / x.data.size)


def reshape(x: Tensor, shape) -> Tensor:
    return _result(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),), "reshape")


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise DimensionError(f"concat: {exc}") from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _result(data, tensors, backward, "concat")


def global_avg_pool(x: Tensor) -> Tensor:
    """Per-channel spatial mean, keeping unit spatial axes."""
    if x.ndim < 3:
        raise DimensionError("global_avg_pool needs [..., C, H, W]", 3, x.ndim)
    h, w = x.shape[-2:]

    def backward(g):
        return (np.broadcast_to(g / (h * w), x.shape).copy(),)

    return _result(x.data.mean(axis=(-2, -1), keepdims=True), (x,), backward, "gap")


def linear_map2d(x: Tensor, left: np.ndarray, right: np.ndarray) -> Tensor:
    """``left @ x @ right.T`` over the two trailing axes (constant matrices)."""
    h, w = x.shape[-2:]
    if left.ndim != 2 or right.ndim != 2 or left.shape[1] != h or right.shape[1] != w:
        raise DimensionError("linear_map2d: matrices do not fit the spatial extents",
                             ("[*, %d]" % h, "[*, %d]" % w), (left.shape, right.shape))
    out = left @ x.data @ right.T
    return _result(out, (x,), lambda g: (left.T @ g @ right,), "linear_map2d")


def pixel_shuffle(x: Tensor, r: int) -> Tensor:
    """Rearrange ``[..., C*r*r, H, W]`` into ``[..., C, H*r, W*r]``.

    out[c, h*r + i, w*r + j] = in[c*r*r + i*r + j, h, w]
    """
    if r < 1:
        raise ParameterError(f"pixel_shuffle factor must be positive, got {r}")
    *lead, cr, h, w = x.shape
    if cr % (r * r):
        raise ParameterError(f"pixel_shuffle: {cr} channels not divisible by r^2={r * r}")
    c = cr // (r * r)
    nl = len(lead)
    perm = tuple(range(nl)) + tuple(nl + k for k in (0, 3, 1, 4, 2))
    inv = tuple(np.argsort(perm))
    out = x.data.reshape(*lead, c, r, r, h, w).transpose(perm).reshape(*lead, c, h * r, w * r)

    def backward(g):
        g = g.reshape(*lead, c, h, r, w, r).transpose(inv)
        return (g.reshape(x.shape),)

    return _result(np.ascontiguousarray(out), (x,), backward, "pixel_shuffle")


def crop(x: Tensor, tops, lefts, size: int) -> Tensor:
    """Square ``size`` crops; per-item offsets when ``x`` is batched."""
    if x.ndim == 3:
        t, l = int(tops), int(lefts)
        out = x.data[:, t:t + size, l:l + size].copy()

        def backward(g):
            gx = np.zeros_like(x.data)
            gx[:, t:t + size, l:l + size] = g
            return (gx,)

        return _result(out, (x,), backward, "crop")

    tops = [int(v) for v in tops]
    lefts = [int(v) for v in lefts]
    if len(tops) != x.shape[0] or len(lefts) != x.shape[0]:
        raise DimensionError("crop: one offset pair per batch item", x.shape[0], len(tops))
    out = np.stack([x.data[n, :, t:t + size, l:l + size]
                    for n, (t, l) in enumerate(zip(tops, lefts))])

    def backward(g):
        gx = np.zeros_like(x.data)
        for n, (t, l) in enumerate(zip(tops, lefts)):
            gx[n, :, t:t + size, l:l + size] = g[n]
        return (gx,)

    return _result(out, (x,), backward, "crop")


# ---------------------------------------------------------------------------
# layers


def conv2d(x: Tensor, w: Tensor, b: Optional[Tensor] = None, stride: int = 1,
           padding: int = 0) -> Tensor:
    """Cross-correlation of ``x`` with ``w`` (no kernel flip)."""
    single = x.ndim == 3
    if x.ndim not in (3, 4) or w.ndim != 4:
        raise DimensionError("conv2d needs x [C,H,W] or [N,C,H,W] and w [O,C,kh,kw]",
                             "3/4 and 4", (x.ndim, w.ndim))
    xd = x.data[None] if single else x.data
    n, c, h, wd = xd.shape
    o, ci, kh, kw = w.shape
    if ci != c:
        raise DimensionError("conv2d input channels", ci, c)
    if kh % 2 == 0 or kw % 2 == 0:
        raise DimensionError("conv2d kernel extents must be odd", "odd", (kh, kw))
    if b is not None and b.shape != (o,):
        raise DimensionError("conv2d bias shape", (o,), b.shape)
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (wd + 2 * padding - kw) // stride + 1
    if ho < 1 or wo < 1:
        raise DimensionError("conv2d output extent must be positive", ">=1", (ho, wo))

    xp = np.pad(xd, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else xd
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :ho, :wo]
    out = np.tensordot(win, w.data, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    if b is not None:
        out = out + b.data[:, None, None]
    out = np.ascontiguousarray(out)
    if single:
        out = out[0]

    def backward(g):
        g4 = g[None] if single else g
        gw = np.tensordot(g4, win, axes=([0, 2, 3], [0, 2, 3])) if w.requires_grad else None
        gb = g4.sum(axis=(0, 2, 3)) if b is not None and b.requires_grad else None
        gx = None
        if x.requires_grad:
            cols = np.tensordot(g4, w.data, axes=([1], [0]))  # n, ho, wo, c, kh, kw
            gxp = np.zeros(xp.shape)
            he, we = stride * (ho - 1) + 1, stride * (wo - 1) + 1
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i:i + he:stride, j:j + we:stride] += cols[..., i, j].transpose(0, 3, 1, 2)
            gx = gxp[:, :, padding:padding + h, padding:padding + wd]
            if single:
                gx = gx[0]
        return gx, gw, gb

    parents = (x, w) if b is None else (x, w, b)
    return _result(out, parents, backward, "conv2d")


def matmul_fc(x: Tensor, w: Tensor, b: Optional[Tensor] = None) -> Tensor:
    """Fully connected layer ``w @ x + b`` for ``x`` of shape [n] or [N, n]."""
    if w.ndim != 2 or x.shape[-1] != w.shape[1]:
        raise DimensionError("matmul_fc inner dimensions", w.shape[1] if w.ndim == 2 else "2-d w",
                             x.shape[-1])
    if b is not None and b.shape != (w.shape[0],):
        raise DimensionError("matmul_fc bias shape", (w.shape[0],), b.shape)
    out = x.data @ w.data.T
    if b is not None:
        out = out + b.data

    def backward(g):
        gx = g @ w.data if x.requires_grad else None
        gw = None
        if w.requires_grad:
            gw = np.outer(g, x.data) if x.ndim == 1 else g.T @ x.data
        gb = None
        if b is not None and b.requires_grad:
            gb = g if g.ndim == 1 else g.sum(axis=0)
        return gx, gw, gb

    parents = (x, w) if b is None else (x, w, b)
    return _result(out, parents, backward, "matmul_fc")


# ---------------------------------------------------------------------------
# verification


def finite_diff_check(f: Callable[[Tensor], Tensor], x, eps=1e-6,
                      coords: Optional[Sequence[int]] = None) -> float:
    """Max relative error between the recorded gradient and central differences.

    ``coords`` restricts the comparison to a subset of flat indices.  ``eps``
    may be a sequence of steps; each coordinate then scores its best match.
    A small step drowns in rounding and a large one can straddle a ReLU kink,
    but a wrong gradient disagrees with every step.
    """
    steps = (eps,) if np.isscalar(eps) else tuple(eps)
    base = np.array(as_tensor(x).data, dtype=np.float64)
    probe = Tensor(base, requires_grad=True)
    f(probe).backward()
    analytic = probe.grad.reshape(-1)
    flat = base.reshape(-1)
    idx = range(flat.size) if coords is None else coords
    worst = 0.0
    with no_grad():
        for i in idx:
            hold = flat[i]
            a = analytic[i]
            best = math.inf
            for h in steps:
                flat[i] = hold + h
                fp = f(Tensor(base)).item()
                flat[i] = hold - h
                fm = f(Tensor(base)).item()
                flat[i] = hold
                cd = (fp - fm) / (2.0 * h)
                best = min(best, abs(a - cd) / max(abs(a), abs(cd), 1e-8))
                if best < 1e-6:
                    break
            worst = max(worst, best)
    return worst
