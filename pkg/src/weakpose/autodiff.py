"""Dense float64 tensors with tape-based reverse-mode automatic differentiation.

Every value is a ``Tensor`` wrapping a numpy float64 array.  Operations run
eagerly and, while gradient recording is enabled, register themselves on an
implicit tape: each output remembers its parent tensors, a backward closure,
and a monotone sequence number.  ``backward`` collects the ops reachable from
a scalar root, orders them by sequence number (execution order is already
topological) and replays the closures in reverse, accumulating gradients.

Design constraints honoured here:

* double precision everywhere (finite-difference checks dominate accuracy);
* define-by-run, no graph compilation;
* tensors are immutable after creation except for gradient accumulation and
  in-place optimizer updates on leaf parameters;
* forward determinism: identical inputs give bit-identical outputs.
"""

from __future__ import annotations

import itertools
from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import expit


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible for an operation."""


_grad_enabled = True
_debug_checks = False
_seq_counter = itertools.count()


def is_grad_enabled() -> bool:
    return _grad_enabled


@contextmanager
def no_grad():
    """Disable gradient recording inside the block (forward-only execution)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def set_debug_checks(enabled: bool) -> None:
    """Toggle NaN/Inf checking of every op output (off by default, slow)."""
    global _debug_checks
    _debug_checks = bool(enabled)


class Tensor:
    """N-dimensional float64 value, optionally a node in the backward graph.

    ``grad`` stays ``None`` until a backward pass reaches this tensor.
    Hashing and equality are by identity so tensors can key dictionaries;
    use ``.data`` for value comparisons.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward_fn", "_seq")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward_fn: Callable | None = None
        self._seq = next(_seq_counter)

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
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def backward(self, params: Sequence["Tensor"] | None = None) -> None:
        backward(self, params=params)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    # -- operator sugar -------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, axes):
        return transpose(self, axes)

    def swapaxes(self, a, b):
        return swapaxes(self, a, b)


def as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward_fn: Callable) -> Tensor:
    """Wrap an op result; register it on the tape when recording is active."""
    if _debug_checks and not np.all(np.isfinite(data)):
        raise FloatingPointError("op produced NaN/Inf from finite inputs")
    requires = _grad_enabled and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=requires)
    if requires:
        out._parents = parents
        out._backward_fn = backward_fn
    return out


def _sum_to(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Undo numpy broadcasting: reduce ``grad`` down to ``shape``."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# Tape and backward pass
# ---------------------------------------------------------------------------


class Tape:
    """Ordered record of the recorded ops reachable from one root tensor.

    Sequence numbers increase with execution order, so sorting by them gives
    a topological order: every op appears after all ops producing its inputs.
    Replaying the record backwards visits each op exactly once.
    """

    def __init__(self, entries: list[Tensor]):
        self.entries = entries

    @classmethod
    def from_root(cls, root: Tensor) -> "Tape":
        seen: set[int] = set()
        nodes: list[Tensor] = []
        stack = [root]
        while stack:
            t = stack.pop()
            if id(t) in seen:
                continue
            seen.add(id(t))
            nodes.append(t)
            stack.extend(t._parents)
        nodes.sort(key=lambda t: t._seq)
        return cls([t for t in nodes if t._backward_fn is not None])

    def __len__(self) -> int:
        return len(self.entries)

    def replay_backward(self, root: Tensor) -> None:
        grads: dict[Tensor, np.ndarray] = {root: np.ones_like(root.data)}
        if root.requires_grad:
            root.grad = grads[root]
        for t in reversed(self.entries):
            g = grads.pop(t, None)
            if g is None:
                continue
            if t.requires_grad and t.grad is None:
                t.grad = g
            parent_grads = t._backward_fn(g)
            for parent, pg in zip(t._parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                held = grads.get(parent)
                grads[parent] = pg if held is None else held + pg
        for t, g in grads.items():
            if t.requires_grad:
                t.grad = g if t.grad is None else t.grad + g


def backward(loss: Tensor, params: Sequence[Tensor] | None = None) -> None:
    """Reverse-accumulate d(loss)/d(tensor) for everything reachable from loss.

    ``loss`` must be scalar.  Parameters listed in ``params`` that the loss
    does not depend on receive an explicit zero gradient.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward requires a scalar loss, got shape {loss.data.shape}")
    Tape.from_root(loss).replay_backward(loss)
    if params is not None:
        for p in params:
            if p.requires_grad and p.grad is None:
                p.grad = np.zeros_like(p.data)


def zero_grads(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None


# ---------------------------------------------------------------------------
# Elementwise and arithmetic ops
# ---------------------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data + b.data

    def backward_fn(g):
        return _sum_to(g, a.data.shape), _sum_to(g, b.data.shape)

    return _make(data, (a, b), backward_fn)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data - b.data

    def backward_fn(g):
        return _sum_to(g, a.data.shape), _sum_to(-g, b.data.shape)

    return _make(data, (a, b), backward_fn)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data * b.data

    def backward_fn(g):
        return _sum_to(g * b.data, a.data.shape), _sum_to(g * a.data, b.data.shape)

    return _make(data, (a, b), backward_fn)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data / b.data

    def backward_fn(g):
        ga = _sum_to(g / b.data, a.data.shape)
        gb = _sum_to(-g * a.data / (b.data * b.data), b.data.shape)
        return ga, gb

    return _make(data, (a, b), backward_fn)


def neg(x) -> Tensor:
    x = as_tensor(x)
    return _make(-x.data, (x,), lambda g: (-g,))


def scale(x, c: float) -> Tensor:
    """Multiply by a python scalar constant."""
    x = as_tensor(x)
    c = float(c)
    return _make(x.data * c, (x,), lambda g: (g * c,))


def exp(x) -> Tensor:
    x = as_tensor(x)
    data = np.exp(x.data)
    return _make(data, (x,), lambda g: (g * data,))


def log(x) -> Tensor:
    x = as_tensor(x)
    return _make(np.log(x.data), (x,), lambda g: (g / x.data,))


def sqrt(x) -> Tensor:
    x = as_tensor(x)
    data = np.sqrt(x.data)
    return _make(data, (x,), lambda g: (g * (0.5 / data),))


def relu(x) -> Tensor:
    # Subgradient at exactly 0 is taken as 0.
    x = as_tensor(x)
    data = np.maximum(x.data, 0.0)
    return _make(data, (x,), lambda g: (g * (x.data > 0.0),))


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    data = expit(x.data)
    return _make(data, (x,), lambda g: (g * data * (1.0 - data),))


def clamp(x, lo: float, hi: float) -> Tensor:
    """Clip values to [lo, hi]; gradient is zero outside the open interval."""
    x = as_tensor(x)
    data = np.clip(x.data, lo, hi)
    inside = (x.data > lo) & (x.data < hi)
    return _make(data, (x,), lambda g: (g * inside,))


# ---------------------------------------------------------------------------
# Linear algebra
# ---------------------------------------------------------------------------


def matmul(a, b) -> Tensor:
    """Matrix product with numpy semantics: trailing two axes multiply,
    leading axes broadcast (used for per-head / per-sample stacking)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError(f"matmul needs matrices, got shapes {a.data.shape} and {b.data.shape}")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(f"matmul inner extents differ: {a.data.shape} vs {b.data.shape}")
    data = a.data @ b.data

    def backward_fn(g):
        ga = _sum_to(g @ b.data.swapaxes(-1, -2), a.data.shape)
        gb = _sum_to(a.data.swapaxes(-1, -2) @ g, b.data.shape)
        return ga, gb

    return _make(data, (a, b), backward_fn)


def softmax(x, axis: int = -1) -> Tensor:
    """Numerically stable softmax along ``axis`` (max-subtraction).

    Works in one scratch array; attention scores are the largest tensors in
    the model, so the forward and backward avoid extra temporaries.
    """
    x = as_tensor(x)
    if not -x.data.ndim <= axis < x.data.ndim:
        raise ShapeError(f"softmax axis {axis} invalid for shape {x.data.shape}")
    data = x.data - np.max(x.data, axis=axis, keepdims=True)
    np.exp(data, out=data)
    data /= data.sum(axis=axis, keepdims=True)

    def backward_fn(g):
        # never mutate g: siblings of fan-out ops may hold the same array
        gx = g * data
        dot = gx.sum(axis=axis, keepdims=True)
        gx -= data * dot
        return (gx,)

    return _make(data, (x,), backward_fn)


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then apply the
    learned affine.  A constant input yields the affine bias alone."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    dim = x.data.shape[-1]
    if gain.data.shape != (dim,) or bias.data.shape != (dim,):
        raise ShapeError(
            f"layer_norm affine shapes {gain.data.shape}/{bias.data.shape} do not match feature dim {dim}"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    data = xhat * gain.data + bias.data

    def backward_fn(g):
        reduce_axes = tuple(range(g.ndim - 1))
        g_gain = (g * xhat).sum(axis=reduce_axes) if g.ndim > 1 else g * xhat
        g_bias = g.sum(axis=reduce_axes) if g.ndim > 1 else g.copy()
        gx_hat = g * gain.data
        m1 = gx_hat.mean(axis=-1, keepdims=True)
        m2 = (gx_hat * xhat).mean(axis=-1, keepdims=True)
        gx = inv * (gx_hat - m1 - xhat * m2)
        return gx, g_gain, g_bias

    return _make(data, (x, gain, bias), backward_fn)


# ---------------------------------------------------------------------------
# Reductions and shape ops
# ---------------------------------------------------------------------------


def _normalize_axes(axis, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def sum_(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    axes = _normalize_axes(axis, x.data.ndim)
    data = x.data.sum(axis=axes, keepdims=keepdims)

    def backward_fn(g):
        if not keepdims:
            expand = list(x.data.shape)
            for a in axes:
                expand[a] = 1
            g = g.reshape(expand)
        return (np.broadcast_to(g, x.data.shape),)

    return _make(data, (x,), backward_fn)


def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    axes = _normalize_axes(axis, x.data.ndim)
    count = 1
    for a in axes:
        count *= x.data.shape[a]
    data = x.data.mean(axis=axes, keepdims=keepdims)

    def backward_fn(g):
        if not keepdims:
            expand = list(x.data.shape)
            for a in axes:
                expand[a] = 1
            g = g.reshape(expand)
        return (np.broadcast_to(g, x.data.shape) / count,)

    return _make(data, (x,), backward_fn)


def global_avg_pool(x) -> Tensor:
    """Average a (..., H, W, C) map over its spatial axes, keeping channels."""
    x = as_tensor(x)
    if x.data.ndim < 3:
        raise ShapeError(f"global_avg_pool expects (..., H, W, C), got {x.data.shape}")
    return mean(x, axis=(-3, -2))


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    data = x.data.reshape(shape)
    return _make(data, (x,), lambda g: (g.reshape(x.data.shape),))


def transpose(x, axes) -> Tensor:
    x = as_tensor(x)
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _make(x.data.transpose(axes), (x,), lambda g: (g.transpose(inverse),))


def swapaxes(x, a: int, b: int) -> Tensor:
    x = as_tensor(x)
    return _make(x.data.swapaxes(a, b), (x,), lambda g: (g.swapaxes(a, b),))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward_fn(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make(data, tuple(tensors), backward_fn)


def narrow(x, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice of ``length`` entries starting at ``start`` on ``axis``."""
    x = as_tensor(x)
    axis = axis % x.data.ndim
    if start < 0 or start + length > x.data.shape[axis]:
        raise ShapeError(f"narrow [{start}:{start + length}] out of bounds on axis {axis} of {x.data.shape}")
    index = [slice(None)] * x.data.ndim
    index[axis] = slice(start, start + length)
    index = tuple(index)
    data = x.data[index]

    def backward_fn(g):
        full = np.zeros_like(x.data)
        full[index] = g
        return (full,)

    return _make(data, (x,), backward_fn)


def repeat2d(x, factor_r: int, factor_c: int) -> Tensor:
    """Nearest-neighbour upsampling of the trailing two axes."""
    x = as_tensor(x)
    if x.data.ndim < 2:
        raise ShapeError(f"repeat2d needs at least 2 axes, got {x.data.shape}")
    data = np.repeat(np.repeat(x.data, factor_r, axis=-2), factor_c, axis=-1)

    def backward_fn(g):
        lead = g.shape[:-2]
        h = g.shape[-2] // factor_r
        w = g.shape[-1] // factor_c
        return (g.reshape(lead + (h, factor_r, w, factor_c)).sum(axis=(-3, -1)),)

    return _make(data, (x,), backward_fn)


def index_select(x, indices, axis: int = 0) -> Tensor:
    """Gather rows along ``axis``; backward scatter-adds into place."""
    x = as_tensor(x)
    axis = axis % x.data.ndim
    indices = np.asarray(indices, dtype=np.intp)
    data = np.take(x.data, indices, axis=axis)

    def backward_fn(g):
        full = np.zeros_like(x.data)
        np.add.at(full, (slice(None),) * axis + (indices,), g)
        return (full,)

    return _make(data, (x,), backward_fn)


# ---------------------------------------------------------------------------
# Convolution
# ---------------------------------------------------------------------------


def _pair(v) -> tuple[int, int]:
    if isinstance(v, (tuple, list)):
        return int(v[0]), int(v[1])
    return int(v), int(v)


def _conv_cols(xp: np.ndarray, kh: int, kw: int, sh: int, sw: int) -> np.ndarray:
    """im2col on a padded (B, Hp, Wp, Cin) array -> (B, Ho, Wo, kh*kw*Cin)."""
    view = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))
    view = view[:, ::sh, ::sw]  # (B, Ho, Wo, Cin, kh, kw)
    view = view.transpose(0, 1, 2, 4, 5, 3)  # (B, Ho, Wo, kh, kw, Cin)
    b, ho, wo = view.shape[:3]
    return np.ascontiguousarray(view).reshape(b, ho, wo, kh * kw * view.shape[-1])


def conv2d(x, weight, bias=None, stride=1, padding=0) -> Tensor:
    """2-D cross-correlation on channels-last maps.

    ``x`` is (H, W, Cin) or (B, H, W, Cin); ``weight`` is (kh, kw, Cin, Cout).
    Output extent per axis is floor((H + 2p - kh) / s) + 1.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    sh, sw = _pair(stride)
    ph, pw = _pair(padding)
    if sh < 1 or sw < 1:
        raise ValueError(f"stride must be >= 1, got {(sh, sw)}")
    if ph < 0 or pw < 0:
        raise ValueError(f"padding must be >= 0, got {(ph, pw)}")
    squeeze = x.data.ndim == 3
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 4:
        raise ShapeError(f"conv2d input must be (H, W, Cin) or (B, H, W, Cin), got {x.data.shape}")
    kh, kw, cin, cout = weight.data.shape
    b, h, w, xc = xd.shape
    if xc != cin:
        raise ShapeError(f"conv2d channel mismatch: input {x.data.shape} vs kernel {weight.data.shape}")
    if kh > h + 2 * ph or kw > w + 2 * pw:
        raise ShapeError(f"kernel {(kh, kw)} larger than padded input {(h + 2 * ph, w + 2 * pw)}")

    xp = np.pad(xd, ((0, 0), (ph, ph), (pw, pw), (0, 0))) if (ph or pw) else xd
    cols = _conv_cols(xp, kh, kw, sh, sw)
    ho, wo = cols.shape[1], cols.shape[2]
    wmat = weight.data.reshape(kh * kw * cin, cout)
    out = cols.reshape(-1, kh * kw * cin) @ wmat
    out = out.reshape(b, ho, wo, cout)
    has_bias = bias is not None
    if has_bias:
        bias = as_tensor(bias)
        out = out + bias.data
    if squeeze:
        out = out[0]

    def backward_fn(g):
        gd = g[None] if squeeze else g
        g_rows = gd.reshape(-1, cout)
        gw = (cols.reshape(-1, kh * kw * cin).T @ g_rows).reshape(weight.data.shape)
        gcols = (g_rows @ wmat.T).reshape(b, ho, wo, kh, kw, cin)
        gxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                gxp[:, i : i + ho * sh : sh, j : j + wo * sw : sw, :] += gcols[:, :, :, i, j, :]
        gx = gxp[:, ph : ph + h, pw : pw + w, :] if (ph or pw) else gxp
        if squeeze:
            gx = gx[0]
        grads = [gx, gw]
        if has_bias:
            grads.append(g_rows.sum(axis=0))
        return tuple(grads)

    parents = (x, weight, bias) if has_bias else (x, weight)
    return _make(out, parents, backward_fn)
