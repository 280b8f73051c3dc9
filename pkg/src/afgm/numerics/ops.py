"""Differentiable operations over Tensor.

Every op validates shapes up front (DimensionError names the op and both
shapes), computes eagerly in float64, rejects non-finite results
(NumericError), and registers exact vjp closures on the active Graph.

Broadcasting is whitelisted, not general:
  * equal shapes, any rank (not broadcasting at all);
  * a scalar against any tensor;
  * a row [1,V] (or rank-1 [V]) against a matrix [S,V];
  * a column [S,1] against a matrix [S,V].
Anything else is a dimension error, which keeps every gradient rule in this
file short enough to audit by eye.

matmul accepts the four operand layouts the model needs: matrix@matrix,
matrix@vector, batched@batched (equal leading extent), and shared-left
matrix @ batched right. Gradients for the shared operand sum over the batch.
"""
from __future__ import annotations

import math

import numpy as np

from ..errors import ContractError, DimensionError, DomainError, NumericError
from .tensor import Graph, Tensor

# Guard added inside sqrt/phase denominators; see the amplitude and phase ops.
EPS_GUARD = 1e-12


def _wrap(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    if isinstance(x, (int, float, np.floating, np.integer)):
        return Tensor(np.float64(x), op_name="scalar")
    raise ContractError(f"expected Tensor or number, got {type(x).__name__}")


def _make(name: str, value: np.ndarray, pairs) -> Tensor:
    # Single cheap reduction: any NaN poisons the sum; any Inf survives it.
    if not math.isfinite(float(value.sum())):
        raise NumericError(f"non-finite values produced by op {name!r}")
    graph = Graph.current()
    requires = graph is not None and any(p.requires_grad for p, _ in pairs)
    t = Tensor.__new__(Tensor)
    t.data = value if value.flags["C_CONTIGUOUS"] else np.ascontiguousarray(value)
    t.grad = None
    t.requires_grad = requires
    t.op_name = name
    if requires:
        t.parents = tuple(p for p, _ in pairs)
        t.vjps = tuple(v for _, v in pairs)
        graph.nodes.append(t)
    else:
        t.parents = ()
        t.vjps = ()
    return t


# ---------------------------------------------------------------------------
# elementwise binary ops with whitelisted broadcasting

def _broadcast_legal(name: str, sa: tuple, sb: tuple) -> None:
    if sa == sb:
        return
    if sa == () or sb == ():
        return
    ra, rb = len(sa), len(sb)
    # row [1,V] or [V] against [S,V]
    if rb == 2:
        if ra == 1 and sa[0] == sb[1]:
            return
        if ra == 2 and sa[0] == 1 and sa[1] == sb[1]:
            return
        if ra == 2 and sa[1] == 1 and sa[0] == sb[0]:
            return
    if ra == 2:
        if rb == 1 and sb[0] == sa[1]:
            return
        if rb == 2 and sb[0] == 1 and sb[1] == sa[1]:
            return
        if rb == 2 and sb[1] == 1 and sb[0] == sa[0]:
            return
    raise DimensionError(f"{name}: shapes {sa} and {sb} are not broadcast-compatible "
                         "(whitelist: equal, scalar, row-vs-matrix, col-vs-matrix)")


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum an upstream gradient down to the shape of a broadcast operand."""
    if g.shape == shape:
        return g
    if shape == ():
        return np.asarray(g.sum())
    # Align ranks from the right, then sum the expanded axes.
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    keep = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if keep:
        g = g.sum(axis=keep, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    _broadcast_legal("add", a.shape, b.shape)
    with np.errstate(over="ignore", invalid="ignore"):
        val = a.data + b.data
    return _make("add", val, [
        (a, lambda g, sa=a.shape: _unbroadcast(g, sa)),
        (b, lambda g, sb=b.shape: _unbroadcast(g, sb)),
    ])


def sub(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    _broadcast_legal("sub", a.shape, b.shape)
    val = a.data - b.data
    return _make("sub", val, [
        (a, lambda g, sa=a.shape: _unbroadcast(g, sa)),
        (b, lambda g, sb=b.shape: _unbroadcast(-g, sb)),
    ])


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    _broadcast_legal("mul", a.shape, b.shape)
    with np.errstate(over="ignore", invalid="ignore"):
        val = a.data * b.data
    return _make("mul", val, [
        (a, lambda g, o=b.data, sa=a.shape: _unbroadcast(g * o, sa)),
        (b, lambda g, o=a.data, sb=b.shape: _unbroadcast(g * o, sb)),
    ])


# ---------------------------------------------------------------------------
# elementwise unary ops

def sigmoid(x: Tensor) -> Tensor:
    x = _wrap(x)
    with np.errstate(over="ignore"):
        val = 1.0 / (1.0 + np.exp(-x.data))
    return _make("sigmoid", val, [(x, lambda g, v=val: g * (v * (1.0 - v)))])


def relu(x: Tensor) -> Tensor:
    # Subgradient at exactly 0 is 0.
    x = _wrap(x)
    val = np.maximum(x.data, 0.0)
    return _make("relu", val, [(x, lambda g, m=(x.data > 0.0): g * m)])


def sqrt(x: Tensor) -> Tensor:
    """Square root; inputs must be >= -EPS_GUARD (callers add their own guard)."""
    x = _wrap(x)
    if (x.data < -EPS_GUARD).any():
        raise DomainError("sqrt of a value below -1e-12")
    val = np.sqrt(np.maximum(x.data, 0.0))
    return _make("sqrt", val, [
        (x, lambda g, v=val: g * (0.5 / np.maximum(v, 1e-150))),
    ])


def square(x: Tensor) -> Tensor:
    x = _wrap(x)
    return _make("square", x.data * x.data, [(x, lambda g, d=x.data: g * (2.0 * d))])


def cos(x: Tensor) -> Tensor:
    x = _wrap(x)
    return _make("cos", np.cos(x.data), [(x, lambda g, d=x.data: g * (-np.sin(d)))])


def sin(x: Tensor) -> Tensor:
    x = _wrap(x)
    return _make("sin", np.sin(x.data), [(x, lambda g, d=x.data: g * np.cos(d))])


def arctan_ratio(num: Tensor, den: Tensor) -> Tensor:
    """arctan(num / den) with a sign-preserving epsilon on the denominator.

    Output lies in (-pi/2, pi/2). Gradients follow the guarded ratio:
      d/d num =  den_g / (den_g^2 + num^2)
      d/d den = -num   / (den_g^2 + num^2)
    where den_g = den + eps*sign(den) (sign(0) treated as +1). No arctan2.
    """
    num, den = _wrap(num), _wrap(den)
    if num.shape != den.shape:
        raise DimensionError(
            f"arctan_ratio: shapes {num.shape} and {den.shape} must match")
    den_g = np.where(den.data >= 0.0, den.data + EPS_GUARD, den.data - EPS_GUARD)
    val = np.arctan(num.data / den_g)
    inv = 1.0 / (den_g * den_g + num.data * num.data)
    return _make("arctan_ratio", val, [
        (num, lambda g, d=den_g, i=inv: g * (d * i)),
        (den, lambda g, n=num.data, i=inv: g * (-n * i)),
    ])


# ---------------------------------------------------------------------------
# linear algebra

def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    ra, rb = a.ndim, b.ndim
    sa, sb = a.shape, b.shape
    if ra == 2 and rb == 2:
        if sa[1] != sb[0]:
            raise DimensionError(f"matmul: inner extents differ, {sa} @ {sb}")
        val = a.data @ b.data
        return _make("matmul", val, [
            (a, lambda g, o=b.data: g @ o.T),
            (b, lambda g, o=a.data: o.T @ g),
        ])
    if ra == 2 and rb == 1:
        if sa[1] != sb[0]:
            raise DimensionError(f"matmul: inner extents differ, {sa} @ {sb}")
        val = a.data @ b.data
        return _make("matmul", val, [
            (a, lambda g, o=b.data: np.outer(g, o)),
            (b, lambda g, o=a.data: o.T @ g),
        ])
    if ra == 3 and rb == 3:
        if sa[0] != sb[0] or sa[2] != sb[1]:
            raise DimensionError(f"matmul: batched shapes incompatible, {sa} @ {sb}")
        val = a.data @ b.data
        return _make("matmul", val, [
            (a, lambda g, o=b.data: g @ o.swapaxes(-1, -2)),
            (b, lambda g, o=a.data: o.swapaxes(-1, -2) @ g),
        ])
    if ra == 2 and rb == 3:
        # Shared left operand against a batched right operand.
        if sa[1] != sb[1]:
            raise DimensionError(f"matmul: inner extents differ, {sa} @ {sb}")
        val = a.data @ b.data
        return _make("matmul", val, [
            (a, lambda g, o=b.data: np.tensordot(g, o, axes=([0, 2], [0, 2]))),
            (b, lambda g, o=a.data: o.T @ g),
        ])
    raise DimensionError(f"matmul: unsupported ranks {sa} @ {sb}")


def outer(a: Tensor, b: Tensor) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    if a.ndim != 1 or b.ndim != 1:
        raise DimensionError(
            f"outer: both arguments must be rank-1, got {a.shape} and {b.shape}")
    val = np.outer(a.data, b.data)
    return _make("outer", val, [
        (a, lambda g, o=b.data: g @ o),
        (b, lambda g, o=a.data: o @ g),
    ])


def reduce_sum(x: Tensor, axis=None) -> Tensor:
    x = _wrap(x)
    if axis is not None and not (0 <= axis < x.ndim):
        raise DimensionError(f"reduce_sum: axis {axis} out of range for {x.shape}")
    val = np.asarray(x.data.sum(axis=axis))

    def vjp(g, shape=x.shape, ax=axis):
        if ax is None:
            return np.broadcast_to(g, shape)
        return np.broadcast_to(np.expand_dims(g, ax), shape)

    return _make("reduce_sum", val, [(x, vjp)])


# ---------------------------------------------------------------------------
# structure ops

def reshape(x: Tensor, shape) -> Tensor:
    x = _wrap(x)
    shape = tuple(int(n) for n in shape)
    if int(np.prod(shape, dtype=np.int64)) != x.data.size:
        raise DimensionError(f"reshape: cannot view {x.shape} as {shape}")
    val = x.data.reshape(shape)
    return _make("reshape", val, [(x, lambda g, s=x.shape: g.reshape(s))])


def transpose2d(x: Tensor) -> Tensor:
    x = _wrap(x)
    if x.ndim != 2:
        raise DimensionError(f"transpose2d: rank-2 required, got {x.shape}")
    return _make("transpose2d", x.data.T, [(x, lambda g: np.ascontiguousarray(g.T))])


def gather_rows(x: Tensor, indices) -> Tensor:
    """Select rows (axis 0) by integer index; duplicates allowed.

    The gradient scatter-adds, so replicate padding expressed as repeated
    indices accumulates correctly into the replicated row.
    """
    x = _wrap(x)
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 1:
        raise DimensionError(f"gather_rows: indices must be rank-1, got {idx.shape}")
    if x.ndim < 1:
        raise DimensionError("gather_rows: cannot gather from a scalar")
    n = x.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise DimensionError(f"gather_rows: index out of range for extent {n}")
    val = x.data[idx]

    def vjp(g, shape=x.shape, ix=idx):
        out = np.zeros(shape)
        np.add.at(out, ix, g)
        return out

    return _make("gather_rows", val, [(x, vjp)])


def stack(tensors, axis: int = 0) -> Tensor:
    """Stack equal-shaped tensors along a new axis."""
    ts = [_wrap(t) for t in tensors]
    if not ts:
        raise DimensionError("stack: need at least one tensor")
    base = ts[0].shape
    for t in ts[1:]:
        if t.shape != base:
            raise DimensionError(f"stack: mixed shapes {base} and {t.shape}")
    if not (0 <= axis <= len(base)):
        raise DimensionError(f"stack: axis {axis} out of range for rank {len(base)}")
    val = np.stack([t.data for t in ts], axis=axis)
    pairs = [
        (t, lambda g, i=i, ax=axis: np.take(g, i, axis=ax))
        for i, t in enumerate(ts)
    ]
    return _make("stack", val, pairs)


def conv1d(x: Tensor, kernel: Tensor) -> Tensor:
    """Cross-channel 1-D convolution, same length, replicate padding.

    x: [T, D] (time-major), kernel: [k, D_in, D_out] with odd k.
      out[t, d] = sum_{j, e} kernel[j, e, d] * x_pad[t + j - k//2, e]
    where x_pad replicates the first and last rows.
    """
    x, kernel = _wrap(x), _wrap(kernel)
    if x.ndim != 2 or kernel.ndim != 3:
        raise DimensionError(
            f"conv1d: need x rank-2 and kernel rank-3, got {x.shape}, {kernel.shape}")
    k, d_in, d_out = kernel.shape
    t_len, d = x.shape
    if k % 2 != 1:
        raise DimensionError(f"conv1d: kernel width must be odd, got {k}")
    if d_in != d:
        raise DimensionError(
            f"conv1d: kernel input channels {d_in} != series channels {d}")
    pad = k // 2
    idx = np.clip(np.arange(-pad, t_len + pad), 0, t_len - 1)
    xp = x.data[idx]                    # [T + 2*pad, D]
    val = np.zeros((t_len, d_out))
    for j in range(k):
        val += xp[j:j + t_len] @ kernel.data[j]

    def vjp_x(g, shape=x.shape, ix=idx, kd=kernel.data):
        gxp = np.zeros((shape[0] + 2 * pad, shape[1]))
        for j in range(k):
            gxp[j:j + shape[0]] += g @ kd[j].T
        out = np.zeros(shape)
        np.add.at(out, ix, gxp)
        return out

    def vjp_k(g, xpad=xp, tl=t_len, shape=kernel.shape):
        out = np.empty(shape)
        for j in range(k):
            out[j] = xpad[j:j + tl].T @ g
        return out

    return _make("conv1d", val, [(x, vjp_x), (kernel, vjp_k)])
