"""Differentiable operations.

Every function takes tensors (or array-likes, treated as constants) and
returns a new tensor whose record knows how to pull gradients back.
"""

import numpy as np

from ..errors import IndexOutOfRange, InvalidAxis, ShapeMismatch
from .tensor import Tensor, make


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    lead = g.ndim - len(shape)
    if lead > 0:
        g = g.sum(axis=tuple(range(lead)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _check_broadcast(a, b, op):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatch(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


def _axis(axis, ndim, op):
    if not isinstance(axis, (int, np.integer)) or not -ndim <= axis < ndim:
        raise InvalidAxis(f"{op}: axis {axis!r} invalid for a {ndim}-d tensor")
    return int(axis) % ndim


def _axes(axis, ndim, op):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, (tuple, list)):
        out = tuple(_axis(a, ndim, op) for a in axis)
        if len(set(out)) != len(out):
            raise InvalidAxis(f"{op}: repeated axis in {axis!r}")
        return out
    return (_axis(axis, ndim, op),)


# --- elementwise ------------------------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")
    sa, sb = a.shape, b.shape
    return make(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add")


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")
    sa, sb = a.shape, b.shape
    return make(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)), "sub")


def mul(a, b):
    """Hadamard product with broadcasting."""
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")
    ad, bd = a.data, b.data

    def back(g):
        return (_unbroadcast(g * bd, ad.shape) if a.requires_grad else None,
                _unbroadcast(g * ad, bd.shape) if b.requires_grad else None)

    return make(ad * bd, (a, b), back, "mul")


hadamard = mul


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "div")
    ad, bd = a.data, b.data
    out = ad / bd

    def back(g):
        return (_unbroadcast(g / bd, ad.shape) if a.requires_grad else None,
                _unbroadcast(-g * out / bd, bd.shape) if b.requires_grad else None)

    return make(out, (a, b), back, "div")


def neg(a):
    a = as_tensor(a)
    return make(-a.data, (a,), lambda g: (-g,), "neg")


def scalar_mul(a, s):
    a = as_tensor(a)
    s = float(s)
    return make(a.data * a.data.dtype.type(s), (a,), lambda g: (g * s,), "scalar_mul")


def power(a, p):
    """``a ** p`` for a constant exponent."""
    a = as_tensor(a)
    p = float(p)
    ad = a.data
    return make(ad ** p, (a,), lambda g: (g * p * ad ** (p - 1),), "pow")


def square(a):
    a = as_tensor(a)
    ad = a.data
    return make(ad * ad, (a,), lambda g: (2 * g * ad,), "square")


def exp(a):
    a = as_tensor(a)
    out = np.exp(a.data)
    return make(out, (a,), lambda g: (g * out,), "exp")


def log(a):
    a = as_tensor(a)
    ad = a.data
    return make(np.log(ad), (a,), lambda g: (g / ad,), "log")


def sqrt(a):
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return make(out, (a,), lambda g: (0.5 * g / out,), "sqrt")


def sin(a):
    a = as_tensor(a)
    ad = a.data
    return make(np.sin(ad), (a,), lambda g: (g * np.cos(ad),), "sin")


def cos(a):
    a = as_tensor(a)
    ad = a.data
    return make(np.cos(ad), (a,), lambda g: (-g * np.sin(ad),), "cos")


def tanh(a):
    a = as_tensor(a)
    out = np.tanh(a.data)
    return make(out, (a,), lambda g: (g * (1 - out * out),), "tanh")


def sigmoid(a):
    a = as_tensor(a)
    out = 0.5 * (1 + np.tanh(0.5 * a.data))
    return make(out, (a,), lambda g: (g * out * (1 - out),), "sigmoid")


def relu(a):
    a = as_tensor(a)
    mask = a.data > 0
    return make(np.where(mask, a.data, 0).astype(a.dtype, copy=False), (a,), lambda g: (g * mask,), "relu")


def where(cond, a, b):
    """Select ``a`` where ``cond`` (a constant boolean array) holds, else ``b``."""
    a, b = as_tensor(a), as_tensor(b)
    cond = np.asarray(cond, dtype=bool)
    sa, sb = a.shape, b.shape
    out = np.where(cond, a.data, b.data)

    def back(g):
        return _unbroadcast(np.where(cond, g, 0), sa), _unbroadcast(np.where(cond, 0, g), sb)

    return make(out.astype(np.result_type(a.data, b.data), copy=False), (a, b), back, "where")


def stop_gradient(a):
    a = as_tensor(a)
    return Tensor(a.data, dtype=a.dtype)


# --- linear algebra ---------------------------------------------------------

def matmul(a, b):
    """Batched matrix product over the last two axes with broadcasting."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeMismatch(f"matmul: incompatible shapes {a.shape} @ {b.shape}")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeMismatch(f"matmul: batch shapes {a.shape[:-2]} and {b.shape[:-2]} do not broadcast") from None
    ad, bd = a.data, b.data

    def back(g):
        ga = _unbroadcast(g @ np.swapaxes(bd, -1, -2), ad.shape) if a.requires_grad else None
        gb = _unbroadcast(np.swapaxes(ad, -1, -2) @ g, bd.shape) if b.requires_grad else None
        return ga, gb

    return make(ad @ bd, (a, b), back, "matmul")


def cross(a, b):
    """Cross product over the last axis (length 3)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape[-1:] != (3,) or b.shape[-1:] != (3,):
        raise ShapeMismatch(f"cross: last axis must be 3, got {a.shape} and {b.shape}")
    _check_broadcast(a, b, "cross")
    ad, bd = a.data, b.data

    def back(g):
        return _unbroadcast(np.cross(bd, g), ad.shape), _unbroadcast(np.cross(g, ad), bd.shape)

    return make(np.cross(ad, bd), (a, b), back, "cross")


# --- reductions -------------------------------------------------------------

def _expand(g, shape, axes, keepdims):
    if not keepdims:
        g = np.expand_dims(g, axes)
    return np.broadcast_to(g, shape)


def sum(a, axis=None, keepdims=False):  # noqa: A001 - mirrors numpy
    a = as_tensor(a)
    axes = _axes(axis, a.ndim, "sum")
    shape = a.shape
    out = a.data.sum(axis=axes, keepdims=keepdims)
    return make(np.asarray(out, dtype=a.dtype), (a,), lambda g: (_expand(g, shape, axes, keepdims).copy(),), "sum")


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    axes = _axes(axis, a.ndim, "mean")
    shape = a.shape
    n = int(np.prod([shape[i] for i in axes])) if axes else 1
    out = a.data.mean(axis=axes, keepdims=keepdims)
    scale = a.dtype.type(1.0 / n if n else 1.0)
    return make(np.asarray(out, dtype=a.dtype), (a,),
                lambda g: (_expand(g * scale, shape, axes, keepdims).copy(),), "mean")


def max_with_argmax(a, axis, keepdims=False):
    """Maximum along ``axis`` plus the winning index (lowest on ties).

    The gradient flows only to the recorded argmax.
    """
    a = as_tensor(a)
    ax = _axis(axis, a.ndim, "max")
    idx = np.argmax(a.data, axis=ax)
    idx_k = np.expand_dims(idx, ax)
    vals = np.take_along_axis(a.data, idx_k, axis=ax)
    shape = a.shape

    def back(g):
        gk = g if keepdims else np.expand_dims(g, ax)
        out = np.zeros(shape, dtype=g.dtype)
        np.put_along_axis(out, idx_k, gk, axis=ax)
        return (out,)

    out = make(vals if keepdims else np.squeeze(vals, ax), (a,), back, "max")
    return out, idx


def max(a, axis, keepdims=False):  # noqa: A001 - mirrors numpy
    return max_with_argmax(a, axis, keepdims)[0]


def cumsum(a, axis):
    a = as_tensor(a)
    ax = _axis(axis, a.ndim, "cumsum")

    def back(g):
        return (np.flip(np.cumsum(np.flip(g, ax), axis=ax), ax),)

    return make(np.cumsum(a.data, axis=ax), (a,), back, "cumsum")


# --- shape ------------------------------------------------------------------

def reshape(a, shape):
    a = as_tensor(a)
    old = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeMismatch(f"reshape: cannot reshape {old} to {shape}") from None
    return make(out, (a,), lambda g: (g.reshape(old),), "reshape")


def transpose(a, axes=None):
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    axes = tuple(_axis(x, a.ndim, "transpose") for x in axes)
    if sorted(axes) != list(range(a.ndim)):
        raise InvalidAxis(f"transpose: {axes} is not a permutation of {a.ndim} axes")
    inv = tuple(np.argsort(axes))
    return make(a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),), "transpose")


def swapaxes(a, i, j):
    a = as_tensor(a)
    perm = list(range(a.ndim))
    i, j = _axis(i, a.ndim, "swapaxes"), _axis(j, a.ndim, "swapaxes")
    perm[i], perm[j] = perm[j], perm[i]
    return transpose(a, perm)


def _is_advanced(key):
    keys = key if isinstance(key, tuple) else (key,)
    return any(isinstance(k, (list, np.ndarray)) for k in keys)


def getitem(a, key):
    """Slicing and integer-array indexing (``slice`` in the op list)."""
    a = as_tensor(a)
    if isinstance(key, Tensor):
        key = key.data
    try:
        out = a.data[key]
    except IndexError as e:
        raise IndexOutOfRange(f"index {key!r} out of range for shape {a.shape}: {e}") from None
    shape, dtype = a.shape, a.dtype
    advanced = _is_advanced(key)

    def back(g):
        full = np.zeros(shape, dtype=dtype)
        if advanced:
            np.add.at(full, key, g)
        else:
            full[key] = g
        return (full,)

    return make(np.asarray(out, dtype=dtype), (a,), back, "getitem")


slice_ = getitem


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeMismatch("concat of an empty list")
    ax = _axis(axis, tensors[0].ndim, "concat")
    for t in tensors[1:]:
        if t.ndim != tensors[0].ndim or any(t.shape[i] != tensors[0].shape[i] for i in range(t.ndim) if i != ax):
            raise ShapeMismatch(f"concat: shapes {[x.shape for x in tensors]} disagree off axis {ax}")
    sizes = np.cumsum([t.shape[ax] for t in tensors])[:-1]
    out = np.concatenate([t.data for t in tensors], axis=ax)
    return make(out, tensors, lambda g: tuple(np.split(g, sizes, axis=ax)), "concat")


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    if not tensors or any(t.shape != tensors[0].shape for t in tensors):
        raise ShapeMismatch(f"stack: shapes {[t.shape for t in tensors]} differ")
    ax = _axis(axis, tensors[0].ndim + 1, "stack")
    out = np.stack([t.data for t in tensors], axis=ax)
    return make(out, tensors, lambda g: tuple(np.moveaxis(g, ax, 0)), "stack")


def broadcast_to(a, shape):
    a = as_tensor(a)
    shape = tuple(shape)
    try:
        out = np.broadcast_to(a.data, shape)
    except ValueError:
        raise ShapeMismatch(f"broadcast_to: {a.shape} -> {shape}") from None
    old = a.shape
    return make(out, (a,), lambda g: (_unbroadcast(g, old),), "broadcast")


def broadcast_rows(a, n):
    """Repeat a single row (shape ``(1, ...)`` or ``(...)``) ``n`` times."""
    a = as_tensor(a)
    if a.ndim == 0:
        raise ShapeMismatch("broadcast_rows needs at least a vector")
    if a.shape[0] != 1:
        a = reshape(a, (1,) + a.shape)
    return broadcast_to(a, (int(n),) + a.shape[1:])


# --- normalization / attention helpers --------------------------------------

def softmax(a, axis=-1):
    a = as_tensor(a)
    ax = _axis(axis, a.ndim, "softmax")
    z = a.data - a.data.max(axis=ax, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=ax, keepdims=True)

    def back(g):
        return (out * (g - (g * out).sum(axis=ax, keepdims=True)),)

    return make(out, (a,), back, "softmax")


def layer_norm(x, gain=None, bias=None, eps=1e-5):
    """Normalize over the last axis, then optional affine ``gain``/``bias``."""
    x = as_tensor(x)
    inputs = [x]
    gd = bd = None
    if gain is not None:
        gain = as_tensor(gain)
        if gain.shape != x.shape[-1:]:
            raise ShapeMismatch(f"layer_norm: gain {gain.shape} vs features {x.shape[-1:]}")
        inputs.append(gain)
        gd = gain.data
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != x.shape[-1:]:
            raise ShapeMismatch(f"layer_norm: bias {bias.shape} vs features {x.shape[-1:]}")
        inputs.append(bias)
        bd = bias.data
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = xc * rstd
    out = xhat
    if gd is not None:
        out = out * gd
    if bd is not None:
        out = out + bd
    lead = tuple(range(xd.ndim - 1))

    def back(g):
        gx_hat = g * gd if gd is not None else g
        gx = rstd * (gx_hat - gx_hat.mean(axis=-1, keepdims=True)
                     - xhat * (gx_hat * xhat).mean(axis=-1, keepdims=True))
        grads = [gx]
        if gd is not None:
            grads.append((g * xhat).sum(axis=lead))
        if bd is not None:
            grads.append(g.sum(axis=lead))
        return tuple(grads)

    return make(out.astype(xd.dtype, copy=False), inputs, back, "layer_norm")


class DropoutStream:
    """Counter-based dropout masks keyed by ``(seed, call index)``.

    Each call draws from a fresh Philox generator whose key is the seed and
    whose counter is the call index, so masks never depend on call history
    beyond the count.
    """

    def __init__(self, seed=0):
        self.seed = int(seed)
        self.calls = 0

    def generator(self):
        gen = np.random.Generator(np.random.Philox(key=self.seed, counter=self.calls))
        self.calls += 1
        return gen


def dropout(x, p, training, stream=None):
    x = as_tensor(x)
    if not training or p <= 0:
        return x
    if p >= 1:
        raise ShapeMismatch("dropout probability must be < 1")
    gen = (stream or DropoutStream()).generator()
    mask = ((gen.random(x.shape) >= p) / (1.0 - p)).astype(x.dtype)
    return make(x.data * mask, (x,), lambda g: (g * mask,), "dropout")


# --- graph plumbing -----------------------------------------------------------

def _check_index(idx, n, op):
    idx = np.asarray(idx)
    if idx.size and (not np.issubdtype(idx.dtype, np.integer) or idx.min() < 0 or idx.max() >= n):
        raise IndexOutOfRange(f"{op}: indices must be integers in [0, {n})")
    return idx.astype(np.int64, copy=False)


def _scatter(values, idx, n, axis):
    shape = list(values.shape)
    shape[axis] = n
    out = np.zeros(shape, dtype=values.dtype)
    np.add.at(np.moveaxis(out, axis, 0), idx, np.moveaxis(values, axis, 0))
    return out


def gather_rows(x, idx, axis=0):
    """``x`` indexed by ``idx`` along ``axis`` (rows may repeat)."""
    x = as_tensor(x)
    ax = _axis(axis, x.ndim, "gather_rows")
    n = x.shape[ax]
    idx = _check_index(idx, n, "gather_rows")
    return make(np.take(x.data, idx, axis=ax), (x,), lambda g: (_scatter(g, idx, n, ax),), "gather_rows")


def scatter_add_rows(x, idx, n, axis=0):
    """Sum the rows of ``x`` into ``n`` buckets selected by ``idx``."""
    x = as_tensor(x)
    ax = _axis(axis, x.ndim, "scatter_add_rows")
    if len(np.asarray(idx)) != x.shape[ax]:
        raise ShapeMismatch(f"scatter_add_rows: {len(idx)} indices for {x.shape[ax]} rows")
    idx = _check_index(idx, n, "scatter_add_rows")
    return make(_scatter(x.data, idx, n, ax), (x,), lambda g: (np.take(g, idx, axis=ax),), "scatter_add_rows")


def segment_max(x, segments, n_segments, axis=0):
    """Per-segment maximum along ``axis``; ties go to the lowest row.

    ``segments[i]`` names the segment of row ``i``.  Returns the pooled
    tensor and the winning row index per segment and feature.
    """
    x = as_tensor(x)
    ax = _axis(axis, x.ndim, "segment_max")
    seg = _check_index(segments, n_segments, "segment_max")
    if len(seg) != x.shape[ax]:
        raise ShapeMismatch(f"segment_max: {len(seg)} segment ids for {x.shape[ax]} rows")
    xd = np.moveaxis(x.data, ax, 0)
    winner = np.empty((n_segments,) + xd.shape[1:], dtype=np.int64)
    for s in range(n_segments):
        rows = np.flatnonzero(seg == s)
        if rows.size == 0:
            raise ShapeMismatch(f"segment_max: segment {s} is empty")
        winner[s] = rows[np.argmax(xd[rows], axis=0)]
    pooled = np.take_along_axis(xd, winner, axis=0)
    shape = xd.shape

    def back(g):
        out = np.zeros(shape, dtype=g.dtype)
        # segments own disjoint rows, so each target slot is written once
        np.put_along_axis(out, winner, np.moveaxis(g, ax, 0), axis=0)
        return (np.moveaxis(out, 0, ax),)

    return make(np.moveaxis(pooled, 0, ax), (x,), back, "segment_max"), winner
