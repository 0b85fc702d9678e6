"""Small reverse-mode autodiff engine on numpy arrays."""

from . import ops
from .ops import (
    DropoutStream,
    add,
    as_tensor,
    broadcast_rows,
    broadcast_to,
    concat,
    cos,
    cross,
    cumsum,
    div,
    dropout,
    exp,
    gather_rows,
    getitem,
    hadamard,
    layer_norm,
    log,
    matmul,
    max_with_argmax,
    mean,
    mul,
    neg,
    power,
    relu,
    reshape,
    scalar_mul,
    scatter_add_rows,
    segment_max,
    sigmoid,
    sin,
    softmax,
    sqrt,
    square,
    stack,
    stop_gradient,
    sub,
    swapaxes,
    tanh,
    transpose,
    where,
)
from .tensor import Record, Tensor, default_dtype, get_default_dtype, is_grad_enabled, no_grad, tape


def _binary(fn, reverse=False):
    if reverse:
        return lambda self, other: fn(other, self)
    return lambda self, other: fn(self, other)


Tensor.__add__ = _binary(add)
Tensor.__radd__ = _binary(add, True)
Tensor.__sub__ = _binary(sub)
Tensor.__rsub__ = _binary(sub, True)
Tensor.__mul__ = _binary(mul)
Tensor.__rmul__ = _binary(mul, True)
Tensor.__truediv__ = _binary(div)
Tensor.__rtruediv__ = _binary(div, True)
Tensor.__matmul__ = _binary(matmul)
Tensor.__rmatmul__ = _binary(matmul, True)
Tensor.__neg__ = neg
Tensor.__pow__ = power
Tensor.__getitem__ = getitem
Tensor.reshape = lambda self, *shape: reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], tuple) else shape)
Tensor.transpose = lambda self, *axes: transpose(self, axes or None)
Tensor.sum = lambda self, axis=None, keepdims=False: ops.sum(self, axis, keepdims)
Tensor.mean = lambda self, axis=None, keepdims=False: mean(self, axis, keepdims)
Tensor.max = lambda self, axis, keepdims=False: ops.max(self, axis, keepdims)

sum = ops.sum  # noqa: A001
max = ops.max  # noqa: A001

__all__ = [name for name in dir() if not name.startswith("_")]
