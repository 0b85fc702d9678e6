"""Tensor type, gradient records and the reverse sweep."""

import contextlib
import threading

import numpy as np

from ..errors import NonScalarLoss

_state = threading.local()


def get_default_dtype():
    return getattr(_state, "dtype", np.float32)


@contextlib.contextmanager
def default_dtype(dtype):
    """Create new tensors and constants with ``dtype`` inside the block.

    Gradient checks run under ``default_dtype(np.float64)``.
    """
    prev = get_default_dtype()
    _state.dtype = np.dtype(dtype).type
    try:
        yield
    finally:
        _state.dtype = prev


def is_grad_enabled():
    return getattr(_state, "grad", True)


@contextlib.contextmanager
def no_grad():
    prev = is_grad_enabled()
    _state.grad = False
    try:
        yield
    finally:
        _state.grad = prev


class Record:
    """One tape entry: the op that produced a tensor and how to pull back.

    ``backward(g)`` returns one gradient (or ``None``) per input.  Saved
    values live in the closure.
    """

    __slots__ = ("op", "inputs", "backward")

    def __init__(self, op, inputs, backward):
        self.op = op
        self.inputs = inputs
        self.backward = backward

    def __repr__(self):
        return f"Record({self.op}, inputs={[t.shape for t in self.inputs]})"


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "record", "name")
    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, name=None, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data, dtype=dtype or get_default_dtype())
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.record = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return self.data.item()

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data, dtype=self.data.dtype)

    def __len__(self):
        return self.data.shape[0]

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def backward(self, grad=None):
        """Accumulate d(self)/d(leaf) into every ``requires_grad`` leaf."""
        if grad is None:
            if self.data.size != 1:
                raise NonScalarLoss(f"backward needs a scalar loss, got shape {self.shape}")
            grad = np.ones_like(self.data)
        else:
            grad = np.asarray(grad, dtype=self.data.dtype).reshape(self.shape)
        if not self.requires_grad:
            return
        grads = {id(self): grad}
        for t in reversed(tape(self)):
            g = grads.pop(id(t), None)
            if g is None:
                continue
            rec = t.record
            if rec is None:
                t.grad = g.copy() if t.grad is None else t.grad + g
                continue
            for inp, gi in zip(rec.inputs, rec.backward(g)):
                if gi is None or not inp.requires_grad:
                    continue
                k = id(inp)
                grads[k] = gi if k not in grads else grads[k] + gi


def tape(root):
    """Tensors reachable from ``root`` in topological order (inputs first).

    Each tensor appears once, so a reverse sweep visits every record once.
    """
    order, seen, stack = [], set(), [(root, False)]
    while stack:
        t, done = stack.pop()
        if done:
            order.append(t)
            continue
        if id(t) in seen:
            continue
        seen.add(id(t))
        stack.append((t, True))
        if t.record is not None:
            for inp in t.record.inputs:
                if inp.requires_grad and id(inp) not in seen:
                    stack.append((inp, False))
    return order


def make(data, inputs, backward, op):
    """Wrap ``data`` as the output of ``op``; records only when needed."""
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    req = is_grad_enabled() and any(t.requires_grad for t in inputs)
    out.requires_grad = req
    out.record = Record(op, tuple(inputs), backward) if req else None
    return out
