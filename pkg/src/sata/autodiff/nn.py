"""Parameter containers and basic layers."""

import numpy as np

from . import ops
from .tensor import Tensor, get_default_dtype


def parameter(data, name=None):
    return Tensor(data, requires_grad=True, name=name)


class Module:
    """Parameters and child modules are discovered in attribute-assignment order."""

    def __init__(self):
        object.__setattr__(self, "_children", {})
        object.__setattr__(self, "training", True)

    def __setattr__(self, key, value):
        if isinstance(value, (Module, Tensor)) or (isinstance(value, list) and value and isinstance(value[0], Module)):
            self._children[key] = value
        object.__setattr__(self, key, value)

    def named_tensors(self, prefix=""):
        """Every registered tensor: trainable parameters and buffers."""
        for key, value in self._children.items():
            name = f"{prefix}{key}"
            if isinstance(value, Tensor):
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_tensors(name + ".")
            else:
                for i, m in enumerate(value):
                    yield from m.named_tensors(f"{name}.{i}.")

    def named_parameters(self, prefix=""):
        return [(n, t) for n, t in self.named_tensors(prefix) if t.requires_grad]

    def named_buffers(self, prefix=""):
        """Non-trainable state (e.g. EMA codebooks) saved with the parameters."""
        return [(n, t) for n, t in self.named_tensors(prefix) if not t.requires_grad]

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def modules(self):
        yield self
        for value in self._children.values():
            if isinstance(value, Module):
                yield from value.modules()
            elif isinstance(value, list):
                for m in value:
                    yield from m.modules()

    def train(self, mode=True):
        for m in self.modules():
            object.__setattr__(m, "training", mode)
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def state_dict(self):
        return {n: p.data.copy() for n, p in self.named_tensors()}

    def load_state_dict(self, state, strict=True):
        own = dict(self.named_tensors())
        missing = sorted(set(own) - set(state))
        extra = sorted(set(state) - set(own))
        if strict and (missing or extra):
            from ..errors import CheckpointError

            raise CheckpointError(f"parameter mismatch; missing {missing[:5]}, unexpected {extra[:5]}")
        for name, p in own.items():
            if name in state:
                value = np.asarray(state[name])
                if value.shape != p.shape:
                    from ..errors import CheckpointError

                    raise CheckpointError(f"{name}: shape {value.shape} != {p.shape}")
                p.data = value.astype(p.dtype)

    def astype(self, dtype):
        """Cast every tensor in place (used for float64 gradient checks)."""
        for _, p in self.named_tensors():
            p.data = p.data.astype(dtype)
        return self

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class Linear(Module):
    """``y = x W + b`` on the last axis; Glorot-uniform init."""

    def __init__(self, n_in, n_out, rng, bias=True, zero=False):
        super().__init__()
        limit = np.sqrt(6.0 / (n_in + n_out))
        w = np.zeros((n_in, n_out)) if zero else rng.uniform(-limit, limit, (n_in, n_out))
        self.weight = parameter(w.astype(get_default_dtype()))
        if bias:
            self.bias = parameter(np.zeros(n_out, dtype=get_default_dtype()))
        else:
            self.bias = None
        self.n_in, self.n_out = n_in, n_out

    def forward(self, x):
        x = ops.as_tensor(x)
        lead = x.shape[:-1]
        y = ops.matmul(ops.reshape(x, (-1, self.n_in)), self.weight)
        if self.bias is not None:
            y = ops.add(y, self.bias)
        return ops.reshape(y, lead + (self.n_out,))


class MLP(Module):
    """Linear layers with ReLU between them (none after the last)."""

    def __init__(self, sizes, rng, zero_last=False):
        super().__init__()
        self.layers = [Linear(a, b, rng, zero=zero_last and i == len(sizes) - 2)
                       for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:]))]

    def forward(self, x):
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = ops.relu(x)
        return x


class LayerNorm(Module):
    def __init__(self, dim, affine=True):
        super().__init__()
        self.dim = dim
        if affine:
            self.gain = parameter(np.ones(dim, dtype=get_default_dtype()))
            self.bias = parameter(np.zeros(dim, dtype=get_default_dtype()))
        else:
            self.gain = self.bias = None

    def forward(self, x):
        return ops.layer_norm(x, self.gain, self.bias)
