"""Central finite-difference gradient checks in float64."""

from dataclasses import dataclass

import numpy as np

from .tensor import Tensor, default_dtype


@dataclass
class GradCheckResult:
    name: str
    max_rel_error: float
    analytic: list
    numeric: list

    def passed(self, tol):
        return self.max_rel_error < tol


def rel_error(analytic, numeric, floor=1e-12):
    """Worst deviation relative to the gradient's scale (infinity norms)."""
    a = np.asarray(analytic, dtype=float)
    n = np.asarray(numeric, dtype=float)
    scale = np.maximum(np.abs(a).max(initial=0.0), np.abs(n).max(initial=0.0))
    return float(np.abs(a - n).max(initial=0.0) / max(scale, floor))


def check(fn, inputs, h=1e-3, name="", wrt=None):
    """Compare autodiff gradients of ``fn`` with central differences.

    ``fn`` maps float64 tensors to a scalar tensor.  ``inputs`` are arrays
    (or existing tensors, e.g. model parameters, whose data is perturbed in
    place).  ``wrt`` limits which inputs are checked.
    """
    with default_dtype(np.float64):
        tensors = [x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64), requires_grad=True)
                   for x in inputs]
        for t in tensors:
            t.data = t.data.astype(np.float64)
            t.requires_grad = True
            t.grad = None
        out = fn(*tensors)
        out.backward()
        idx = range(len(tensors)) if wrt is None else wrt
        analytic, numeric = [], []
        for i in idx:
            t = tensors[i]
            g = np.zeros_like(t.data) if t.grad is None else t.grad.copy()
            num = np.zeros_like(t.data)
            flat = t.data.reshape(-1)
            for k in range(flat.size):
                orig = flat[k]
                flat[k] = orig + h
                fp = float(fn(*tensors).data)
                flat[k] = orig - h
                fm = float(fn(*tensors).data)
                flat[k] = orig
                num.reshape(-1)[k] = (fp - fm) / (2 * h)
            analytic.append(g)
            numeric.append(num)
        err = max((rel_error(a, n) for a, n in zip(analytic, numeric)), default=0.0)
    return GradCheckResult(name, err, analytic, numeric)


def check_module(fn, module, h=1e-3, name="", max_per_param=None, rng=None):
    """FD check over a module's parameters (cast to float64 for the check).

    ``max_per_param`` samples that many entries per parameter to bound the
    cost; sampling uses ``rng`` and is deterministic for a seeded generator.
    """
    params = module.named_parameters()
    worst = 0.0
    module.astype(np.float64)
    with default_dtype(np.float64):
        module.zero_grad()
        fn().backward()
        for pname, p in params:
            g = np.zeros_like(p.data) if p.grad is None else p.grad
            flat = p.data.reshape(-1)
            picks = np.arange(flat.size)
            if max_per_param is not None and flat.size > max_per_param:
                picks = np.sort((rng or np.random.default_rng(0)).choice(flat.size, max_per_param, replace=False))
            num = np.zeros(picks.size)
            for j, k in enumerate(picks):
                orig = flat[k]
                flat[k] = orig + h
                fp = float(fn().data)
                flat[k] = orig - h
                fm = float(fn().data)
                flat[k] = orig
                num[j] = (fp - fm) / (2 * h)
            worst = max(worst, rel_error(g.reshape(-1)[picks], num))
    return worst
