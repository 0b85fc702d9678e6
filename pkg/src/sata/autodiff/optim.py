"""Adam with bias correction and the warmup + exponential-decay schedule."""

from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeMismatch


@dataclass
class AdamState:
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(params, grads, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """In-place Adam update of the arrays in ``params``.

    ``state`` is created lazily on the first call.  A ``None`` gradient is
    treated as zero.
    """
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    if len(state.m) != len(params) or len(grads) != len(params):
        raise ShapeMismatch("adam_step: params, grads and state lengths differ")
    state.step += 1
    t = state.step
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g is None:
            g = np.zeros_like(p)
        if g.shape != p.shape or m.shape != p.shape:
            raise ShapeMismatch(f"adam_step: grad {g.shape} / state {m.shape} vs param {p.shape}")
        m *= beta1
        m += (1 - beta1) * g
        v *= beta2
        v += (1 - beta2) * g * g
        m_hat = m / c1
        v_hat = v / c2
        p -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(p.dtype)


class Adam:
    def __init__(self, params, lr=1e-4, betas=(0.9, 0.999), eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.state = AdamState()

    def step(self, lr=None):
        adam_step([p.data for p in self.params], [p.grad for p in self.params], self.state,
                  self.lr if lr is None else lr, *self.betas, self.eps)

    def zero_grad(self):
        for p in self.params:
            p.grad = None


def lr_schedule(epoch, base_lr, warmup_epochs=30, gamma=0.99, min_factor=0.01):
    """Linear warmup to ``base_lr`` then exponential decay with a floor."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    if epoch < warmup_epochs:
        return base_lr * (epoch + 1) / warmup_epochs
    return base_lr * max(gamma ** (epoch - warmup_epochs + 1), min_factor)
