"""Continuous (VAE) and discrete (residual VQ) latent bottlenecks."""

import numpy as np

from .. import autodiff as ad
from ..autodiff.nn import Module
from ..autodiff.tensor import Tensor


class VAEBottleneck(Module):
    """Splits a ``2 * latent`` head into mean and log-variance."""

    def __init__(self, latent_dim):
        super().__init__()
        self.latent_dim = latent_dim

    def forward(self, pre, rng=None):
        """``(sample, aux)``; ``aux`` holds ``mu`` and ``logvar`` tensors.

        In training mode ``sample = mu + exp(logvar / 2) * eps`` with ``eps``
        drawn from ``rng``; in eval mode ``sample = mu``.
        """
        L = self.latent_dim
        mu = pre[..., :L]
        logvar = pre[..., L:]
        if self.training:
            rng = rng if rng is not None else np.random.default_rng(0)
            eps = rng.standard_normal(mu.shape).astype(mu.dtype)
            sample = ad.add(mu, ad.mul(ad.exp(ad.scalar_mul(logvar, 0.5)), eps))
        else:
            sample = mu
        return sample, {"mu": mu, "logvar": logvar}


def kl_divergence(mu, logvar):
    """Mean over elements of ``(exp(lv) + mu^2 - 1 - lv) / 2``."""
    t = ad.sub(ad.add(ad.exp(logvar), ad.square(mu)), ad.add(logvar, 1.0))
    return ad.scalar_mul(ad.mean(t), 0.5)


def nearest_code(residual, codebook):
    """Index of the closest code per row; exact ties go to the lowest index."""
    r = np.asarray(residual, dtype=np.float64)
    c = np.asarray(codebook, dtype=np.float64)
    d = (r * r).sum(-1, keepdims=True) - 2.0 * r @ c.T + (c * c).sum(-1)[None, :]
    return np.argmin(d, axis=1)


def residual_quantize(vectors, codebooks):
    """Greedy residual quantization of ``M x D`` vectors.

    Returns ``(indices M x K, quantized M x D, residuals)`` where
    ``residuals[k]`` is the input to stage ``k`` (``K + 1`` entries).
    """
    r = np.asarray(vectors, dtype=np.float64).copy()
    residuals = [r.copy()]
    idx = np.zeros((r.shape[0], len(codebooks)), dtype=np.int64)
    q = np.zeros_like(r)
    for k, cb in enumerate(codebooks):
        i = nearest_code(r, cb)
        sel = np.asarray(cb, dtype=np.float64)[i]
        idx[:, k] = i
        q += sel
        r = r - sel
        residuals.append(r.copy())
    return idx, q, residuals


class RVQBottleneck(Module):
    """Residual vector quantizer with EMA codebooks and dead-code reset.

    Codebooks and their running statistics are non-trainable buffers and
    are saved with the parameters.  The forward pass uses a straight-through
    estimator: ``pre + stop_gradient(quantized - pre)``.
    """

    def __init__(self, latent_dim, quantizers, codebook_size, decay=0.99, dead_code_steps=50, seed=0):
        super().__init__()
        self.latent_dim, self.quantizers, self.codebook_size = latent_dim, quantizers, codebook_size
        self.decay, self.dead_code_steps, self.seed = decay, dead_code_steps, seed
        K, S, D = quantizers, codebook_size, latent_dim
        self.codebooks = Tensor(np.zeros((K, S, D)))
        self.ema_count = Tensor(np.zeros((K, S)))
        self.ema_sum = Tensor(np.zeros((K, S, D)))
        self.last_used = Tensor(np.zeros((K, S)))
        self.initialized = Tensor(np.zeros(()))
        self.step = Tensor(np.zeros(()))

    def _init_codebooks(self, flat, rng):
        r = flat.astype(np.float64)
        books = np.zeros((self.quantizers, self.codebook_size, self.latent_dim))
        for k in range(self.quantizers):
            pick = rng.choice(len(r), self.codebook_size, replace=len(r) < self.codebook_size)
            books[k] = r[pick]
            r = r - books[k][nearest_code(r, books[k])]
        self.codebooks.data = books.astype(self.codebooks.dtype)
        self.ema_sum.data = books.astype(self.ema_sum.dtype)
        self.ema_count.data = np.ones_like(self.ema_count.data)
        self.initialized.data = np.ones_like(self.initialized.data)

    def _update(self, idx, residuals, step):
        """EMA codebook update, then reseed codes idle for too many steps."""
        rng = np.random.default_rng([self.seed, int(step)])
        a = self.decay
        books = self.codebooks.data.astype(np.float64)
        counts = self.ema_count.data.astype(np.float64)
        sums = self.ema_sum.data.astype(np.float64)
        last = self.last_used.data.astype(np.float64)
        S = self.codebook_size
        for k in range(self.quantizers):
            r = residuals[k]
            onehot = np.zeros((len(r), S))
            onehot[np.arange(len(r)), idx[:, k]] = 1.0
            n = onehot.sum(0)
            counts[k] = a * counts[k] + (1 - a) * n
            sums[k] = a * sums[k] + (1 - a) * onehot.T @ r
            # Laplace smoothing keeps rarely used codes finite
            total = counts[k].sum()
            smoothed = (counts[k] + 1e-5) / (total + S * 1e-5) * total
            books[k] = sums[k] / smoothed[:, None]
            last[k][n > 0] = step
            dead = np.flatnonzero(step - last[k] >= self.dead_code_steps)
            if dead.size:
                books[k][dead] = r[rng.integers(0, len(r), dead.size)]
                sums[k][dead] = books[k][dead]
                counts[k][dead] = 1.0
                last[k][dead] = step
        dt = self.codebooks.dtype
        self.codebooks.data = books.astype(dt)
        self.ema_count.data = counts.astype(dt)
        self.ema_sum.data = sums.astype(dt)
        self.last_used.data = last.astype(dt)

    def quantize(self, flat):
        return residual_quantize(flat, self.codebooks.data)

    def forward(self, pre, rng=None):
        """``(quantized, aux)`` with ``indices`` and ``commit`` in ``aux``."""
        pre = ad.as_tensor(pre)
        shape = pre.shape
        flat = pre.data.reshape(-1, self.latent_dim)
        if self.training and not self.initialized.data:
            self._init_codebooks(flat, np.random.default_rng([self.seed, 0]))
        idx, q, residuals = self.quantize(flat)
        q = q.reshape(shape).astype(pre.dtype)
        sg = Tensor(q - pre.data, dtype=pre.dtype)
        out = ad.add(pre, sg)
        commit = ad.mean(ad.square(ad.sub(pre, Tensor(q, dtype=pre.dtype))))
        if self.training:
            step = int(self.step.data) + 1
            self.step.data = np.asarray(step, dtype=self.step.dtype)
            self._update(idx, residuals, step)
        return out, {"indices": idx.reshape(shape[:-1] + (self.quantizers,)), "commit": commit}


def utilization(indices, codebook_size):
    """Fraction of codes used per stage, ``K`` values."""
    idx = np.asarray(indices).reshape(-1, np.asarray(indices).shape[-1])
    return np.array([np.unique(idx[:, k]).size / codebook_size for k in range(idx.shape[1])])
