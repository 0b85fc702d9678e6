"""Semantic-aware modulation, spatial and temporal blocks.

Activations are laid out ``(T, N, C)``: frames, nodes of every graph in
the batch, channels.
"""

import numpy as np

from .. import autodiff as ad
from ..autodiff.nn import MLP, LayerNorm, Linear, Module
from ..errors import ShapeMismatch


def sincos_features(coords, bands):
    """Per-coordinate ``(sin, cos)`` pairs at frequencies ``pi * 2**k``.

    ``coords`` is ``N x D``; the result is ``N x (D * 2 * bands)`` with the
    pairs of one coordinate kept together.
    """
    coords = np.asarray(coords, dtype=np.float64)
    freq = np.pi * 2.0 ** np.arange(bands)
    ang = coords[..., None] * freq  # N, D, bands
    out = np.stack([np.sin(ang), np.cos(ang)], axis=-1)  # N, D, bands, 2
    return out.reshape(coords.shape[0], -1)


def positional_encoding(T, dim):
    """Standard sinusoidal encoding, ``T x dim``."""
    pos = np.arange(T)[:, None]
    i = np.arange(0, dim, 2)
    div = np.exp(-np.log(10000.0) * i / dim)
    pe = np.zeros((T, dim))
    pe[:, 0::2] = np.sin(pos * div)
    pe[:, 1::2] = np.cos(pos * div)[:, : dim // 2]
    return pe


class SeAM(Module):
    """Semantic-aware feature modulation.

    Motion features are embedded, normalized and FiLM-modulated by a
    condition built from rest geometry and joint semantics, then added back
    through a sigmoid gate::

        z_m = phi_m(F_m);  z_s = phi_s(sincos([X_g; X_l]));  z_t = phi_t(X_t)
        c = Phi([z_s; z_t]);  [gamma, beta] = Psi(c);  g = sigmoid(W_g c)
        out = z_m + g * (LN(z_m) * (1 + gamma) + beta)

    With ``embed_input=False`` the input is assumed already ``hidden`` wide
    and ``phi_m`` is skipped.
    """

    def __init__(self, d_in, hidden, d_text, bands, rng, embed_input=True):
        super().__init__()
        self.hidden = hidden
        self.bands = bands
        self.phi_m = Linear(d_in, hidden, rng) if embed_input else None
        self.phi_s = Linear(6 * 2 * bands, hidden, rng)
        self.phi_t = Linear(d_text, hidden, rng)
        self.Phi = MLP([2 * hidden, hidden, hidden], rng)
        self.Psi = Linear(hidden, 2 * hidden, rng)
        self.W_g = Linear(hidden, hidden, rng, bias=False)

    def condition(self, X_g, X_l, X_t):
        """``(gamma, beta, gate)``, each ``N x hidden``."""
        geo = sincos_features(np.concatenate([X_g, X_l], axis=-1), self.bands)
        z_s = self.phi_s(ad.Tensor(geo))
        z_t = self.phi_t(ad.Tensor(X_t))
        c = self.Phi(ad.concat([z_s, z_t], axis=-1))
        gb = self.Psi(c)
        gamma, beta = gb[:, : self.hidden], gb[:, self.hidden:]
        gate = ad.sigmoid(self.W_g(c))
        return gamma, beta, gate

    def forward(self, F_m, X_g, X_l, X_t):
        F_m = ad.as_tensor(F_m)
        N = F_m.shape[-2]
        if not (len(X_g) == len(X_l) == len(X_t) == N):
            raise ShapeMismatch(f"SeAM: {N} motion rows but statics have {len(X_g)}/{len(X_l)}/{len(X_t)}")
        z_m = self.phi_m(F_m) if self.phi_m is not None else F_m
        gamma, beta, gate = self.condition(X_g, X_l, X_t)
        x_hat = ad.add(ad.mul(ad.layer_norm(z_m), ad.add(gamma, 1.0)), beta)
        return ad.add(z_m, ad.mul(gate, x_hat))


class MultiHeadAttention(Module):
    """Self-attention over axis -2 of a ``(B, L, C)`` input."""

    def __init__(self, dim, heads, rng):
        super().__init__()
        self.dim, self.heads = dim, heads
        self.qkv = Linear(dim, 3 * dim, rng)
        self.proj = Linear(dim, dim, rng)
        self.last_weights = None

    def forward(self, x, mask=None):
        B, L, Cdim = x.shape
        h, d = self.heads, Cdim // self.heads
        qkv = self.qkv(x)
        qkv = ad.transpose(ad.reshape(qkv, (B, L, 3, h, d)), (2, 0, 3, 1, 4))
        q, k, v = qkv[0], qkv[1], qkv[2]
        scores = ad.scalar_mul(ad.matmul(q, ad.swapaxes(k, -1, -2)), 1.0 / np.sqrt(d))
        if mask is not None:
            scores = ad.add(scores, mask)
        w = ad.softmax(scores, axis=-1)
        self.last_weights = w.data
        out = ad.matmul(w, v)  # B, h, L, d
        out = ad.reshape(ad.transpose(out, (0, 2, 1, 3)), (B, L, Cdim))
        return self.proj(out)


class SpatialBlock(Module):
    """Message passing plus graph-masked attention, fused by an MLP.

    Path A is GINE-style: ``MLP((1 + eps) h_i + sum_j relu(h_j + e_ij))``
    with ``e_ij`` from a two-layer ReLU MLP over (depth, reverse depth).
    Path B attends only within each graph.  Output: ``H + MLP(A + B)``.
    """

    eps = 0.0

    def __init__(self, hidden, heads, dropout, rng):
        super().__init__()
        self.norm = LayerNorm(hidden)
        self.edge_mlp = MLP([2, hidden, hidden], rng)
        self.gine = MLP([hidden, hidden, hidden], rng)
        self.attn = MultiHeadAttention(hidden, heads, rng)
        self.fuse = MLP([hidden, hidden, hidden], rng)
        self.dropout = dropout

    def forward(self, H, batch, stream=None):
        T, N, Cdim = H.shape
        x = self.norm(H)
        # path A: both directions of every tree edge
        e = batch.edges
        src = np.concatenate([e[:, 0], e[:, 1]])
        dst = np.concatenate([e[:, 1], e[:, 0]])
        if len(src):
            ef = self.edge_mlp(ad.Tensor(np.concatenate([batch.edge_feat, batch.edge_feat])))
            msg = ad.relu(ad.add(ad.gather_rows(x, src, axis=1), ef))
            agg = ad.scatter_add_rows(msg, dst, N, axis=1)
            a_in = ad.add(ad.scalar_mul(x, 1.0 + self.eps), agg)
        else:
            a_in = ad.scalar_mul(x, 1.0 + self.eps)
        A = self.gine(a_in)
        # path B: attention masked to each graph
        B = self.attn(x, mask=ad.Tensor(batch.attention_mask()))
        B = ad.dropout(B, self.dropout, self.training, stream)
        out = self.fuse(ad.add(A, B))
        return ad.add(H, ad.dropout(out, self.dropout, self.training, stream))


def to_streams(H):
    """``(T, N, C) -> (N, T, C)``: one temporal stream per joint."""
    return ad.transpose(H, (1, 0, 2))


def from_streams(S):
    """Inverse of :func:`to_streams`."""
    return ad.transpose(S, (1, 0, 2))


class TemporalBlock(Module):
    """Pre-norm Transformer layer applied to every joint stream independently."""

    def __init__(self, hidden, heads, ff_inner, dropout, rng):
        super().__init__()
        self.hidden = hidden
        self.norm1 = LayerNorm(hidden)
        self.attn = MultiHeadAttention(hidden, heads, rng)
        self.norm2 = LayerNorm(hidden)
        self.ff = MLP([hidden, ff_inner, hidden], rng)
        self.dropout = dropout

    def forward(self, H, stream=None):
        S = to_streams(H)  # N, T, C
        T = S.shape[1]
        pe = positional_encoding(T, self.hidden).astype(H.dtype)
        x = ad.add(self.norm1(S), pe)
        a = self.attn(x)
        S = ad.add(S, ad.dropout(a, self.dropout, self.training, stream))
        f = self.ff(self.norm2(S))
        S = ad.add(S, ad.dropout(f, self.dropout, self.training, stream))
        return from_streams(S)
