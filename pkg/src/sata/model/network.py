"""Encoder, decoder and the full autoencoder."""

import numpy as np

from .. import autodiff as ad
from ..autodiff.nn import MLP, LayerNorm, Linear, Module
from ..autodiff.tensor import Tensor
from ..errors import ShapeMismatch
from ..graphrepr import OUTPUT_DIM
from .batch import check_edges
from .bottleneck import RVQBottleneck, VAEBottleneck
from .config import ModelConfig
from .layers import SeAM, SpatialBlock, TemporalBlock


class Block(Module):
    """One spatial step followed (optionally) by one temporal step."""

    def __init__(self, cfg, rng):
        super().__init__()
        self.spatial = SpatialBlock(cfg.hidden, cfg.heads, cfg.dropout, rng)
        self.temporal = TemporalBlock(cfg.hidden, cfg.heads, cfg.ff_inner, cfg.dropout, rng) if cfg.temporal else None

    def forward(self, H, batch, stream=None):
        H = self.spatial(H, batch, stream)
        if self.temporal is not None:
            H = self.temporal(H, stream)
        return H


def _check(batch, width, H):
    T, N = H.shape[:2]
    if N != batch.n_nodes:
        raise ShapeMismatch(f"{N} node rows for a batch of {batch.n_nodes} nodes")
    check_edges(batch.edges, batch.graph_id)


class Encoder(Module):
    """SeAM, interleaved blocks, final norm, per-frame max over each graph's nodes, head."""

    def __init__(self, cfg, rng):
        super().__init__()
        self.seam = SeAM(cfg.feature_dim, cfg.hidden, cfg.d_text, cfg.sincos_bands, rng)
        self.blocks = [Block(cfg, rng) for _ in range(cfg.blocks_per_side)]
        out = 2 * cfg.latent_dim if cfg.bottleneck == "vae" else cfg.latent_dim
        self.norm = LayerNorm(cfg.hidden)
        self.head = Linear(cfg.hidden, out, rng)

    def features(self, F, batch, stream=None):
        """Node features after the last block, ``T x N x hidden``."""
        F = ad.as_tensor(F)
        _check(batch, F.shape[-1], F)
        H = self.seam(F, batch.X_g, batch.X_l, batch.X_t)
        for blk in self.blocks:
            H = blk(H, batch, stream)
        return self.norm(H)

    def forward(self, F, batch, stream=None):
        H = self.features(F, batch, stream)
        pooled, _ = ad.segment_max(H, batch.graph_id, batch.n_graphs, axis=1)
        return self.head(pooled)  # T, G, out


class Decoder(Module):
    """Broadcast the frame latent to every target node, condition, decode."""

    def __init__(self, cfg, rng):
        super().__init__()
        self.seam = SeAM(cfg.latent_dim, cfg.hidden, cfg.d_text, cfg.sincos_bands, rng)
        self.blocks = [Block(cfg, rng) for _ in range(cfg.blocks_per_side)]
        if cfg.decoder_reinject:
            self.reinject = [SeAM(cfg.hidden, cfg.hidden, cfg.d_text, cfg.sincos_bands, rng, embed_input=False)
                             for _ in range(cfg.blocks_per_side)]
        else:
            self.reinject = None
        self.norm = LayerNorm(cfg.hidden)
        self.head = MLP([cfg.hidden, cfg.hidden, OUTPUT_DIM], rng)

    def forward(self, z, batch, stream=None):
        z = ad.as_tensor(z)
        if z.shape[1] != batch.n_graphs:
            raise ShapeMismatch(f"{z.shape[1]} latents for {batch.n_graphs} target graphs")
        Z = ad.gather_rows(z, batch.graph_id, axis=1)  # T, N, latent
        H = self.seam(Z, batch.X_g, batch.X_l, batch.X_t)
        for i, blk in enumerate(self.blocks):
            if self.reinject is not None:
                H = self.reinject[i](H, batch.X_g, batch.X_l, batch.X_t)
            H = blk(H, batch, stream)
        return self.head(self.norm(H))


class SATA(Module):
    """Semantic-aware, topology-agnostic motion autoencoder."""

    def __init__(self, cfg=None):
        super().__init__()
        self.config = cfg or ModelConfig()
        rng = np.random.default_rng(self.config.seed)
        self.encoder = Encoder(self.config, rng)
        if self.config.bottleneck == "vae":
            self.bottleneck = VAEBottleneck(self.config.latent_dim)
        else:
            c = self.config
            self.bottleneck = RVQBottleneck(c.latent_dim, c.quantizers, c.codebook_size, c.ema_decay,
                                            c.dead_code_steps, c.seed)
        self.decoder = Decoder(self.config, rng)
        # per-channel standardization, fitted on the training set
        self.in_mean = Tensor(np.zeros(self.config.feature_dim))
        self.in_std = Tensor(np.ones(self.config.feature_dim))
        self.out_mean = Tensor(np.zeros(OUTPUT_DIM))
        self.out_std = Tensor(np.ones(OUTPUT_DIM))

    def set_normalization(self, features, targets, floor=1e-2):
        """Fit channel statistics from ``(..., 23)`` features and ``(..., 11)`` targets."""
        f = np.asarray(features, dtype=np.float64).reshape(-1, self.config.feature_dim)
        t = np.asarray(targets, dtype=np.float64).reshape(-1, OUTPUT_DIM)
        dt = self.in_mean.dtype
        self.in_mean.data = f.mean(0).astype(dt)
        self.in_std.data = np.maximum(f.std(0), floor).astype(dt)
        self.out_mean.data = t.mean(0).astype(dt)
        self.out_std.data = np.maximum(t.std(0), floor).astype(dt)

    def encode(self, batch, stream=None):
        """Per-frame pre-latent head output, ``T x G x (2L or L)``."""
        F = (batch.features - self.in_mean.data) / self.in_std.data
        return self.encoder(F.astype(self.in_mean.dtype), batch, stream)

    def quantize(self, pre, rng=None):
        return self.bottleneck(pre, rng)

    def decode(self, z, batch, stream=None):
        """``T x N x 11`` raw outputs on the target batch."""
        y = self.decoder(z, batch, stream)
        return ad.add(ad.mul(y, self.out_std), self.out_mean)

    def latent(self, batch):
        """Deterministic latent (mean / quantized code) without gradients."""
        with ad.no_grad():
            was = self.training
            self.eval()
            z, _ = self.quantize(self.encode(batch))
            self.train(was)
        return z.data

    def forward(self, batch, target=None, rng=None, stream=None):
        """``(outputs, aux)``; decodes onto ``target`` (default: the source)."""
        pre = self.encode(batch, stream)
        z, aux = self.quantize(pre, rng)
        out = self.decode(z, target if target is not None else batch, stream)
        return out, aux
