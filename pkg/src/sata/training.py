"""Reconstruction objectives, window sampling and the training loop."""

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import checkpoint
from .autodiff.ops import DropoutStream
from .autodiff.optim import Adam, lr_schedule
from .errors import EmptyDataset, InvalidConfig, NaNLoss, ShapeMismatch
from .graphrepr import OUTPUT_DIM
from .model import SATA, ModelConfig, collate, kl_divergence, window_arrays

SIXD_EPS2 = 1e-12


@dataclass(frozen=True)
class LossWeights:
    w_rot: float = 1.0
    w_pos: float = 1.0
    w_vel: float = 0.5
    w_contact: float = 0.1
    w_penetration: float = 0.1
    w_smooth: float = 0.1
    w_label: float = 0.1
    w_root: float = 1.0
    lambda_kl: float = 1e-4
    lambda_commit: float = 0.02

    def __post_init__(self):
        for f in fields(self):
            if not getattr(self, f.name) >= 0:
                raise InvalidConfig(f"loss weight {f.name} must be >= 0")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        unknown = sorted(set(d) - {f.name for f in fields(cls)})
        if unknown:
            raise InvalidConfig(f"unknown loss weight keys: {unknown}")
        return cls(**d)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 400
    batch_size: int = 8
    lr: float = 1e-4
    warmup_epochs: int = 30
    lr_gamma: float = 0.99
    min_lr_factor: float = 0.01
    grad_clip: float = 0.0
    checkpoint_every: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.lr <= 0 or self.warmup_epochs < 0:
            raise InvalidConfig("need epochs >= 0, batch_size >= 1, lr > 0, warmup_epochs >= 0")
        if not 0 < self.lr_gamma <= 1 or not 0 <= self.min_lr_factor <= 1 or self.grad_clip < 0:
            raise InvalidConfig("need 0 < lr_gamma <= 1, 0 <= min_lr_factor <= 1, grad_clip >= 0")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        unknown = sorted(set(d) - {f.name for f in fields(cls)})
        if unknown:
            raise InvalidConfig(f"unknown training config keys: {unknown}")
        return cls(**d)

    @classmethod
    def toy(cls, **overrides):
        """Settings for the small overfit runs: 2000 epochs, larger clipped steps."""
        base = dict(epochs=2000, batch_size=8, lr=3e-3, warmup_epochs=30, lr_gamma=0.998, min_lr_factor=0.05,
                    grad_clip=1.0)
        base.update(overrides)
        return cls(**base)


# --- differentiable recovery ---------------------------------------------------

def sixd_matrices(q):
    """Gram-Schmidt on ``(..., 6)`` tensors; columns stacked on the last axis."""
    a, b = q[..., 0:3], q[..., 3:6]
    c1 = ad.div(a, ad.sqrt(ad.add(ad.sum(ad.square(a), axis=-1, keepdims=True), SIXD_EPS2)))
    bp = ad.sub(b, ad.mul(ad.sum(ad.mul(c1, b), axis=-1, keepdims=True), c1))
    c2 = ad.div(bp, ad.sqrt(ad.add(ad.sum(ad.square(bp), axis=-1, keepdims=True), SIXD_EPS2)))
    c3 = ad.cross(c1, c2)
    return ad.stack([c1, c2, c3], axis=-1)


def _levels(batch):
    depth = batch.depth
    levels = [np.flatnonzero(depth == d) for d in range(int(depth.max()) + 1)]
    loc = np.zeros(len(depth), dtype=np.int64)
    for nodes in levels:
        loc[nodes] = np.arange(len(nodes))
    return levels, loc


def root_trajectory(r):
    """Integrate ``T x G x 4`` root channels to yaw matrices and positions."""
    yaw = ad.cumsum(r[..., 0], axis=0)
    c, s = ad.cos(yaw), ad.sin(yaw)
    zero = ad.Tensor(np.zeros(c.shape))
    one = ad.Tensor(np.ones(c.shape))
    Ry = ad.stack([ad.stack([c, zero, s], -1), ad.stack([zero, one, zero], -1),
                   ad.stack([ad.neg(s), zero, c], -1)], axis=-2)
    dx, dz = r[..., 1], r[..., 2]
    wx = ad.add(ad.mul(c, dx), ad.mul(s, dz))
    wz = ad.sub(ad.mul(c, dz), ad.mul(s, dx))
    pos = ad.stack([ad.cumsum(wx, axis=0), r[..., 3], ad.cumsum(wz, axis=0)], axis=-1)
    return Ry, pos


def batch_positions(out, batch):
    """Global joint positions ``T x N x 3`` from decoder outputs (differentiable)."""
    out = ad.as_tensor(out)
    R = sixd_matrices(out[..., 0:6])
    levels, loc = _levels(batch)
    roots = levels[0]
    Ry, root_pos = root_trajectory(out[:, roots, 6:10])
    G = [ad.matmul(Ry, ad.gather_rows(R, roots, axis=1))]
    P = [root_pos]
    for nodes in levels[1:]:
        pl = loc[batch.parents[nodes]]
        Gp = ad.gather_rows(G[-1], pl, axis=1)
        Pp = ad.gather_rows(P[-1], pl, axis=1)
        off = ad.Tensor(batch.offsets[nodes][..., None])
        P.append(ad.add(Pp, ad.reshape(ad.matmul(Gp, off), Pp.shape)))
        G.append(ad.matmul(Gp, ad.gather_rows(R, nodes, axis=1)))
    order = np.concatenate(levels)
    return ad.gather_rows(ad.concat(P, axis=1), np.argsort(order), axis=1)


# --- losses ----------------------------------------------------------------------

def penetration(foot_heights):
    """Per-entry squared depth below the ground plane."""
    return ad.square(ad.relu(ad.neg(ad.as_tensor(foot_heights))))


def _excess(pred_term, gt_term):
    # penalize only what the prediction adds on top of the ground truth
    return ad.relu(ad.sub(pred_term, gt_term))


def reconstruction_loss(pred, batch, weights=None, gt_positions=None):
    """Weighted reconstruction objective and its components.

    ``pred`` is the ``T x N x 11`` decoder output for ``batch``.  Physical
    terms (contact slide, penetration, smoothness) measure the excess of
    the prediction over the ground truth, so ``L(gt, gt) = 0`` even when
    the reference itself slides slightly.
    """
    w = weights or LossWeights()
    pred = ad.as_tensor(pred)
    gt = batch.targets
    if pred.shape != gt.shape:
        raise ShapeMismatch(f"prediction {pred.shape} vs target {gt.shape}")
    gt_t = ad.Tensor(gt, dtype=pred.dtype)
    if gt_positions is None:
        with ad.no_grad():
            gt_positions = batch_positions(gt_t, batch).data
    gp = ad.Tensor(gt_positions, dtype=pred.dtype)
    P = batch_positions(pred, batch)
    T = pred.shape[0]
    comp = {}
    comp["rot"] = ad.mean(ad.square(ad.sub(pred[..., 0:6], gt_t[..., 0:6])))
    comp["pos"] = ad.mean(ad.square(ad.sub(P, gp)))
    comp["root"] = ad.mean(ad.square(ad.sub(pred[:, batch.roots, 6:10], gt_t[:, batch.roots, 6:10])))
    comp["label"] = ad.mean(ad.square(ad.sub(pred[..., 10], gt_t[..., 10])))
    feet = np.flatnonzero(batch.contact)
    zero = ad.Tensor(np.zeros((), dtype=pred.dtype))
    if T > 1:
        V, Vg = ad.sub(P[1:], P[:-1]), ad.sub(gp[1:], gp[:-1])
        comp["vel"] = ad.mean(ad.square(ad.sub(V, Vg)))
        if feet.size:
            mask = (gt[1:, feet, 10] > 0.5).astype(pred.dtype)
            sp = ad.add(ad.square(V[:, feet, 0]), ad.square(V[:, feet, 2]))
            spg = ad.add(ad.square(Vg[:, feet, 0]), ad.square(Vg[:, feet, 2]))
            comp["contact"] = ad.scalar_mul(ad.sum(ad.mul(_excess(sp, spg), mask)), 1.0 / max(mask.sum(), 1.0))
        else:
            comp["contact"] = zero
    else:
        comp["vel"] = comp["contact"] = zero
    if T > 2:
        A, Ag = ad.sub(V[1:], V[:-1]), ad.sub(Vg[1:], Vg[:-1])
        comp["smooth"] = ad.mean(_excess(ad.sum(ad.square(A), axis=-1), ad.sum(ad.square(Ag), axis=-1)))
    else:
        comp["smooth"] = zero
    if feet.size:
        ground = batch.ground[batch.graph_id[feet]]
        h = ad.sub(P[:, feet, 1], ground.astype(pred.dtype))
        comp["penetration"] = ad.mean(_excess(penetration(h), penetration(gp.data[:, feet, 1] - ground)))
    else:
        comp["penetration"] = zero
    total = ad.add(ad.scalar_mul(comp["rot"], w.w_rot), ad.scalar_mul(comp["pos"], w.w_pos))
    for key, wt in (("vel", w.w_vel), ("contact", w.w_contact), ("penetration", w.w_penetration),
                    ("smooth", w.w_smooth), ("label", w.w_label), ("root", w.w_root)):
        total = ad.add(total, ad.scalar_mul(comp[key], wt))
    return total, comp


def kl_loss(mu, logvar):
    return kl_divergence(ad.as_tensor(mu), ad.as_tensor(logvar))


def total_loss(model, batch, weights=None, rng=None, stream=None):
    """Forward pass plus composite objective; returns ``(loss, components, aux)``."""
    w = weights or LossWeights()
    out, aux = model(batch, rng=rng, stream=stream)
    rec, comp = reconstruction_loss(out, batch, w)
    if "mu" in aux:
        reg = kl_loss(aux["mu"], aux["logvar"])
        comp["kl"] = reg
        loss = ad.add(rec, ad.scalar_mul(reg, w.lambda_kl))
    else:
        comp["commit"] = aux["commit"]
        loss = ad.add(rec, ad.scalar_mul(aux["commit"], w.lambda_commit))
    return loss, comp, aux


# --- data --------------------------------------------------------------------------

def make_batches(dataset, window=64, batch_size=8, seed=0, epoch=0):
    """Batches for one epoch: shuffled clips, one random window per clip."""
    if not dataset:
        raise EmptyDataset("training set is empty")
    rng = np.random.default_rng([int(seed), int(epoch)])
    order = rng.permutation(len(dataset))
    items = []
    for i in order:
        seq = dataset[i]
        if seq.n_frames < 1:
            raise EmptyDataset(f"clip {i} has no frames")
        start = int(rng.integers(0, max(seq.n_frames - window, 0) + 1))
        f, t = window_arrays(seq, start, window)
        items.append((seq, f, t))
    return [collate(items[k:k + batch_size]) for k in range(0, len(items), batch_size)]


# --- loop ----------------------------------------------------------------------------

def _clip_grads(params, max_norm):
    total = np.sqrt(sum(float((p.grad.astype(np.float64) ** 2).sum()) for p in params if p.grad is not None))
    if total > max_norm:
        scale = max_norm / (total + 1e-12)
        for p in params:
            if p.grad is not None:
                p.grad = p.grad * scale
    return total


def checkpoint_config(model, train_cfg=None, weights=None, extra=None):
    cfg = {"model": model.config.to_dict()}
    if train_cfg is not None:
        cfg["train"] = train_cfg.to_dict()
    if weights is not None:
        cfg["weights"] = weights.to_dict()
    if extra:
        cfg.update(extra)
    return cfg


def save_model(path, model, train_cfg=None, weights=None, extra=None):
    checkpoint.save(path, checkpoint_config(model, train_cfg, weights, extra), model.state_dict())


def load_model(path):
    """Rebuild a model from a checkpoint file; returns ``(model, config)``."""
    cfg, params = checkpoint.load(path)
    model = SATA(ModelConfig.from_dict(cfg["model"]))
    model.load_state_dict(params)
    model.eval()
    return model, cfg


@dataclass
class FitResult:
    model: SATA
    history: list
    steps: int


def fit(model_cfg, dataset, train_cfg=None, weights=None, log_path=None, checkpoint_path=None,
        max_steps=None, callback=None):
    """Train a fresh model.

    One epoch draws one random window per clip.  A JSON line per epoch is
    appended to ``log_path``; a checkpoint is written every
    ``checkpoint_every`` epochs (if set) and at the end.  Identical inputs
    give bit-identical parameters.
    """
    tc = train_cfg or TrainConfig()
    w = weights or LossWeights()
    if not dataset:
        raise EmptyDataset("training set is empty")
    model = SATA(model_cfg)
    model.set_normalization(np.concatenate([s.features.reshape(-1, s.features.shape[-1]) for s in dataset]),
                            np.concatenate([s.targets.reshape(-1, s.targets.shape[-1]) for s in dataset]))
    model.train()
    params = model.parameters()
    opt = Adam(params, lr=tc.lr)
    stream = DropoutStream(tc.seed)
    history = []
    step = 0
    log = open(log_path, "a", encoding="utf-8") if log_path else None
    try:
        for epoch in range(tc.epochs):
            if max_steps is not None and step >= max_steps:
                break
            lr = lr_schedule(epoch, tc.lr, tc.warmup_epochs, tc.lr_gamma, tc.min_lr_factor)
            sums, n = {}, 0
            for batch in make_batches(dataset, model_cfg.window, tc.batch_size, tc.seed, epoch):
                if max_steps is not None and step >= max_steps:
                    break
                rng = np.random.default_rng([tc.seed, step, 1])
                opt.zero_grad()
                loss, comp, _ = total_loss(model, batch, w, rng=rng, stream=stream)
                value = float(loss.data)
                if not np.isfinite(value):
                    raise NaNLoss(step)
                loss.backward()
                if tc.grad_clip > 0:
                    _clip_grads(params, tc.grad_clip)
                opt.step(lr)
                step += 1
                n += 1
                sums["loss"] = sums.get("loss", 0.0) + value
                for k, v in comp.items():
                    sums[k] = sums.get(k, 0.0) + float(v.data)
            if n == 0:
                break
            row = {"epoch": epoch, "lr": lr, "steps": step}
            row.update({k: v / n for k, v in sums.items()})
            history.append(row)
            if log:
                log.write(json.dumps(row) + "\n")
                log.flush()
            if callback:
                callback(row)
            if checkpoint_path and tc.checkpoint_every and (epoch + 1) % tc.checkpoint_every == 0:
                save_model(checkpoint_path, model, tc, w)
    finally:
        if log:
            log.close()
    model.eval()
    if checkpoint_path:
        save_model(checkpoint_path, model, tc, w)
    return FitResult(model, history, step)


__all__ = [
    "LossWeights", "TrainConfig", "sixd_matrices", "root_trajectory", "batch_positions", "penetration",
    "reconstruction_loss", "kl_loss", "total_loss", "make_batches", "fit", "FitResult", "save_model",
    "load_model", "checkpoint_config", "OUTPUT_DIM",
]
