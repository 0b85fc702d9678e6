"""scikit-learn style wrapper around training, encoding and reconstruction."""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import inference
from .errors import EmptyDataset, ValidationError
from .graphrepr import MotionGraphSequence
from .metrics import geometric_metrics
from .model import ModelConfig, collate, window_arrays
from .semantics import HashEmbedding, TagDictionary
from .skeleton import MotionClip
from .training import LossWeights, TrainConfig, fit, load_model, save_model


def check_motion_pairs(X):
    """Validate ``X`` as a non-empty list of ``(MotionClip, TagDictionary)`` pairs."""
    if X is None or len(X) == 0:
        raise EmptyDataset("no motion clips given")
    out = []
    for i, item in enumerate(X):
        if not (isinstance(item, (tuple, list)) and len(item) == 2):
            raise ValidationError(f"item {i}: expected a (clip, tags) pair")
        clip, tags = item
        if not isinstance(clip, MotionClip):
            raise ValidationError(f"item {i}: expected a MotionClip, got {type(clip).__name__}")
        if not isinstance(tags, TagDictionary):
            raise ValidationError(f"item {i}: expected a TagDictionary, got {type(tags).__name__}")
        out.append((clip, tags))
    return out


def check_sequences(seqs, d_text):
    """Validate prepared graph sequences against the text-embedding width."""
    if not seqs:
        raise EmptyDataset("no sequences")
    for i, s in enumerate(seqs):
        if not isinstance(s, MotionGraphSequence):
            raise ValidationError(f"item {i}: expected a MotionGraphSequence")
        if s.statics.X_t.shape[1] != d_text:
            raise ValidationError(f"item {i}: embedding width {s.statics.X_t.shape[1]} != d_text {d_text}")
    return list(seqs)


class SATAAutoencoder(TransformerMixin, BaseEstimator):
    """Motion autoencoder with ``fit`` / ``transform`` / ``predict``.

    ``X`` is a list of ``(MotionClip, TagDictionary)`` pairs.  ``transform``
    returns one ``T x latent_dim`` array per clip, ``predict`` the
    reconstructed clips and ``score`` the negative mean joint-position error
    in centimeters.
    """

    def __init__(self, hidden=64, heads=4, blocks_per_side=1, latent_dim=32, ff_inner=128, dropout=0.0,
                 bottleneck="vae", quantizers=2, codebook_size=64, window=64, overlap=16, d_text=64,
                 epochs=2000, batch_size=8, lr=3e-3, warmup_epochs=30, lr_gamma=0.998, min_lr_factor=0.05,
                 grad_clip=1.0, max_steps=None, stitch="crop", embedding_seed=0, seed=0):
        self.hidden = hidden
        self.heads = heads
        self.blocks_per_side = blocks_per_side
        self.latent_dim = latent_dim
        self.ff_inner = ff_inner
        self.dropout = dropout
        self.bottleneck = bottleneck
        self.quantizers = quantizers
        self.codebook_size = codebook_size
        self.window = window
        self.overlap = overlap
        self.d_text = d_text
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.warmup_epochs = warmup_epochs
        self.lr_gamma = lr_gamma
        self.min_lr_factor = min_lr_factor
        self.grad_clip = grad_clip
        self.max_steps = max_steps
        self.stitch = stitch
        self.embedding_seed = embedding_seed
        self.seed = seed

    def _model_config(self):
        return ModelConfig(hidden=self.hidden, heads=self.heads, blocks_per_side=self.blocks_per_side,
                           latent_dim=self.latent_dim, ff_inner=self.ff_inner, dropout=self.dropout,
                           bottleneck=self.bottleneck, quantizers=self.quantizers,
                           codebook_size=self.codebook_size, window=self.window, overlap=self.overlap,
                           d_text=self.d_text, seed=self.seed)

    def _train_config(self):
        return TrainConfig(epochs=self.epochs, batch_size=self.batch_size, lr=self.lr,
                           warmup_epochs=self.warmup_epochs, lr_gamma=self.lr_gamma,
                           min_lr_factor=self.min_lr_factor, grad_clip=self.grad_clip, seed=self.seed)

    def _provider(self):
        return HashEmbedding(self.d_text, self.embedding_seed)

    def _prepare(self, X):
        provider = self._provider()
        return [inference.prepare(clip, tags, provider) for clip, tags in check_motion_pairs(X)]

    def fit(self, X, y=None, log_path=None):
        seqs = check_sequences(self._prepare(X), self.d_text)
        result = fit(self._model_config(), seqs, self._train_config(), LossWeights(), log_path=log_path,
                     max_steps=self.max_steps)
        self.model_ = result.model
        self.history_ = result.history
        self.n_steps_ = result.steps
        return self

    def transform(self, X):
        """Deterministic per-frame latents, one ``T x latent_dim`` array per clip."""
        check_is_fitted(self, "model_")
        out = []
        for seq in self._prepare(X):
            plan = inference.plan_windows(seq.n_frames, self.window, self.overlap, self.stitch)
            parts = []
            for s, e in plan.spans:
                f, t = window_arrays(seq, s, e - s)
                parts.append(self.model_.latent(collate([(seq, f, t)]))[:, 0].astype(np.float64))
            out.append(inference.stitch(parts, plan))
        return out

    def predict(self, X):
        """Reconstructed clips on each source skeleton (canonical frame)."""
        check_is_fitted(self, "model_")
        provider = self._provider()
        return [inference.reconstruct(self.model_, clip, tags, provider, self.stitch, self.window, self.overlap)
                for clip, tags in check_motion_pairs(X)]

    def retarget(self, X, target_skeleton, target_tags):
        check_is_fitted(self, "model_")
        provider = self._provider()
        return [inference.retarget(self.model_, clip, tags, target_skeleton, target_tags, provider, self.stitch,
                                   self.window, self.overlap) for clip, tags in check_motion_pairs(X)]

    def score(self, X, y=None):
        """Negative mean joint-position error (cm) of the reconstructions."""
        from .kinematics import canonicalize

        preds = self.predict(X)
        jps = [geometric_metrics(canonicalize(clip), p).jp for (clip, _), p in zip(check_motion_pairs(X), preds)]
        return -float(np.mean(jps))

    def save(self, path):
        check_is_fitted(self, "model_")
        save_model(path, self.model_, self._train_config(), LossWeights(),
                   extra={"embedding": {"kind": "hash", "dimension": self.d_text, "seed": self.embedding_seed},
                          "estimator": self.get_params()})

    @classmethod
    def load(cls, path):
        model, cfg = load_model(path)
        est = cls(**cfg.get("estimator", {}))
        est.model_ = model
        return est


__all__ = ["SATAAutoencoder", "check_motion_pairs", "check_sequences"]
