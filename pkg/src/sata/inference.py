"""Sliding-window reconstruction and retargeting."""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import InvalidConfig, ShapeMismatch, SpanMismatch
from .graphrepr import OUTPUT_DIM, extract_dynamics, recover_motion
from .kinematics import canonicalize
from .model import sequence_batch, static_batch, window_arrays, collate
from .semantics import HashEmbedding, embed, make_provider, resolve_descriptions


@dataclass(frozen=True)
class WindowPlan:
    spans: tuple
    overlap: int
    mode: str = "crop"

    @property
    def n_frames(self):
        return self.spans[-1][1] if self.spans else 0


def plan_windows(T, window=64, overlap=16, mode="crop"):
    """Spans of ``window`` frames at stride ``window - overlap``; the last is end-aligned."""
    if not window > overlap >= 0:
        raise InvalidConfig(f"need window > overlap >= 0, got window={window}, overlap={overlap}")
    if T < 1:
        raise ShapeMismatch("cannot plan windows for an empty clip")
    if mode not in ("crop", "blend"):
        raise InvalidConfig(f"stitch mode must be 'crop' or 'blend', got {mode!r}")
    if T <= window:
        return WindowPlan(((0, T),), overlap, mode)
    stride = window - overlap
    starts = [0]
    while starts[-1] + window < T:
        starts.append(min(starts[-1] + stride, T - window))
    return WindowPlan(tuple((s, s + window) for s in starts), overlap, mode)


def stitch(outputs, plan, mode=None):
    """Merge per-span outputs into one ``T x J x C`` array.

    ``crop`` keeps the earlier window on overlapping frames.  ``blend``
    cross-fades linearly: on an overlap of ``L`` frames the later window's
    weight at offset ``i`` is ``(i + 1) / (L + 1)``.
    """
    mode = mode or plan.mode
    if mode not in ("crop", "blend"):
        raise InvalidConfig(f"stitch mode must be 'crop' or 'blend', got {mode!r}")
    if len(outputs) != len(plan.spans):
        raise SpanMismatch(f"{len(outputs)} window outputs for {len(plan.spans)} spans")
    outputs = [np.asarray(o) for o in outputs]
    tail = outputs[0].shape[1:]
    for k, ((s, e), o) in enumerate(zip(plan.spans, outputs)):
        if o.shape[0] != e - s or o.shape[1:] != tail:
            raise SpanMismatch(f"window {k} output {o.shape} does not fit span [{s}, {e})")
    out = np.zeros((plan.n_frames,) + tail, dtype=np.result_type(*outputs))
    done = 0
    for (s, e), o in zip(plan.spans, outputs):
        if s < done and mode == "blend":
            L = done - s
            w = ((np.arange(L) + 1.0) / (L + 1.0)).reshape((L,) + (1,) * len(tail))
            out[s:done] = (1.0 - w) * out[s:done] + w * o[:L]
        out[max(s, done):e] = o[max(s, done) - s:]
        done = e
    return out


def provider_for(ckpt_config, dimension):
    """Embedding provider recorded in a checkpoint, else a hash provider."""
    spec = (ckpt_config or {}).get("embedding")
    if not spec:
        return HashEmbedding(dimension)
    return make_provider(spec.get("kind", "hash"), spec.get("dimension", dimension), spec.get("seed", 0),
                         spec.get("path"))


def prepare(clip, tags, provider, contact_joints=None):
    """Canonicalize and convert a clip; returns the graph sequence."""
    canon = canonicalize(clip)
    desc = resolve_descriptions(canon.skeleton, tags)
    return extract_dynamics(canon, contact_joints=contact_joints, embeddings=embed(desc, provider), descriptions=desc)


def _target(skeleton, tags, provider, n_frames):
    desc = resolve_descriptions(skeleton, tags)
    return static_batch(skeleton, embed(desc, provider), n_frames)


def run_windows(model, seq, target_skeleton, target_tags, provider, window=None, overlap=None, mode="crop"):
    """Encode ``seq`` window by window and decode each onto the target.

    Returns the stitched ``T x J' x 11`` raw outputs.
    """
    cfg = model.config
    window = cfg.window if window is None else window
    overlap = cfg.overlap if overlap is None else overlap
    plan = plan_windows(seq.n_frames, window, overlap, mode)
    was = model.training
    model.eval()
    outs = []
    try:
        with ad.no_grad():
            for s, e in plan.spans:
                f, t = window_arrays(seq, s, e - s)
                src = collate([(seq, f, t)])
                tgt = _target(target_skeleton, target_tags, provider, e - s)
                z, _ = model.quantize(model.encode(src))
                outs.append(model.decode(z, tgt).data.astype(np.float64))
    finally:
        model.train(was)
    return stitch(outs, plan, mode)


def reconstruct(model, clip, tags, provider=None, mode="crop", window=None, overlap=None):
    """Round trip through the autoencoder on the clip's own skeleton."""
    provider = provider or HashEmbedding(model.config.d_text)
    seq = prepare(clip, tags, provider)
    out = run_windows(model, seq, seq.skeleton, tags, provider, window, overlap, mode)
    rec = recover_motion(out, seq.skeleton, seq.frame_time)
    rec.clip.meta["contacts"] = rec.contacts
    return rec.clip


def retarget(model, clip, tags, target_skeleton, target_tags, provider=None, mode="crop", window=None,
             overlap=None):
    """Encode with source priors, decode with the target skeleton's priors."""
    provider = provider or HashEmbedding(model.config.d_text)
    seq = prepare(clip, tags, provider)
    out = run_windows(model, seq, target_skeleton, target_tags, provider, window, overlap, mode)
    if out.shape[1:] != (len(target_skeleton), OUTPUT_DIM):
        raise ShapeMismatch(f"decoder produced {out.shape} for a {len(target_skeleton)}-joint target")
    rec = recover_motion(out, target_skeleton, seq.frame_time)
    rec.clip.meta["contacts"] = rec.contacts
    return rec.clip


__all__ = ["WindowPlan", "plan_windows", "stitch", "provider_for", "prepare", "run_windows", "reconstruct",
           "retarget", "sequence_batch"]
