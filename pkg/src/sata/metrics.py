"""Geometric reconstruction metrics and the character-normalized retarget error."""

from dataclasses import asdict, dataclass

import numpy as np

from .errors import LengthMismatch, NonPositiveHeight, SkeletonMismatch, ValidationError
from .graphrepr import HEIGHT_FRACTION, derive_contacts
from .kinematics import clip_positions
from .rotations import geodesic_angle

CM = 100.0
FS_VARIANTS = ("plain", "height_weighted")


@dataclass
class MetricReport:
    """JR in radians; RT, JP, GP in centimeters; FS in centimeters per frame."""

    jr: float
    rt: float
    jp: float
    fs: float
    gp: float

    def to_dict(self):
        return asdict(self)


def _check_pair(gt, pred):
    if not gt.skeleton == pred.skeleton:
        raise SkeletonMismatch("ground truth and prediction use different skeletons")
    if gt.n_frames != pred.n_frames:
        raise LengthMismatch(f"{gt.n_frames} vs {pred.n_frames} frames")


def _excess(pred, ref):
    return np.maximum(pred - ref, 0.0)


def geometric_metrics(gt, pred, contact_joints=(), fs_variant="plain"):
    """JR, RT, JP, FS and GP of ``pred`` against ``gt``.

    FS and GP count only what the prediction adds over the ground truth:
    the reference's own residual slide or sub-ground samples (its ground
    is a low percentile, so a few samples sit below it) are not charged.
    """
    _check_pair(gt, pred)
    if fs_variant not in FS_VARIANTS:
        raise ValidationError(f"fs variant must be one of {FS_VARIANTS}, got {fs_variant!r}")
    jr = float(geodesic_angle(gt.rotations, pred.rotations).mean())
    rt = float(np.linalg.norm(gt.root_positions - pred.root_positions, axis=-1).mean() * CM)
    pg, pp = clip_positions(gt), clip_positions(pred)
    jp = float(np.linalg.norm(pg - pp, axis=-1).mean() * CM)
    feet = np.asarray(contact_joints, dtype=np.int64).reshape(-1)
    fs = gp = 0.0
    if feet.size:
        H = gt.skeleton.height()
        flags, ground = derive_contacts(pg, gt.frame_time, feet, H)
        hg = pg[:, feet, 1] - ground
        hp = pp[:, feet, 1] - ground
        gp = float(_excess(np.maximum(-hp, 0.0), np.maximum(-hg, 0.0)).mean() * CM)
        if gt.n_frames > 1:
            dg = np.linalg.norm(np.diff(pg[:, feet][..., [0, 2]], axis=0), axis=-1)
            dp = np.linalg.norm(np.diff(pp[:, feet][..., [0, 2]], axis=0), axis=-1)
            if fs_variant == "plain":
                on = flags[1:, feet] > 0.5
                fs = float(_excess(dp, dg)[on].mean() * CM) if on.any() else 0.0
            else:
                th = HEIGHT_FRACTION * H
                wg = np.clip(2.0 - 2.0 ** (hg[1:] / th), 0.0, 1.0)
                wp = np.clip(2.0 - 2.0 ** (hp[1:] / th), 0.0, 1.0)
                fs = float(_excess(dp * wp, dg * wg).mean() * CM)
    return MetricReport(jr, rt, jp, fs, gp)


def retarget_error(gt, pred, height):
    """``1000 * mean_{t,j} |p - p_hat|^2 / H^2`` on global positions.

    Accepts clips (positions via FK) or ``T x J x 3`` position arrays.
    """
    if not height > 0:
        raise NonPositiveHeight(f"character height must be positive, got {height}")
    if hasattr(gt, "skeleton"):
        _check_pair(gt, pred)
        pg, pp = clip_positions(gt), clip_positions(pred)
    else:
        pg, pp = np.asarray(gt, dtype=float), np.asarray(pred, dtype=float)
        if pg.shape != pp.shape:
            raise LengthMismatch(f"position arrays differ: {pg.shape} vs {pp.shape}")
    sq = ((pg - pp) ** 2).sum(-1)
    return float(1000.0 * sq.mean() / height ** 2)


def corpus_means(reports):
    """Unweighted mean of each metric over clips."""
    if not reports:
        return {}
    keys = reports[0].to_dict().keys()
    return {k: float(np.mean([r.to_dict()[k] for r in reports])) for k in keys}
