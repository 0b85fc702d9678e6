"""Forward kinematics, canonicalization and mirror augmentation."""

import re
import warnings

import numpy as np

from .errors import DegenerateFacing, DimensionMismatch, UnpairedSideJoint, ValidationError
from .rotations import (
    facing_yaw,
    quat_conj,
    quat_mul,
    quat_rotate,
    quat_to_sixd,
    sixd_to_quat,
    yaw_quat,
)
from .skeleton import Joint, Skeleton

__all__ = [
    "quat_to_sixd",
    "sixd_to_quat",
    "forward_kinematics",
    "global_transforms",
    "clip_positions",
    "canonicalize",
    "mirror",
    "side_partners",
    "DEFAULT_SIDE_RULES",
]


def global_transforms(skeleton, rotations, root_pos):
    """Global rotations and positions for any leading batch shape.

    ``rotations`` is ``(..., J, 4)`` and ``root_pos`` ``(..., 3)``.
    """
    rotations = np.asarray(rotations, dtype=float)
    root_pos = np.asarray(root_pos, dtype=float)
    J = len(skeleton)
    if rotations.shape[-2:] != (J, 4):
        raise DimensionMismatch(f"expected (..., {J}, 4) rotations, got {rotations.shape}")
    if root_pos.shape[-1] != 3 or root_pos.shape[:-1] != rotations.shape[:-2]:
        raise DimensionMismatch(f"root position shape {root_pos.shape} does not match rotations {rotations.shape}")
    offsets = skeleton.offsets
    grot = np.empty_like(rotations)
    gpos = np.empty(rotations.shape[:-1] + (3,))
    for i, p in enumerate(skeleton.parents):
        if p < 0:
            grot[..., i, :] = rotations[..., i, :]
            gpos[..., i, :] = root_pos
        else:
            grot[..., i, :] = quat_mul(grot[..., p, :], rotations[..., i, :])
            gpos[..., i, :] = gpos[..., p, :] + quat_rotate(grot[..., p, :], offsets[i])
    return grot, gpos


def forward_kinematics(skeleton, rotations, root_pos):
    """Global joint positions, ``(..., J, 3)``."""
    return global_transforms(skeleton, rotations, root_pos)[1]


def clip_positions(clip):
    """Global joint positions of every frame of ``clip``, ``T x J x 3``."""
    return forward_kinematics(clip.skeleton, clip.rotations, clip.root_positions)


def _warn_facing(n):
    warnings.warn(f"facing direction degenerate in {n} frame(s); rotation skipped", DegenerateFacing, stacklevel=3)


def canonicalize(clip):
    """Move frame-0 root XZ to the origin and turn frame-0 facing to +Z.

    Root height is preserved and only a rotation about +Y is applied.
    """
    yaw0 = float(facing_yaw(clip.rotations[0, 0], warn_cb=_warn_facing))
    turn = yaw_quat(-yaw0)
    shift = np.array([clip.root_positions[0, 0], 0.0, clip.root_positions[0, 2]])
    root_pos = quat_rotate(turn, clip.root_positions - shift)
    rotations = clip.rotations.copy()
    rotations[:, 0] = quat_mul(turn, rotations[:, 0])
    rotations[:, 0] /= np.linalg.norm(rotations[:, 0], axis=-1, keepdims=True)
    return clip.copy(root_positions=root_pos, rotations=rotations)


# (left pattern, right pattern) matched case-insensitively; ^/$ anchor prefixes and suffixes.
DEFAULT_SIDE_RULES = (
    ("left", "right"),
    ("^l_", "^r_"),
    ("_l$", "_r$"),
)


def _match_case(src, token):
    if src.isupper():
        return token.upper()
    if src[:1].isupper():
        return token[:1].upper() + token[1:]
    return token


def _swap_name(name, rules):
    low = name.lower()
    for left, right in rules:
        for src, dst in ((left, right), (right, left)):
            m = re.search(src, low)
            if m:
                s, e = m.span()
                return name[:s] + _match_case(name[s:e], dst.strip("^$")) + name[e:], True
    return name, False


def side_partners(skeleton, rules=DEFAULT_SIDE_RULES):
    """Index of each joint's left/right counterpart (itself for center joints)."""
    lookup = {}
    for i, n in enumerate(skeleton.names):
        lookup.setdefault(n.lower(), i)
    partners = np.arange(len(skeleton))
    unmatched = []
    for i, n in enumerate(skeleton.names):
        other, sided = _swap_name(n, rules)
        if not sided:
            continue
        k = lookup.get(other.lower())
        if k is None:
            unmatched.append(n)
        else:
            partners[i] = k
    if unmatched:
        raise UnpairedSideJoint(unmatched)
    return partners


def mirror(clip, swap_rules=DEFAULT_SIDE_RULES):
    """Reflect a clip across the YZ plane and swap left/right joints.

    Rest offsets are reflected and swapped too, so FK of the result is the
    exact mirror image of FK of the input even for asymmetric skeletons.
    """
    sk = clip.skeleton
    partners = side_partners(sk, swap_rules)
    parents = sk.parents
    for i, k in enumerate(partners):
        pi, pk = parents[i], parents[k]
        if (pi < 0) != (pk < 0) or (pi >= 0 and partners[pi] != pk):
            raise ValidationError(f"joints {sk.names[i]!r}/{sk.names[k]!r} have non-mirrored parents")
    flip = np.array([-1.0, 1.0, 1.0])
    joints = tuple(
        Joint(j.name, j.parent, tuple(float(v) for v in np.asarray(sk.joints[partners[i]].offset) * flip), j.channels, j.is_end_site)
        for i, j in enumerate(sk.joints)
    )
    reflect = np.array([1.0, 1.0, -1.0, -1.0])
    rotations = clip.rotations[:, partners] * reflect
    root_pos = clip.root_positions * flip
    return clip.copy(skeleton=Skeleton(joints), root_positions=root_pos, rotations=rotations)


def yaw_removed(q):
    """Split root rotations into ``(yaw, yaw^-1 * q)``."""
    yaw = facing_yaw(q)
    return yaw, quat_mul(quat_conj(yaw_quat(yaw)), q)
