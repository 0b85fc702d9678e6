"""In-memory skeleton and motion types."""

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DimensionMismatch, ValidationError
from .rotations import UNIT_TOL, check_unit

CHANNEL_KINDS = ("Xposition", "Yposition", "Zposition", "Xrotation", "Yrotation", "Zrotation")


@dataclass(frozen=True)
class Joint:
    name: str
    parent: int | None
    offset: tuple
    channels: tuple = ()
    is_end_site: bool = False

    @property
    def rotation_order(self):
        """Axis letters of the rotation channels, in file order."""
        return "".join(c[0] for c in self.channels if c.endswith("rotation"))


@dataclass(frozen=True, eq=False)
class Skeleton:
    """Joint tree in topological order (parent index < child index).

    End sites are materialized as channel-less leaf joints flagged with
    ``is_end_site``; they take part in FK and in the graph like any joint.
    """

    joints: tuple

    def __post_init__(self):
        object.__setattr__(self, "joints", tuple(self.joints))
        if not self.joints:
            raise ValidationError("skeleton has no joints")
        roots = [i for i, j in enumerate(self.joints) if j.parent is None]
        if roots != [0]:
            raise ValidationError(f"expected exactly one root at index 0, found roots {roots}")
        for i, j in enumerate(self.joints):
            if not j.name:
                raise ValidationError(f"joint {i} has an empty name")
            if j.parent is not None and not (0 <= j.parent < i):
                raise ValidationError(f"joint {i} ({j.name}) has parent {j.parent}; parents must precede children")
            if not np.all(np.isfinite(j.offset)) or len(j.offset) != 3:
                raise ValidationError(f"joint {i} ({j.name}) has an invalid offset")

    def __len__(self):
        return len(self.joints)

    def __eq__(self, other):
        if not isinstance(other, Skeleton) or len(self) != len(other):
            return False
        return all(
            a.name == b.name and a.parent == b.parent and a.channels == b.channels
            and a.is_end_site == b.is_end_site and np.allclose(a.offset, b.offset, atol=1e-9, rtol=0)
            for a, b in zip(self.joints, other.joints)
        )

    __hash__ = object.__hash__

    @property
    def n_joints(self):
        return len(self.joints)

    @property
    def names(self):
        return [j.name for j in self.joints]

    @property
    def parents(self):
        return np.array([-1 if j.parent is None else j.parent for j in self.joints], dtype=np.int64)

    @property
    def offsets(self):
        return np.array([j.offset for j in self.joints], dtype=float).reshape(-1, 3)

    @property
    def end_sites(self):
        return [(j.parent, np.asarray(j.offset, dtype=float)) for j in self.joints if j.is_end_site]

    def children(self, i):
        return [k for k, j in enumerate(self.joints) if j.parent == i]

    def index(self, name):
        for i, j in enumerate(self.joints):
            if j.name == name:
                return i
        raise KeyError(name)

    def rest_positions(self):
        """Global rest-pose joint positions with the root at the origin."""
        off = self.offsets
        pos = np.zeros_like(off)
        for i, p in enumerate(self.parents):
            if p >= 0:
                pos[i] = pos[p] + off[i]
        return pos

    def height(self):
        """Vertical extent of the rest pose; falls back to the largest extent."""
        pos = self.rest_positions()
        ext = pos.max(axis=0) - pos.min(axis=0)
        return float(ext[1]) if ext[1] > 1e-6 else float(ext.max())

    def scaled(self, factor):
        return Skeleton(tuple(replace(j, offset=tuple(float(v) * factor for v in j.offset)) for j in self.joints))

    def depth_table(self):
        depth = np.zeros(len(self), dtype=np.int64)
        for i, p in enumerate(self.parents):
            if p >= 0:
                depth[i] = depth[p] + 1
        return depth


@dataclass(eq=False)
class MotionClip:
    """Root translation plus per-joint local rotations at a fixed frame time."""

    skeleton: Skeleton
    frame_time: float
    root_positions: np.ndarray
    rotations: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.root_positions = np.asarray(self.root_positions, dtype=float)
        self.rotations = np.asarray(self.rotations, dtype=float)
        validate_clip(self)

    @property
    def n_frames(self):
        return self.rotations.shape[0]

    @property
    def n_joints(self):
        return self.rotations.shape[1]

    @property
    def duration(self):
        return self.n_frames * self.frame_time

    def copy(self, **changes):
        base = dict(skeleton=self.skeleton, frame_time=self.frame_time,
                    root_positions=self.root_positions.copy(), rotations=self.rotations.copy(), meta=dict(self.meta))
        base.update(changes)
        return MotionClip(**base)


def validate_clip(clip, tol=UNIT_TOL):
    """Check dimensions, positivity of the frame time and unit quaternions."""
    r = clip.rotations
    if r.ndim != 3 or r.shape[2] != 4:
        raise DimensionMismatch(f"rotations must be T x J x 4, got {r.shape}")
    if r.shape[0] < 1:
        raise DimensionMismatch("clip has no frames")
    if r.shape[1] != len(clip.skeleton):
        raise DimensionMismatch(f"rotations have {r.shape[1]} joints, skeleton has {len(clip.skeleton)}")
    if clip.root_positions.shape != (r.shape[0], 3):
        raise DimensionMismatch(f"root_positions must be {(r.shape[0], 3)}, got {clip.root_positions.shape}")
    if not clip.frame_time > 0:
        raise ValidationError(f"frame_time must be positive, got {clip.frame_time}")
    if not (np.all(np.isfinite(r)) and np.all(np.isfinite(clip.root_positions))):
        raise ValidationError("clip contains non-finite values")
    check_unit(r, tol)
