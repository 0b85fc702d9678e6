"""Topology-agnostic graph representation of a motion clip.

A clip becomes one graph per frame over the skeleton's joints.  Static node
features hold rest geometry and joint-description embeddings; dynamic
features hold per-frame rotations, positions, velocities, the root channel
and foot contacts.

Per-joint dynamic row layout (width 23)::

    q 0:6 | x 6:9 | v_q 9:15 | v_x 15:18 | r 18:22 | c 22

Decoder output row layout (width 11)::

    q 0:6 | r 6:10 | c 10

``r`` is ``(yaw velocity, facing-frame x velocity, facing-frame z velocity,
root height)``.  The root rotation stored in ``q`` has its yaw removed; the
yaw is carried by ``r`` and re-integrated on recovery.
"""

import json
import re
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, EmbeddingCountMismatch, EmptyContactSet, ValidationError
from .kinematics import global_transforms
from .rotations import facing_yaw, quat_conj, quat_mul, quat_rotate, quat_to_sixd, sixd_to_quat, yaw_quat
from .skeleton import Joint, MotionClip, Skeleton

FEATURE_DIM = 23
OUTPUT_DIM = 11
Q, X, VQ, VX, R, C = slice(0, 6), slice(6, 9), slice(9, 15), slice(15, 18), slice(18, 22), 22
OUT_Q, OUT_R, OUT_C = slice(0, 6), slice(6, 10), 10

CONTACT_TOKENS = ("foot", "toe", "paw", "hoof", "ankle")
HEIGHT_FRACTION = 0.05
SPEED_FRACTION = 0.01
GROUND_PERCENTILE = 2.0


@dataclass
class EdgeFeatures:
    depth: np.ndarray
    reverse_depth: np.ndarray

    def as_array(self):
        return np.stack([self.depth, self.reverse_depth], axis=-1).astype(float).reshape(-1, 2)


@dataclass
class StaticFeatures:
    X_g: np.ndarray
    X_l: np.ndarray
    X_t: np.ndarray


@dataclass
class DynamicFeatures:
    q: np.ndarray
    x: np.ndarray
    v_q: np.ndarray
    v_x: np.ndarray
    r: np.ndarray
    c: np.ndarray

    def stack(self):
        T, J = self.c.shape
        r = np.broadcast_to(self.r[:, None, :], (T, J, 4))
        return np.concatenate([self.q, self.x, self.v_q, self.v_x, r, self.c[..., None]], axis=-1)

    @classmethod
    def from_array(cls, f):
        return cls(f[..., Q], f[..., X], f[..., VQ], f[..., VX], f[:, 0, R], f[..., C])


@dataclass
class MotionGraphSequence:
    skeleton: Skeleton
    edges: np.ndarray
    edge_features: EdgeFeatures
    statics: StaticFeatures
    dynamics: DynamicFeatures
    frame_time: float
    contact_joints: np.ndarray
    ground_level: float
    character_height: float
    descriptions: tuple = ()

    @property
    def n_frames(self):
        return self.dynamics.c.shape[0]

    @property
    def n_joints(self):
        return len(self.skeleton)

    @property
    def features(self):
        return self.dynamics.stack()

    @property
    def targets(self):
        """Ground-truth decoder targets, ``T x J x 11``."""
        f = self.features
        return np.concatenate([f[..., Q], f[..., R], f[..., C:C + 1]], axis=-1)


def tree_edges(skeleton):
    """``(E, 2)`` array of (parent, child) pairs in child order."""
    parents = skeleton.parents
    return np.array([[p, i] for i, p in enumerate(parents) if p >= 0], dtype=np.int64).reshape(-1, 2)


def reverse_depths(parents):
    """Longest hop count from each joint down to a leaf."""
    rd = np.zeros(len(parents), dtype=np.int64)
    for i in range(len(parents) - 1, 0, -1):
        p = parents[i]
        rd[p] = max(rd[p], rd[i] + 1)
    return rd


def build_static(skeleton, embeddings):
    """Edges, edge features and static node features for a skeleton."""
    embeddings = np.asarray(embeddings, dtype=float)
    J = len(skeleton)
    if embeddings.ndim != 2 or embeddings.shape[0] != J:
        raise EmbeddingCountMismatch(f"expected {J} embedding rows, got shape {embeddings.shape}")
    edges = tree_edges(skeleton)
    parents = skeleton.parents
    # BFS depth from the root; parents precede children so one forward sweep suffices
    depth = skeleton.depth_table()
    rdepth = reverse_depths(parents)
    child = edges[:, 1]
    ef = EdgeFeatures(depth[child], rdepth[child])
    X_l = skeleton.offsets.copy()
    X_l[0] = 0.0
    statics = StaticFeatures(skeleton.rest_positions(), X_l, embeddings)
    return edges, ef, statics


def _tokens(text):
    return [t.rstrip("s") if len(t) > 3 else t for t in re.findall(r"[a-z]+", text.lower())]


def contact_joint_set(skeleton, descriptions):
    """Joints whose description names a foot-like part, else the lowest leaves."""
    hits = [i for i, d in enumerate(descriptions) if any(t in CONTACT_TOKENS for t in _tokens(d))]
    if hits:
        return np.array(hits, dtype=np.int64)
    parents = skeleton.parents
    leaves = [i for i in range(len(skeleton)) if i not in set(parents.tolist())]
    if not leaves:
        return np.array([], dtype=np.int64)
    y = skeleton.rest_positions()[:, 1]
    lowest = y[leaves].min()
    tol = HEIGHT_FRACTION * max(skeleton.height(), 1e-6)
    return np.array([i for i in leaves if y[i] <= lowest + tol], dtype=np.int64)


def frame_speeds(positions):
    """Per-frame displacement magnitude; frame 0 copies frame 1."""
    positions = np.asarray(positions, dtype=float)
    speed = np.zeros(positions.shape[:-1])
    if positions.shape[0] > 1:
        speed[1:] = np.linalg.norm(np.diff(positions, axis=0), axis=-1)
        speed[0] = speed[1]
    return speed


def derive_contacts(global_positions, frame_time, contact_joints, character_height,
                    height_threshold=None, speed_threshold=None):
    """Binary ``T x J`` contact flags and the estimated ground level.

    Thresholds default to 5% (height above ground) and 1% per frame (speed)
    of ``character_height``.
    """
    pos = np.asarray(global_positions, dtype=float)
    T, J = pos.shape[:2]
    contact_joints = np.asarray(contact_joints, dtype=np.int64).reshape(-1)
    flags = np.zeros((T, J))
    if contact_joints.size == 0:
        warnings.warn("empty contact-joint set; all contacts are zero", EmptyContactSet, stacklevel=2)
        return flags, float(np.percentile(pos[..., 1], GROUND_PERCENTILE))
    if not frame_time > 0:
        raise ValidationError("frame_time must be positive")
    h_th = HEIGHT_FRACTION * character_height if height_threshold is None else height_threshold
    v_th = SPEED_FRACTION * character_height if speed_threshold is None else speed_threshold
    sub = pos[:, contact_joints]
    ground = float(np.percentile(sub[..., 1], GROUND_PERCENTILE))
    speed = frame_speeds(sub)
    on = (sub[..., 1] - ground < h_th) & (speed < v_th)
    flags[:, contact_joints] = on
    return flags, ground


def _wrap(a):
    return (a + np.pi) % (2 * np.pi) - np.pi


def extract_dynamics(clip, contact_joints=None, embeddings=None, descriptions=()):
    """Graph sequence for a (canonicalized) clip.

    ``contact_joints`` defaults to :func:`contact_joint_set` over
    ``descriptions``; ``embeddings`` defaults to an empty text feature.
    """
    sk = clip.skeleton
    T, J = clip.n_frames, clip.n_joints
    if embeddings is None:
        embeddings = np.zeros((J, 0))
    edges, ef, statics = build_static(sk, embeddings)
    if contact_joints is None:
        contact_joints = contact_joint_set(sk, descriptions or sk.names)
    contact_joints = np.asarray(contact_joints, dtype=np.int64)

    grot, gpos = global_transforms(sk, clip.rotations, clip.root_positions)
    yaw = facing_yaw(clip.rotations[:, 0])
    inv_yaw = quat_conj(yaw_quat(yaw))
    local = clip.rotations.copy()
    local[:, 0] = quat_mul(inv_yaw, local[:, 0])
    q = quat_to_sixd(local, check=False)

    parents = sk.parents
    rel = np.zeros((T, J, 3))
    nz = parents >= 0
    rel[:, nz] = gpos[:, nz] - gpos[:, parents[nz]]
    x = quat_rotate(inv_yaw[:, None, :], rel)

    v_q = np.zeros_like(q)
    v_x = np.zeros_like(x)
    v_q[1:] = np.diff(q, axis=0)
    v_x[1:] = np.diff(x, axis=0)

    root = clip.root_positions
    r = np.zeros((T, 4))
    r[1:, 0] = _wrap(np.diff(yaw))
    step = np.zeros((T, 3))
    step[1:] = np.diff(root, axis=0)
    step[:, 1] = 0.0
    local_step = quat_rotate(inv_yaw, step)
    r[:, 1] = local_step[:, 0]
    r[:, 2] = local_step[:, 2]
    r[:, 3] = root[:, 1]

    height = sk.height()
    c, ground = derive_contacts(gpos, clip.frame_time, contact_joints, height)
    dyn = DynamicFeatures(q, x, v_q, v_x, r, c)
    return MotionGraphSequence(sk, edges, ef, statics, dyn, clip.frame_time, contact_joints, ground, height,
                               tuple(descriptions))


def integrate_root(r):
    """Root yaw quaternions and positions from a ``T x 4`` root channel."""
    r = np.asarray(r, dtype=float)
    yaw = np.cumsum(r[:, 0])
    yq = yaw_quat(yaw)
    step = np.zeros((r.shape[0], 3))
    step[:, 0] = r[:, 1]
    step[:, 2] = r[:, 2]
    world = quat_rotate(yq, step)
    pos = np.cumsum(world, axis=0)
    pos[:, 1] = r[:, 3]
    return yq, pos


@dataclass
class Recovered:
    clip: MotionClip
    contacts: np.ndarray
    degenerate: int


def recover_motion(outputs, target_skeleton, frame_time):
    """Rebuild a clip from ``T x J x 11`` decoder outputs.

    Local rotations come from the 6D channels; the root trajectory is read
    from the root row and integrated.  Degenerate 6D values become identity
    rotations and are counted in ``Recovered.degenerate``.
    """
    out = np.asarray(outputs, dtype=float)
    J = len(target_skeleton)
    if out.ndim != 3 or out.shape[1:] != (J, OUTPUT_DIM):
        raise DimensionMismatch(f"expected T x {J} x {OUTPUT_DIM} outputs, got {out.shape}")
    quats, n_bad = sixd_to_quat(out[..., OUT_Q], strict=False)
    yq, root_pos = integrate_root(out[:, 0, OUT_R])
    quats[:, 0] = quat_mul(yq, quats[:, 0])
    quats /= np.linalg.norm(quats, axis=-1, keepdims=True)
    clip = MotionClip(target_skeleton, frame_time, root_pos, quats, meta={"degenerate_sixd": n_bad})
    return Recovered(clip, out[..., OUT_C].copy(), n_bad)


# --- binary cache -----------------------------------------------------------

CACHE_MAGIC = b"SGRS"
CACHE_VERSION = 1


def _skeleton_to_json(sk):
    return [{"name": j.name, "parent": j.parent, "offset": list(map(float, j.offset)),
             "channels": list(j.channels), "end_site": j.is_end_site} for j in sk.joints]


def _skeleton_from_json(items):
    return Skeleton(tuple(Joint(d["name"], d["parent"], tuple(d["offset"]), tuple(d["channels"]), d["end_site"])
                          for d in items))


def save_sequence(path, seq):
    """Write a versioned little-endian float32 cache of ``seq``."""
    header = {
        "skeleton": _skeleton_to_json(seq.skeleton),
        "frame_time": seq.frame_time,
        "contact_joints": seq.contact_joints.tolist(),
        "ground_level": seq.ground_level,
        "character_height": seq.character_height,
        "descriptions": list(seq.descriptions),
        "n_frames": seq.n_frames,
        "d_text": int(seq.statics.X_t.shape[1]),
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    arrays = [seq.statics.X_g, seq.statics.X_l, seq.statics.X_t, seq.features]
    with open(path, "wb") as fh:
        fh.write(CACHE_MAGIC)
        fh.write(struct.pack("<II", CACHE_VERSION, len(blob)))
        fh.write(blob)
        for a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f4").tobytes())


def load_sequence(path):
    data = Path(path).read_bytes()
    if data[:4] != CACHE_MAGIC:
        raise ValidationError(f"{path}: not a graph-sequence cache")
    version, n = struct.unpack_from("<II", data, 4)
    if version != CACHE_VERSION:
        raise ValidationError(f"{path}: unsupported cache version {version}")
    header = json.loads(data[12:12 + n].decode("utf-8"))
    sk = _skeleton_from_json(header["skeleton"])
    J, T, D = len(sk), header["n_frames"], header["d_text"]
    off = 12 + n
    out = []
    for shape in ((J, 3), (J, 3), (J, D), (T, J, FEATURE_DIM)):
        size = int(np.prod(shape))
        out.append(np.frombuffer(data, dtype="<f4", count=size, offset=off).reshape(shape).astype(float))
        off += 4 * size
    edges = tree_edges(sk)
    depth = sk.depth_table()
    ef = EdgeFeatures(depth[edges[:, 1]], reverse_depths(sk.parents)[edges[:, 1]])
    return MotionGraphSequence(sk, edges, ef, StaticFeatures(*out[:3]), DynamicFeatures.from_array(out[3]),
                               header["frame_time"], np.array(header["contact_joints"], dtype=np.int64),
                               header["ground_level"], header["character_height"], tuple(header["descriptions"]))
