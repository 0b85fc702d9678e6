"""BVH reading and writing.

Parsed motion is stored in meters with unit quaternions.  End sites become
leaf joints named ``<parent>_End`` so downstream code can address tips.
"""

import logging
import warnings
from pathlib import Path

import numpy as np

from .errors import (
    BVHSyntaxError,
    DimensionMismatch,
    FrameCountMismatch,
    NonPositiveFrameTime,
    UnbalancedBraces,
    UnitGuessWarning,
    UnknownChannel,
)
from .rotations import euler_to_quat, identity_quat, matrix_to_euler_zxy, quat_to_matrix
from .skeleton import CHANNEL_KINDS, Joint, MotionClip, Skeleton

logger = logging.getLogger(__name__)

UNITS = {"m": 1.0, "cm": 0.01}
CM_HEIGHT_THRESHOLD = 10.0
ROOT_CHANNELS = ("Xposition", "Yposition", "Zposition", "Zrotation", "Xrotation", "Yrotation")
JOINT_CHANNELS = ("Zrotation", "Xrotation", "Yrotation")


class _Tokens:
    """Whitespace tokens of the HIERARCHY block, each tagged with its line."""

    def __init__(self, lines):
        self.items = []
        for lineno, line in lines:
            for tok in line.replace("{", " { ").replace("}", " } ").split():
                self.items.append((tok, lineno))
        self.pos = 0

    def peek(self):
        return self.items[self.pos] if self.pos < len(self.items) else (None, None)

    def next(self, what="token"):
        if self.pos >= len(self.items):
            last = self.items[-1][1] if self.items else 1
            raise UnbalancedBraces(f"unexpected end of HIERARCHY while reading {what}", last)
        tok = self.items[self.pos]
        self.pos += 1
        return tok

    def rest_of_line(self, lineno):
        out = []
        while self.pos < len(self.items) and self.items[self.pos][1] == lineno and self.items[self.pos][0] != "{":
            out.append(self.items[self.pos][0])
            self.pos += 1
        return out


def _float(tok, lineno, what):
    try:
        value = float(tok)
    except (TypeError, ValueError):
        raise BVHSyntaxError(f"expected a number for {what}, got {tok!r}", lineno) from None
    if not np.isfinite(value):
        raise BVHSyntaxError(f"non-finite {what}: {tok!r}", lineno)
    return value


def _parse_joint(toks, parent, joints, raw_channels):
    """Parse one ROOT/JOINT block; the keyword has already been consumed."""
    kw_tok, kw_line = toks.items[toks.pos - 1]
    name_parts = toks.rest_of_line(kw_line)
    if not name_parts:
        raise BVHSyntaxError(f"{kw_tok} without a name", kw_line)
    name = " ".join(name_parts)
    tok, line = toks.next("'{'")
    if tok != "{":
        raise BVHSyntaxError(f"expected '{{' after {kw_tok} {name}, got {tok!r}", line)
    index = len(joints)
    joints.append(None)
    raw_channels.append(None)
    offset = None
    channels = ()
    while True:
        tok, line = toks.next("joint body")
        if tok == "}":
            break
        if tok == "OFFSET":
            offset = tuple(_float(toks.next("offset")[0], line, "OFFSET") for _ in range(3))
        elif tok == "CHANNELS":
            count_tok, _ = toks.next("channel count")
            try:
                count = int(count_tok)
            except ValueError:
                raise BVHSyntaxError(f"bad channel count {count_tok!r}", line) from None
            if count < 0 or count > 6:
                raise BVHSyntaxError(f"channel count {count} out of range", line)
            chans = []
            for _ in range(count):
                ctok, cline = toks.next("channel name")
                if ctok not in CHANNEL_KINDS:
                    raise UnknownChannel(f"unknown channel {ctok!r} in joint {name}", cline)
                chans.append(ctok)
            channels = tuple(chans)
        elif tok == "JOINT":
            if offset is None:
                raise BVHSyntaxError(f"JOINT before OFFSET in {name}", line)
            _parse_joint(toks, index, joints, raw_channels)
        elif tok == "End":
            site_tok, site_line = toks.next("'Site'")
            if site_tok != "Site":
                raise BVHSyntaxError(f"expected 'End Site', got 'End {site_tok}'", site_line)
            brace, bline = toks.next("'{'")
            if brace != "{":
                raise BVHSyntaxError("expected '{' after End Site", bline)
            off_tok, oline = toks.next("OFFSET")
            if off_tok != "OFFSET":
                raise BVHSyntaxError(f"End Site must contain OFFSET, got {off_tok!r}", oline)
            site_off = tuple(_float(toks.next("offset")[0], oline, "OFFSET") for _ in range(3))
            close, cline = toks.next("'}'")
            if close != "}":
                raise UnbalancedBraces(f"expected '}}' closing End Site, got {close!r}", cline)
            joints.append(Joint(f"{name}_End", index, site_off, (), True))
            raw_channels.append(())
        elif tok == "{":
            raise UnbalancedBraces("unexpected '{'", line)
        else:
            raise BVHSyntaxError(f"unexpected token {tok!r} in joint {name}", line)
    if offset is None:
        raise BVHSyntaxError(f"joint {name} has no OFFSET", kw_line)
    joints[index] = Joint(name, parent, offset, channels, False)
    raw_channels[index] = channels


def parse_bvh(text, units="auto"):
    """Parse BVH text into ``(Skeleton, MotionClip)``.

    ``units`` is ``"m"``, ``"cm"`` or ``"auto"``; auto treats the file as
    centimeters when the rest pose is taller than 10 units.
    """
    if units not in ("auto", "m", "cm"):
        raise ValueError(f"units must be 'auto', 'm' or 'cm', got {units!r}")
    lines = [(i + 1, ln) for i, ln in enumerate(text.splitlines())]
    motion_at = None
    for idx, (lineno, ln) in enumerate(lines):
        if ln.strip().upper() == "MOTION":
            motion_at = idx
            break
    head = lines if motion_at is None else lines[:motion_at]
    body = [] if motion_at is None else lines[motion_at + 1:]

    head = [(n, ln) for n, ln in head if ln.strip()]
    if not head or head[0][1].strip().upper() != "HIERARCHY":
        raise BVHSyntaxError("file must start with HIERARCHY", head[0][0] if head else 1)
    toks = _Tokens(head[1:])
    tok, line = toks.next("ROOT")
    if tok != "ROOT":
        raise BVHSyntaxError(f"expected ROOT, got {tok!r}", line)
    joints, raw_channels = [], []
    _parse_joint(toks, None, joints, raw_channels)
    tok, line = toks.peek()
    if tok is not None:
        if tok == "}":
            raise UnbalancedBraces("unmatched '}'", line)
        raise BVHSyntaxError(f"unexpected {tok!r} after the root joint (multiple roots are not supported)", line)
    if motion_at is None:
        raise BVHSyntaxError("missing MOTION section", lines[-1][0] if lines else 1)

    # Frames / Frame Time header
    body = [(n, ln) for n, ln in body if ln.strip()]
    if len(body) < 2:
        raise BVHSyntaxError("MOTION section needs 'Frames:' and 'Frame Time:' lines", lines[motion_at][0])
    n_line, frames_ln = body[0]
    key, _, value = frames_ln.partition(":")
    if key.strip().lower() != "frames":
        raise BVHSyntaxError(f"expected 'Frames:', got {frames_ln.strip()!r}", n_line)
    try:
        declared = int(value.strip())
    except ValueError:
        raise BVHSyntaxError(f"bad frame count {value.strip()!r}", n_line) from None
    t_line, ft_ln = body[1]
    key, _, value = ft_ln.partition(":")
    if key.strip().lower() != "frame time":
        raise BVHSyntaxError(f"expected 'Frame Time:', got {ft_ln.strip()!r}", t_line)
    frame_time = _float(value.strip(), t_line, "Frame Time")
    if frame_time <= 0:
        raise NonPositiveFrameTime(f"frame time must be positive, got {frame_time}", t_line)

    n_channels = sum(len(c) for c in raw_channels)
    rows = body[2:]
    if len(rows) != declared:
        where = rows[-1][0] if rows else t_line
        raise FrameCountMismatch(f"declared {declared} frames, found {len(rows)} data rows", where)
    if declared < 1:
        raise FrameCountMismatch("a clip needs at least one frame", n_line)
    data = np.empty((declared, n_channels))
    for r, (lineno, ln) in enumerate(rows):
        vals = ln.split()
        if len(vals) != n_channels:
            raise BVHSyntaxError(f"expected {n_channels} channel values, found {len(vals)}", lineno)
        try:
            data[r] = [float(v) for v in vals]
        except ValueError:
            raise BVHSyntaxError("non-numeric channel value", lineno) from None
        if not np.all(np.isfinite(data[r])):
            raise BVHSyntaxError("non-finite channel value", lineno)

    skeleton = Skeleton(tuple(joints))
    scale = _unit_scale(skeleton, units)
    if scale != 1.0:
        skeleton = skeleton.scaled(scale)

    J = len(joints)
    T = declared
    rotations = identity_quat((T, J))
    root_pos = np.zeros((T, 3))
    col = 0
    for j, chans in enumerate(raw_channels):
        block = data[:, col:col + len(chans)]
        col += len(chans)
        rot_idx = [k for k, c in enumerate(chans) if c.endswith("rotation")]
        pos_idx = [k for k, c in enumerate(chans) if c.endswith("position")]
        if rot_idx:
            order = "".join(chans[k][0] for k in rot_idx)
            rotations[:, j] = euler_to_quat(block[:, rot_idx], order)
        if pos_idx:
            if j == 0:
                for k in pos_idx:
                    root_pos[:, "XYZ".index(chans[k][0])] = block[:, k] * scale
            else:
                logger.warning("ignoring translation channels on non-root joint %s", joints[j].name)
        elif j == 0:
            root_pos[:] = skeleton.joints[0].offset
    rotations /= np.linalg.norm(rotations, axis=-1, keepdims=True)
    clip = MotionClip(skeleton, frame_time, root_pos, rotations, meta={"units_scale": scale})
    return skeleton, clip


def _unit_scale(skeleton, units):
    if units != "auto":
        return UNITS[units]
    height = skeleton.height()
    if height > CM_HEIGHT_THRESHOLD:
        warnings.warn(f"BVH has no unit field; rest height {height:.3g} > {CM_HEIGHT_THRESHOLD:g}, "
                      "treating translations as centimeters", UnitGuessWarning, stacklevel=3)
        return UNITS["cm"]
    logger.info("BVH units guessed as meters (rest height %.3g)", height)
    return UNITS["m"]


def _fmt(values):
    values = np.round(np.asarray(values, dtype=float), 6) + 0.0
    return " ".join(f"{v:.6f}" for v in values)


def write_bvh(skeleton, clip):
    """Serialize to BVH text (meters, ZXY rotation channels, LF newlines)."""
    if len(skeleton) != clip.n_joints:
        raise DimensionMismatch(f"skeleton has {len(skeleton)} joints, clip has {clip.n_joints}")
    parents = skeleton.parents
    children = [[] for _ in range(len(skeleton))]
    for i, p in enumerate(parents):
        if p >= 0:
            children[p].append(i)

    out = ["HIERARCHY"]
    order = []

    def emit(i, depth):
        j = skeleton.joints[i]
        pad = "\t" * depth
        if j.is_end_site:
            out.append(f"{pad}End Site")
            out.append(f"{pad}{{")
            out.append(f"{pad}\tOFFSET {_fmt(j.offset)}")
            out.append(f"{pad}}}")
            return
        kw = "ROOT" if i == 0 else "JOINT"
        chans = ROOT_CHANNELS if i == 0 else JOINT_CHANNELS
        out.append(f"{pad}{kw} {j.name}")
        out.append(f"{pad}{{")
        out.append(f"{pad}\tOFFSET {_fmt(j.offset)}")
        out.append(f"{pad}\tCHANNELS {len(chans)} {' '.join(chans)}")
        order.append(i)
        for c in children[i]:
            emit(c, depth + 1)
        out.append(f"{pad}}}")

    emit(0, 0)
    T = clip.n_frames
    out.append("MOTION")
    out.append(f"Frames: {T}")
    out.append(f"Frame Time: {clip.frame_time:.9g}")

    mats = quat_to_matrix(clip.rotations[:, order])
    eulers = np.empty((T, len(order), 3))
    for k in range(len(order)):
        prev = None
        for t in range(T):
            prev = matrix_to_euler_zxy(mats[t, k], prev)
            eulers[t, k] = prev
    eulers = np.degrees(eulers)
    for t in range(T):
        row = np.concatenate([clip.root_positions[t], eulers[t].reshape(-1)])
        out.append(_fmt(row))
    return "\n".join(out) + "\n"


def read_bvh(path, units="auto"):
    return parse_bvh(Path(path).read_text(encoding="utf-8"), units=units)


def save_bvh(path, skeleton, clip):
    Path(path).write_text(write_bvh(skeleton, clip), encoding="utf-8", newline="\n")
