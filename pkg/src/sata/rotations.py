"""Vectorized quaternion, rotation-matrix, Euler and 6D conversions.

Quaternions are stored scalar-first as ``(w, x, y, z)`` and follow the
Hamilton product.  Every function broadcasts over leading dimensions.
"""

import numpy as np

from .errors import DegenerateSixD, NonUnitQuaternion

UNIT_TOL = 1e-6
SIXD_EPS = 1e-8

_AXES = {"X": np.array([1.0, 0.0, 0.0]), "Y": np.array([0.0, 1.0, 0.0]), "Z": np.array([0.0, 0.0, 1.0])}


def identity_quat(shape=()):
    q = np.zeros(tuple(shape) + (4,))
    q[..., 0] = 1.0
    return q


def quat_mul(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    aw, ax, ay, az = np.moveaxis(a, -1, 0)
    bw, bx, by, bz = np.moveaxis(b, -1, 0)
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def quat_conj(q):
    q = np.asarray(q, dtype=float)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def quat_normalize(q):
    q = np.asarray(q, dtype=float)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def quat_from_axis_angle(axis, angle):
    """Quaternion for a rotation of ``angle`` radians about ``axis``."""
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis, axis=-1, keepdims=True)
    half = 0.5 * np.asarray(angle, dtype=float)[..., None]
    return np.concatenate([np.cos(half), np.sin(half) * axis], axis=-1)


def quat_rotate(q, v):
    """Rotate vectors ``v`` by unit quaternions ``q``."""
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    w = q[..., :1]
    u = q[..., 1:]
    t = 2.0 * np.cross(u, v)
    return v + w * t + np.cross(u, t)


def quat_to_matrix(q):
    q = np.asarray(q, dtype=float)
    w, x, y, z = np.moveaxis(q, -1, 0)
    m = np.empty(q.shape[:-1] + (3, 3))
    m[..., 0, 0] = 1 - 2 * (y * y + z * z)
    m[..., 0, 1] = 2 * (x * y - w * z)
    m[..., 0, 2] = 2 * (x * z + w * y)
    m[..., 1, 0] = 2 * (x * y + w * z)
    m[..., 1, 1] = 1 - 2 * (x * x + z * z)
    m[..., 1, 2] = 2 * (y * z - w * x)
    m[..., 2, 0] = 2 * (x * z - w * y)
    m[..., 2, 1] = 2 * (y * z + w * x)
    m[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return m


def matrix_to_quat(m):
    """Shepperd's method; the result has ``w >= 0``."""
    m = np.asarray(m, dtype=float)
    shape = m.shape[:-2]
    m = m.reshape(-1, 3, 3)
    r00, r11, r22 = m[:, 0, 0], m[:, 1, 1], m[:, 2, 2]
    tr = r00 + r11 + r22
    choice = np.argmax(np.stack([tr, r00, r11, r22], axis=-1), axis=-1)
    q = np.empty((m.shape[0], 4))

    i = choice == 0
    s = np.sqrt(np.maximum(1.0 + tr[i], 0.0)) * 2
    q[i] = np.stack([0.25 * s, (m[i, 2, 1] - m[i, 1, 2]) / s, (m[i, 0, 2] - m[i, 2, 0]) / s,
                     (m[i, 1, 0] - m[i, 0, 1]) / s], axis=-1)
    i = choice == 1
    s = np.sqrt(np.maximum(1.0 + r00[i] - r11[i] - r22[i], 0.0)) * 2
    q[i] = np.stack([(m[i, 2, 1] - m[i, 1, 2]) / s, 0.25 * s, (m[i, 0, 1] + m[i, 1, 0]) / s,
                     (m[i, 0, 2] + m[i, 2, 0]) / s], axis=-1)
    i = choice == 2
    s = np.sqrt(np.maximum(1.0 - r00[i] + r11[i] - r22[i], 0.0)) * 2
    q[i] = np.stack([(m[i, 0, 2] - m[i, 2, 0]) / s, (m[i, 0, 1] + m[i, 1, 0]) / s, 0.25 * s,
                     (m[i, 1, 2] + m[i, 2, 1]) / s], axis=-1)
    i = choice == 3
    s = np.sqrt(np.maximum(1.0 - r00[i] - r11[i] + r22[i], 0.0)) * 2
    q[i] = np.stack([(m[i, 1, 0] - m[i, 0, 1]) / s, (m[i, 0, 2] + m[i, 2, 0]) / s,
                     (m[i, 1, 2] + m[i, 2, 1]) / s, 0.25 * s], axis=-1)

    q = quat_normalize(q)
    q = np.where(q[:, :1] < 0, -q, q)
    return q.reshape(shape + (4,))


def euler_to_quat(angles_deg, order):
    """Compose per-axis rotations in file order (intrinsic, as BVH does).

    ``order`` is a string such as ``"ZXY"``; ``angles_deg[..., k]`` is the
    angle about ``order[k]``.
    """
    angles = np.radians(np.asarray(angles_deg, dtype=float))
    q = identity_quat(angles.shape[:-1])
    for k, axis in enumerate(order):
        q = quat_mul(q, quat_from_axis_angle(_AXES[axis], angles[..., k]))
    return q


def _axis_matrix(axis, angle):
    c, s = np.cos(angle), np.sin(angle)
    if axis == "X":
        return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])
    if axis == "Y":
        return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])


def _wrap_near(angle, ref):
    return angle + 2 * np.pi * np.round((ref - angle) / (2 * np.pi))


def matrix_to_euler_zxy(m, prev=None):
    """Angles ``(z, x, y)`` in radians with ``m = Rz(z) Rx(x) Ry(y)``.

    Without ``prev`` the principal solution (|x| <= pi/2) is returned.  With
    ``prev`` the candidate closest to it is chosen and each angle is unwrapped
    to the nearest multiple of 2*pi, so sequences stay continuous.
    """
    m = np.asarray(m, dtype=float)
    sx = np.clip(m[2, 1], -1.0, 1.0)
    x = np.arcsin(sx)
    if np.cos(x) > 1e-6:
        z = np.arctan2(-m[0, 1], m[1, 1])
        y = np.arctan2(-m[2, 0], m[2, 2])
    else:
        # gimbal lock: only z +/- y is determined; keep y from the previous frame
        y = 0.0 if prev is None else prev[2]
        rest = m @ _axis_matrix("Y", y).T @ _axis_matrix("X", x).T
        z = np.arctan2(rest[1, 0], rest[0, 0])
    first = np.array([z, x, y])
    if prev is None:
        return first
    prev = np.asarray(prev, dtype=float)
    second = np.array([z + np.pi, np.pi - x, y + np.pi])
    best = None
    for cand in (first, second):
        cand = _wrap_near(cand, prev)
        cost = np.abs(cand - prev).sum()
        if best is None or cost < best[0] - 1e-12:
            best = (cost, cand)
    return best[1]


def check_unit(q, tol=UNIT_TOL):
    norms = np.linalg.norm(np.asarray(q, dtype=float), axis=-1)
    bad = np.abs(norms - 1.0) > tol
    if np.any(bad):
        raise NonUnitQuaternion(f"{int(bad.sum())} quaternion(s) off unit norm (worst |q|={norms[bad].flat[0]:.9g})")


def quat_to_sixd(q, check=True):
    """First two rotation-matrix columns, laid out ``(a, b)``."""
    q = np.asarray(q, dtype=float)
    if check:
        check_unit(q)
    m = quat_to_matrix(q)
    return np.concatenate([m[..., :, 0], m[..., :, 1]], axis=-1)


def sixd_to_matrix(s, eps=SIXD_EPS):
    """Gram-Schmidt projection.  Returns ``(matrix, degenerate_mask)``.

    Degenerate entries (tiny first column or parallel columns) get the
    identity matrix.
    """
    s = np.asarray(s, dtype=float)
    a, b = s[..., :3], s[..., 3:6]
    na = np.linalg.norm(a, axis=-1, keepdims=True)
    bad = na[..., 0] <= eps
    c1 = a / np.where(na > eps, na, 1.0)
    b_perp = b - np.sum(c1 * b, axis=-1, keepdims=True) * c1
    nb = np.linalg.norm(b_perp, axis=-1, keepdims=True)
    bad = bad | (nb[..., 0] <= eps)
    c2 = b_perp / np.where(nb > eps, nb, 1.0)
    c3 = np.cross(c1, c2)
    m = np.stack([c1, c2, c3], axis=-1)
    if np.any(bad):
        m[bad] = np.eye(3)
    return m, bad


def sixd_to_quat(s, eps=SIXD_EPS, strict=True):
    """Inverse of :func:`quat_to_sixd`, returning ``w >= 0`` quaternions.

    With ``strict`` a degenerate input raises ``DegenerateSixD``; otherwise
    the identity is substituted and ``(quats, n_degenerate)`` is returned.
    """
    m, bad = sixd_to_matrix(s, eps)
    if strict:
        if np.any(bad):
            raise DegenerateSixD(f"{int(bad.sum())} 6D value(s) have a vanishing or parallel column pair")
        return matrix_to_quat(m)
    return matrix_to_quat(m), int(bad.sum())


def geodesic_angle(q1, q2):
    """Rotation angle between unit quaternions; invariant to q -> -q."""
    rel = quat_mul(quat_conj(q1), q2)
    return 2.0 * np.arctan2(np.linalg.norm(rel[..., 1:], axis=-1), np.abs(rel[..., 0]))


def yaw_quat(angle):
    return quat_from_axis_angle(_AXES["Y"], angle)


def facing_yaw(q, warn_cb=None):
    """Heading angle about +Y from the rotated local +Z axis.

    Falls back to the horizontal projection of the local +Y axis when +Z is
    (nearly) vertical; returns 0 where both degenerate.  ``warn_cb`` receives
    the number of fully degenerate entries.
    """
    q = np.asarray(q, dtype=float)
    fwd = quat_rotate(q, np.array([0.0, 0.0, 1.0]))
    up = quat_rotate(q, np.array([0.0, 1.0, 0.0]))
    horiz = np.linalg.norm(fwd[..., [0, 2]], axis=-1)
    vec = np.where((horiz < 1e-4)[..., None], up, fwd)
    degenerate = np.linalg.norm(vec[..., [0, 2]], axis=-1) < 1e-4
    yaw = np.where(degenerate, 0.0, np.arctan2(vec[..., 0], vec[..., 2]))
    if warn_cb is not None and np.any(degenerate):
        warn_cb(int(np.sum(degenerate)))
    return yaw
