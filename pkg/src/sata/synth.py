"""Deterministic toy skeletons and motions for tests and demos."""

from dataclasses import dataclass

import numpy as np

from .errors import UnknownPreset, ValidationError
from .kinematics import forward_kinematics
from .rotations import identity_quat, quat_from_axis_angle, quat_mul, yaw_quat
from .semantics import TagDictionary
from .skeleton import Joint, MotionClip, Skeleton

SKELETONS = ("chain5", "biped17", "quadruped13")
MOTIONS = ("static", "sine_wave", "walk_cycle", "turn_in_place")
FRAME_TIME = 1.0 / 30.0

_CHAIN_TAGS = {"Root": "the pelvis and hip root anchor", "Seg": "a spine bone segment"}


def _joint(name, parent, offset, root=False):
    chans = ("Xposition", "Yposition", "Zposition", "Zrotation", "Xrotation", "Yrotation") if root \
        else ("Zrotation", "Xrotation", "Yrotation")
    return Joint(name, parent, tuple(float(v) for v in offset), chans)


def chain5():
    joints = [_joint("Root", None, (0, 0, 0), root=True)]
    for k in range(1, 5):
        joints.append(_joint(f"Seg_{k}", k - 1, (0, 0.25, 0)))
    return Skeleton(tuple(joints))


def biped17():
    spec = [
        ("Hips", None, (0, 0.5, 0)),
        ("Spine", 0, (0, 0.10, 0)),
        ("Chest", 1, (0, 0.12, 0)),
        ("Neck", 2, (0, 0.12, 0)),
        ("Head", 3, (0, 0.08, 0)),
        ("LeftArm", 2, (0.12, 0.06, 0)),
        ("LeftForeArm", 5, (0.15, 0, 0)),
        ("LeftHand", 6, (0.13, 0, 0)),
        ("RightArm", 2, (-0.12, 0.06, 0)),
        ("RightForeArm", 8, (-0.15, 0, 0)),
        ("RightHand", 9, (-0.13, 0, 0)),
        ("LeftUpLeg", 0, (0.08, -0.02, 0)),
        ("LeftLeg", 11, (0, -0.24, 0)),
        ("LeftFoot", 12, (0, -0.24, 0)),
        ("RightUpLeg", 0, (-0.08, -0.02, 0)),
        ("RightLeg", 14, (0, -0.24, 0)),
        ("RightFoot", 15, (0, -0.24, 0)),
    ]
    return Skeleton(tuple(_joint(n, p, o, root=p is None) for n, p, o in spec))


def quadruped13():
    spec = [
        ("Spine_1", None, (0, 0.5, 0)),
        ("Spine_2", 0, (0, 0, 0.25)),
        ("Spine_3", 1, (0, 0, 0.25)),
        ("Head", 2, (0, 0.15, 0.15)),
        ("Tail", 0, (0, 0.05, -0.3)),
        ("frontLeftLegUpr", 2, (0.1, -0.05, 0)),
        ("frontLeftPaw", 5, (0, -0.45, 0)),
        ("frontRightLegUpr", 2, (-0.1, -0.05, 0)),
        ("frontRightPaw", 7, (0, -0.45, 0)),
        ("backLeftLegUpr", 0, (0.1, -0.05, 0)),
        ("backLeftPaw", 9, (0, -0.45, 0)),
        ("backRightLegUpr", 0, (-0.1, -0.05, 0)),
        ("backRightPaw", 11, (0, -0.45, 0)),
    ]
    return Skeleton(tuple(_joint(n, p, o, root=p is None) for n, p, o in spec))


def make_skeleton(preset):
    try:
        return {"chain5": chain5, "biped17": biped17, "quadruped13": quadruped13}[preset]()
    except KeyError:
        raise UnknownPreset(f"unknown skeleton preset {preset!r}; choose from {SKELETONS}") from None


def make_tags(preset):
    if preset == "chain5":
        return TagDictionary(_CHAIN_TAGS)
    if preset == "biped17":
        return TagDictionary.builtin("human")
    if preset == "quadruped13":
        return TagDictionary.builtin("quadruped")
    raise UnknownPreset(f"unknown skeleton preset {preset!r}")


@dataclass(frozen=True)
class SynthSpec:
    skeleton: str = "biped17"
    motion: str = "walk_cycle"
    frames: int = 64
    seed: int = 0
    speed: float = 0.05
    turn_rate_deg: float = 2.0


_X = np.array([1.0, 0.0, 0.0])
_Y = np.array([0.0, 1.0, 0.0])
_Z = np.array([0.0, 0.0, 1.0])


def _swing(t, amp_deg, phase, period):
    return np.radians(amp_deg) * np.sin(2 * np.pi * t / period + phase)


def _gait_rotations(sk, t, rng, preset, period, speed=0.05):
    """Phase-offset limb swings keyed on joint names.

    Hip swing amplitude is matched to ``speed`` so the stance foot is nearly
    static in the world while it crosses under the hip.
    """
    J = len(sk)
    leg_len = 0.48 if preset == "biped17" else 0.5
    hip_amp = float(np.clip(np.degrees(speed * period / (2 * np.pi * leg_len)), 10.0, 45.0))
    rot = identity_quat((len(t), J))
    names = sk.names
    for i, name in enumerate(names):
        if i == 0:
            continue
        low = name.lower()
        side = np.pi if ("right" in low) else 0.0
        jitter = rng.uniform(-0.2, 0.2)
        if preset == "quadruped13" and ("legupr" in low):
            diag = 0.0 if low.startswith("front") else np.pi
            ang = _swing(t, hip_amp, side + diag + jitter, period)
            rot[:, i] = quat_from_axis_angle(_X, ang)
        elif low.endswith("upleg"):
            rot[:, i] = quat_from_axis_angle(_X, _swing(t, hip_amp, side + jitter, period))
        elif low.endswith("leg") and not low.endswith("upleg"):
            bend = np.radians(20) * (1 + np.sin(2 * np.pi * t / period + side - 0.5 * np.pi))
            rot[:, i] = quat_from_axis_angle(_X, bend)
        elif low.endswith("arm") and "fore" not in low:
            rot[:, i] = quat_from_axis_angle(_Y, _swing(t, 20, side + np.pi + jitter, period))
        elif "forearm" in low:
            rot[:, i] = quat_from_axis_angle(_Y, _swing(t, 10, side + np.pi + 0.3, period))
        elif "tail" in low:
            rot[:, i] = quat_from_axis_angle(_Y, _swing(t, 15, jitter, period / 2))
        elif "seg" in low or "spine" in low:
            rot[:, i] = quat_from_axis_angle(_Z, _swing(t, 6, jitter + i, period))
    return rot


def _sine_rotations(sk, t, rng):
    J = len(sk)
    rot = identity_quat((len(t), J))
    for i in range(1, J):
        axis = rng.standard_normal(3)
        amp = rng.uniform(10, 30)
        period = rng.uniform(20, 50)
        phase = rng.uniform(0, 2 * np.pi)
        rot[:, i] = quat_from_axis_angle(axis, _swing(t, amp, phase, period))
    return rot


def _ground_feet(sk, rotations, root_pos, preset):
    if preset == "chain5":
        return root_pos
    feet = [i for i, n in enumerate(sk.names) if n.lower().endswith(("foot", "paw"))]
    pos = forward_kinematics(sk, rotations, root_pos)
    lowest = pos[:, feet, 1].min(axis=1)
    out = root_pos.copy()
    out[:, 1] -= lowest
    return out


def generate(spec):
    """``(MotionClip, TagDictionary)`` for a synth spec; fully deterministic."""
    if spec.motion not in MOTIONS:
        raise UnknownPreset(f"unknown motion preset {spec.motion!r}; choose from {MOTIONS}")
    if spec.frames < 2:
        raise ValidationError("synthetic clips need at least 2 frames")
    sk = make_skeleton(spec.skeleton)
    tags = make_tags(spec.skeleton)
    rng = np.random.default_rng([spec.seed, SKELETONS.index(spec.skeleton), MOTIONS.index(spec.motion)])
    T = spec.frames
    t = np.arange(T, dtype=float)
    root_pos = np.tile(np.asarray(sk.joints[0].offset, dtype=float), (T, 1))
    rotations = identity_quat((T, len(sk)))
    period = 32.0

    if spec.motion == "sine_wave":
        rotations = _sine_rotations(sk, t, rng)
    elif spec.motion == "walk_cycle":
        rotations = _gait_rotations(sk, t, rng, spec.skeleton, period, spec.speed)
        root_pos[:, 2] = spec.speed * t
    elif spec.motion == "turn_in_place":
        rotations = _gait_rotations(sk, t, rng, spec.skeleton, period)
        rotations[:, 0] = quat_mul(yaw_quat(np.radians(spec.turn_rate_deg) * t), rotations[:, 0])

    if spec.motion != "static":
        root_pos = _ground_feet(sk, rotations, root_pos, spec.skeleton)
    rotations /= np.linalg.norm(rotations, axis=-1, keepdims=True)
    clip = MotionClip(sk, FRAME_TIME, root_pos, rotations,
                      meta={"synth": {"skeleton": spec.skeleton, "motion": spec.motion, "seed": spec.seed}})
    return clip, tags


def corpus(frames=64, seed=0, skeletons=SKELETONS, motions=MOTIONS):
    """Every skeleton x motion combination as ``(name, clip, tags)``."""
    out = []
    for s in skeletons:
        for m in motions:
            clip, tags = generate(SynthSpec(s, m, frames, seed))
            out.append((f"{s}_{m}", clip, tags))
    return out
