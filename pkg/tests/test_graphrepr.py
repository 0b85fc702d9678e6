import warnings

import numpy as np
import pytest

from sata import synth
from sata.errors import EmbeddingCountMismatch, EmptyContactSet
from sata.graphrepr import (
    FEATURE_DIM,
    OUTPUT_DIM,
    build_static,
    contact_joint_set,
    derive_contacts,
    extract_dynamics,
    load_sequence,
    recover_motion,
    save_sequence,
)
from sata.kinematics import canonicalize, clip_positions, global_transforms
from sata.rotations import geodesic_angle, identity_quat, quat_from_axis_angle
from sata.semantics import HashEmbedding, embed, resolve_descriptions
from sata.skeleton import Joint, MotionClip, Skeleton


def y_tree():
    return Skeleton((Joint("r", None, (0, 0, 0)), Joint("a1", 0, (1, 0, 0)), Joint("a2", 1, (1, 0, 0)),
                     Joint("b1", 0, (-1, 0, 0)), Joint("b2", 3, (-1, 0, 0))))


def test_chain_depths():
    edges, ef, st = build_static(synth.chain5(), np.zeros((5, 4)))
    assert edges.tolist() == [[0, 1], [1, 2], [2, 3], [3, 4]]
    assert ef.depth.tolist() == [1, 2, 3, 4]
    assert ef.reverse_depth.tolist() == [3, 2, 1, 0]


def test_y_tree_reverse_depth():
    edges, ef, _ = build_static(y_tree(), np.zeros((5, 1)))
    root_edges = edges[:, 0] == 0
    assert ef.reverse_depth[root_edges].tolist() == [1, 1]
    assert np.all(ef.depth + ef.reverse_depth <= 2)


def test_single_joint():
    sk = Skeleton((Joint("r", None, (0, 1, 0)),))
    edges, ef, st = build_static(sk, np.zeros((1, 3)))
    assert edges.shape == (0, 2) and ef.as_array().shape == (0, 2)
    assert np.all(st.X_g == 0) and np.all(st.X_l == 0)


def test_static_invariants():
    sk = synth.biped17()
    _, _, st = build_static(sk, np.zeros((17, 2)))
    p = sk.parents
    np.testing.assert_allclose(st.X_g[1:], st.X_g[p[1:]] + st.X_l[1:])
    with pytest.raises(EmbeddingCountMismatch):
        build_static(sk, np.zeros((16, 2)))


def test_contact_set_from_descriptions_and_fallback():
    sk = synth.biped17()
    desc = resolve_descriptions(sk, synth.make_tags("biped17"))
    assert [sk.names[i] for i in contact_joint_set(sk, desc)] == ["LeftFoot", "RightFoot"]
    quad = synth.quadruped13()
    qd = resolve_descriptions(quad, synth.make_tags("quadruped13"))
    assert all("Paw" in quad.names[i] for i in contact_joint_set(quad, qd))
    # no foot words: lowest leaves
    assert contact_joint_set(y_tree(), ["x"] * 5).tolist() == [2, 4]


def _oracle_contacts(pos, cj, height):
    T, J = pos.shape[:2]
    ground = np.percentile(pos[:, cj, 1], 2.0)
    out = np.zeros((T, J))
    for t in range(T):
        a, b = (0, 1) if t == 0 else (t - 1, t)
        for j in cj:
            speed = np.sqrt(sum((pos[b, j, k] - pos[a, j, k]) ** 2 for k in range(3)))
            out[t, j] = float(pos[t, j, 1] - ground < 0.05 * height and speed < 0.01 * height)
    return out


def test_contacts_resting_and_raised():
    T = 10
    pos = np.zeros((T, 2, 3))
    pos[:, 1, 1] = 0.5
    flags, ground = derive_contacts(pos, 1 / 30, [0], 1.0)
    assert flags[:, 0].tolist() == [1.0] * T and ground == 0.0
    assert np.all(flags[:, 1] == 0)
    high = pos.copy()
    high[:, 0, 1] = 0.5
    flags, _ = derive_contacts(high, 1 / 30, [1], 1.0)
    assert np.all(flags[:, 1] == 1)  # ground is estimated, so a level foot is always in contact


def test_contacts_plant_and_lift_match_oracle():
    rng = np.random.default_rng(5)
    T = 40
    pos = np.zeros((T, 3, 3))
    t = np.arange(T)
    pos[:, 0, 1] = np.maximum(0, np.sin(t / 4.0)) * 0.2
    pos[:, 0, 2] = np.where(pos[:, 0, 1] > 0, t * 0.05, 0)
    pos[:, 1, 1] = 0.01 * rng.random(T)
    pos[:, 1, 0] = np.cumsum(rng.random(T) * 0.02)
    pos[:, 2, 1] = 1.0
    flags, _ = derive_contacts(pos, 1 / 30, [0, 1], 1.0)
    oracle = _oracle_contacts(pos, [0, 1], 1.0)
    np.testing.assert_array_equal(flags, oracle)
    assert 0 < flags[:, 0].sum() < T
    # invariant to rigid horizontal translation
    moved = pos + [3.0, 0.0, -2.0]
    np.testing.assert_array_equal(derive_contacts(moved, 1 / 30, [0, 1], 1.0)[0], flags)


def test_empty_contact_set_warns():
    with pytest.warns(EmptyContactSet):
        flags, _ = derive_contacts(np.zeros((4, 2, 3)), 1 / 30, [], 1.0)
    assert not flags.any()


def _clip(sk, T, root, rot):
    return MotionClip(sk, 1 / 30, root, rot)


def test_static_clip_has_zero_velocities():
    clip = synth.generate(synth.SynthSpec("biped17", "static", frames=8))[0]
    seq = extract_dynamics(canonicalize(clip))
    d = seq.dynamics
    assert np.all(d.v_x == 0) and np.all(d.v_q == 0) and np.all(d.r[:, :3] == 0)
    assert seq.features.shape == (8, 17, FEATURE_DIM)
    assert seq.targets.shape == (8, 17, OUTPUT_DIM)


def test_translating_root():
    sk = synth.chain5()
    T = 6
    root = np.zeros((T, 3))
    root[:, 2] = 0.05 * np.arange(T)
    seq = extract_dynamics(_clip(sk, T, root, identity_quat((T, 5))))
    np.testing.assert_allclose(seq.dynamics.r[1:, 2], 0.05)
    np.testing.assert_allclose(seq.dynamics.r[:, [0, 1]], 0.0, atol=1e-15)
    # r is broadcast to every row
    np.testing.assert_array_equal(seq.features[:, 3, 18:22], seq.dynamics.r)


def test_rotating_root_yaw_rate():
    sk = synth.chain5()
    T = 30
    rot = identity_quat((T, 5))
    rot[:, 0] = quat_from_axis_angle([0, 1, 0], np.radians(np.arange(T)))
    root = np.tile([0, 0.7, 0], (T, 1))
    seq = extract_dynamics(_clip(sk, T, root, rot))
    np.testing.assert_allclose(seq.dynamics.r[1:, 0], np.pi / 180, atol=1e-12)
    np.testing.assert_allclose(seq.dynamics.r[:, 3], 0.7)
    # the yaw is removed from the root rotation feature
    np.testing.assert_allclose(seq.dynamics.q[:, 0], np.tile([1, 0, 0, 0, 1, 0], (T, 1)), atol=1e-12)


def test_parent_relative_positions_in_facing_frame():
    clip = canonicalize(synth.generate(synth.SynthSpec("quadruped13", "turn_in_place"))[0])
    seq = extract_dynamics(clip)
    grot, gpos = global_transforms(clip.skeleton, clip.rotations, clip.root_positions)
    p = clip.skeleton.parents
    lengths = np.linalg.norm(seq.dynamics.x[:, 1:], axis=-1)
    np.testing.assert_allclose(lengths, np.broadcast_to(np.linalg.norm(clip.skeleton.offsets[1:], axis=-1), lengths.shape))
    np.testing.assert_allclose(np.linalg.norm(gpos[:, 1:] - gpos[:, p[1:]], axis=-1), lengths)


def test_recover_zero_outputs_is_rest_pose():
    sk = synth.biped17()
    out = np.zeros((5, 17, OUTPUT_DIM))
    out[..., 0] = 1
    out[..., 4] = 1
    rec = recover_motion(out, sk, 1 / 30)
    assert rec.degenerate == 0
    np.testing.assert_allclose(rec.clip.rotations, identity_quat((5, 17)))
    np.testing.assert_allclose(rec.clip.root_positions, 0.0)


def test_recover_integrates_root_velocity():
    sk = synth.chain5()
    out = np.zeros((4, 5, OUTPUT_DIM))
    out[..., 0] = out[..., 4] = 1
    out[:, 0, 8] = 0.05
    out[:, 3, 8] = 99.0  # non-root rows are ignored
    rec = recover_motion(out, sk, 1 / 30)
    np.testing.assert_allclose(rec.clip.root_positions[:, 2], [0.05, 0.10, 0.15, 0.20])


def test_recover_counts_degenerate():
    out = np.zeros((2, 5, OUTPUT_DIM))
    out[0, :, 0] = out[0, :, 4] = 1
    rec = recover_motion(out, synth.chain5(), 1 / 30)
    assert rec.degenerate == 5


def _bone_lengths(clip):
    pos = clip_positions(clip)
    p = clip.skeleton.parents
    return np.linalg.norm(pos[:, 1:] - pos[:, p[1:]], axis=-1)


def test_round_trip_all_corpus_clips(synth_corpus):
    for name, clip, tags in synth_corpus:
        clip = canonicalize(clip)
        seq = extract_dynamics(clip)
        rec = recover_motion(seq.targets, clip.skeleton, clip.frame_time).clip
        assert np.abs(clip_positions(rec) - clip_positions(clip)).max() < 1e-4, name
        assert geodesic_angle(rec.rotations, clip.rotations).max() < 1e-4, name


def test_recovered_bone_lengths_are_exact():
    sk = synth.quadruped13()
    rng = np.random.default_rng(0)
    rec = recover_motion(rng.standard_normal((6, 13, OUTPUT_DIM)), sk, 1 / 30).clip
    rest = np.linalg.norm(sk.offsets[1:], axis=-1)
    np.testing.assert_allclose(_bone_lengths(rec), np.broadcast_to(rest, (6, 12)), atol=1e-12)


def test_cache_round_trip_and_byte_identity(tmp_path):
    clip, tags = synth.generate(synth.SynthSpec("quadruped13", "walk_cycle", frames=16))
    clip = canonicalize(clip)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        desc = resolve_descriptions(clip.skeleton, tags)
    emb = embed(desc, HashEmbedding(8))
    seq = extract_dynamics(clip, embeddings=emb, descriptions=desc)
    a, b = tmp_path / "a.sgr", tmp_path / "b.sgr"
    save_sequence(a, seq)
    save_sequence(b, extract_dynamics(clip, embeddings=emb, descriptions=desc))
    assert a.read_bytes() == b.read_bytes()
    back = load_sequence(a)
    np.testing.assert_allclose(back.features, seq.features, atol=1e-6)
    np.testing.assert_allclose(back.statics.X_t, emb, atol=1e-6)
    assert back.skeleton == seq.skeleton
    assert back.contact_joints.tolist() == seq.contact_joints.tolist()
