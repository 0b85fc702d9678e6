import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from sata import synth
from sata.bvh import parse_bvh, read_bvh, save_bvh, write_bvh
from sata.errors import (
    BVHError,
    DimensionMismatch,
    FrameCountMismatch,
    NonPositiveFrameTime,
    SATAError,
    UnbalancedBraces,
    UnitGuessWarning,
    UnknownChannel,
)
from sata.kinematics import clip_positions
from sata.rotations import euler_to_quat, identity_quat
from sata.skeleton import Joint, MotionClip, Skeleton

from conftest import CM_BVH, MINIMAL_BVH

S2 = np.sqrt(0.5)


def positions_by_name(clip):
    pos = clip_positions(clip)
    return {n: pos[:, i] for i, n in enumerate(clip.skeleton.names)}


def test_minimal_two_joint():
    sk, clip = parse_bvh(MINIMAL_BVH)
    assert len(sk) == 2 and sk.names == ["Hips", "Chest"]
    assert clip.n_frames == 1
    np.testing.assert_allclose(clip.rotations, identity_quat((1, 2)))
    np.testing.assert_allclose(clip.root_positions, 0.0)
    assert clip.frame_time == pytest.approx(0.033333)


def test_euler_zxy_z90_parses_to_quaternion():
    text = MINIMAL_BVH.replace("0 0 0 0 0 0 0 0 0", "0 0 0 0 0 0 90 0 0")
    _, clip = parse_bvh(text)
    np.testing.assert_allclose(clip.rotations[0, 1], [S2, 0, 0, S2], atol=1e-12)


def test_write_quaternion_gives_z90_row():
    sk, clip = parse_bvh(MINIMAL_BVH)
    rot = clip.rotations.copy()
    rot[0, 1] = [S2, 0, 0, S2]
    text = write_bvh(sk, clip.copy(rotations=rot))
    row = text.strip().splitlines()[-1].split()
    assert row[6:9] == ["90.000000", "0.000000", "0.000000"]


def test_identity_clip_writes_zero_rows():
    sk = synth.biped17()
    clip = MotionClip(sk, 1 / 30, np.zeros((4, 3)), identity_quat((4, len(sk))))
    text = write_bvh(sk, clip)
    rows = text.split("MOTION\n")[1].splitlines()[2:]
    assert len(rows) == 4
    assert all(set(v) <= set("0.") for r in rows for v in r.split())


def test_write_dimension_mismatch():
    sk, clip = parse_bvh(MINIMAL_BVH)
    with pytest.raises(DimensionMismatch):
        write_bvh(synth.chain5(), clip)


def test_writer_format():
    sk, clip = parse_bvh(CM_BVH, units="cm")
    text = write_bvh(sk, clip)
    assert "\r" not in text
    assert "CHANNELS 3 Zrotation Xrotation Yrotation" in text
    assert text.count("End Site") == 3
    for row in text.split("MOTION\n")[1].splitlines()[2:]:
        assert all(len(v.split(".")[1]) == 6 for v in row.split())


def test_cm_file_units_end_sites_and_crlf():
    with pytest.warns(UnitGuessWarning):
        sk, clip = parse_bvh(CM_BVH)
    assert clip.meta["units_scale"] == 0.01
    assert "head_End" in sk.names and sk.joints[sk.index("head_End")].is_end_site
    assert sk.offsets[sk.index("calf_l")] == pytest.approx([0, -0.42, 0])
    np.testing.assert_allclose(clip.root_positions[0], [0.01, 0.9, 0.02])
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        sk_m, _ = parse_bvh(CM_BVH, units="m")
    assert sk_m.offsets[sk_m.index("calf_l")] == pytest.approx([0, -42, 0])


def test_xyz_order_is_composed_in_file_order():
    _, clip = parse_bvh(CM_BVH, units="cm")
    np.testing.assert_allclose(clip.rotations[0, 1], euler_to_quat([5.0, -5.0, 15.0], "XYZ"), atol=1e-12)


def _roundtrip(sk, clip):
    sk2, clip2 = parse_bvh(write_bvh(sk, clip), units="m")
    a, b = positions_by_name(clip), positions_by_name(clip2)
    assert set(a) == set(b)
    return max(np.abs(a[n] - b[n]).max() for n in a), sk2, clip2


def test_round_trip_corpus(synth_corpus):
    corpus = [(n, c.skeleton, c) for n, c, _ in synth_corpus]
    corpus.append(("cm", *parse_bvh(CM_BVH, units="cm")))
    corpus.append(("minimal", *parse_bvh(MINIMAL_BVH)))
    assert len(corpus) >= 10
    for name, sk, clip in corpus:
        err, sk2, clip2 = _roundtrip(sk, clip)
        assert err < 1e-5, name
        # and a second pass is a fixed point of the text
        assert write_bvh(sk2, clip2) == write_bvh(*parse_bvh(write_bvh(sk2, clip2), units="m"))


def test_round_trip_field_for_field():
    sk, clip = parse_bvh(write_bvh(*parse_bvh(CM_BVH, units="cm")), units="m")
    sk2, clip2 = parse_bvh(write_bvh(sk, clip), units="m")
    assert sk == sk2
    np.testing.assert_allclose(clip2.root_positions, clip.root_positions, atol=1e-6)
    np.testing.assert_allclose(np.abs(np.sum(clip.rotations * clip2.rotations, -1)), 1.0, atol=1e-9)
    assert clip2.frame_time == clip.frame_time


def test_joint_order_changes_text_not_positions():
    # same tree, two different index orders of the branches
    a = Skeleton((Joint("r", None, (0, 0, 0), ("Xposition",)), Joint("x", 0, (1, 0, 0)), Joint("y", 0, (0, 1, 0))))
    b = Skeleton((Joint("r", None, (0, 0, 0), ("Xposition",)), Joint("y", 0, (0, 1, 0)), Joint("x", 0, (1, 0, 0))))
    rng = np.random.default_rng(3)
    q = rng.standard_normal((2, 3, 4))
    q /= np.linalg.norm(q, axis=-1, keepdims=True)
    root = rng.standard_normal((2, 3))
    ca = MotionClip(a, 0.1, root, q)
    cb = MotionClip(b, 0.1, root, q[:, [0, 2, 1]])
    ta, tb = write_bvh(a, ca), write_bvh(b, cb)
    assert ta.split("MOTION")[0] != tb.split("MOTION")[0]
    pa = positions_by_name(parse_bvh(ta, units="m")[1])
    pb = positions_by_name(parse_bvh(tb, units="m")[1])
    for n in pa:
        np.testing.assert_allclose(pa[n], pb[n], atol=1e-5)


def test_file_helpers(tmp_path):
    clip, _ = synth.generate(synth.SynthSpec("chain5", "sine_wave", frames=8))
    p = tmp_path / "c.bvh"
    save_bvh(p, clip.skeleton, clip)
    sk, back = read_bvh(p)
    assert len(sk) == 5 and back.n_frames == 8


# --- diagnostics -------------------------------------------------------------

def _err(text, kind):
    with pytest.raises(kind) as info:
        parse_bvh(text)
    return info.value


def test_unbalanced_braces():
    e = _err(MINIMAL_BVH.replace("  }\n}\n", "  }\n"), UnbalancedBraces)
    assert e.line is not None


def test_extra_closing_brace():
    e = _err(MINIMAL_BVH.replace("}\nMOTION", "}\n}\nMOTION"), UnbalancedBraces)
    assert e.line == 12


def test_unknown_channel_names_line():
    e = _err(MINIMAL_BVH.replace("CHANNELS 3 Zrotation", "CHANNELS 3 Wrotation"), UnknownChannel)
    assert e.line == 9 and "line 9:" in str(e)


def test_frame_count_mismatch():
    e = _err(MINIMAL_BVH.replace("Frames: 1", "Frames: 2"), FrameCountMismatch)
    assert "declared 2" in str(e)


@pytest.mark.parametrize("ft", ["0", "-0.1"])
def test_non_positive_frame_time(ft):
    e = _err(MINIMAL_BVH.replace("0.033333", ft), NonPositiveFrameTime)
    assert e.line == 14


def test_short_row_is_diagnosed():
    e = _err(MINIMAL_BVH.replace("0 0 0 0 0 0 0 0 0", "0 0 0"), BVHError)
    assert e.line == 15


VALID = [MINIMAL_BVH, CM_BVH]


@settings(max_examples=300, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.sampled_from(VALID), st.data())
def test_parser_is_total(text, data):
    # random deletions, duplications and substitutions never crash the parser
    n_ops = data.draw(st.integers(1, 4))
    for _ in range(n_ops):
        if not text:
            break
        i = data.draw(st.integers(0, len(text) - 1))
        j = data.draw(st.integers(i, min(len(text), i + 12)))
        op = data.draw(st.sampled_from(["del", "dup", "sub"]))
        if op == "del":
            text = text[:i] + text[j:]
        elif op == "dup":
            text = text[:j] + text[i:j] + text[j:]
        else:
            text = text[:i] + data.draw(st.text(alphabet="{}0123456789.- \nabcXYZ:", max_size=6)) + text[j:]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            sk, clip = parse_bvh(text)
        except SATAError:
            return
    # accepted input must be internally consistent: no silent truncation
    declared = int([ln for ln in text.splitlines() if ln.strip().lower().startswith("frames")][0].split(":")[1])
    assert clip.n_frames == declared
    assert np.all(np.isfinite(clip.rotations))
