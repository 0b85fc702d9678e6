import numpy as np
import pytest

from sata import synth

MINIMAL_BVH = """HIERARCHY
ROOT Hips
{
  OFFSET 0 0 0
  CHANNELS 6 Xposition Yposition Zposition Zrotation Xrotation Yrotation
  JOINT Chest
  {
    OFFSET 0 0.5 0
    CHANNELS 3 Zrotation Xrotation Yrotation
  }
}
MOTION
Frames: 1
Frame Time: 0.033333
0 0 0 0 0 0 0 0 0
"""

# centimeter units, End Sites, XYZ order on one joint, CRLF line endings
CM_BVH = (
    "HIERARCHY\r\n"
    "ROOT pelvis\r\n"
    "{\r\n"
    "\tOFFSET 0.0 90.0 0.0\r\n"
    "\tCHANNELS 6 Xposition Yposition Zposition Zrotation Xrotation Yrotation\r\n"
    "\tJOINT spine_01\r\n"
    "\t{\r\n"
    "\t\tOFFSET 0.0 20.0 1.0\r\n"
    "\t\tCHANNELS 3 Xrotation Yrotation Zrotation\r\n"
    "\t\tJOINT head\r\n"
    "\t\t{\r\n"
    "\t\t\tOFFSET 0.0 25.0 0.0\r\n"
    "\t\t\tCHANNELS 3 Zrotation Xrotation Yrotation\r\n"
    "\t\t\tEnd Site\r\n"
    "\t\t\t{\r\n"
    "\t\t\t\tOFFSET 0.0 10.0 0.0\r\n"
    "\t\t\t}\r\n"
    "\t\t}\r\n"
    "\t}\r\n"
    "\tJOINT thigh_l\r\n"
    "\t{\r\n"
    "\t\tOFFSET 10.0 -5.0 0.0\r\n"
    "\t\tCHANNELS 3 Zrotation Xrotation Yrotation\r\n"
    "\t\tJOINT calf_l\r\n"
    "\t\t{\r\n"
    "\t\t\tOFFSET 0.0 -42.0 0.0\r\n"
    "\t\t\tCHANNELS 3 Zrotation Xrotation Yrotation\r\n"
    "\t\t\tEnd Site\r\n"
    "\t\t\t{\r\n"
    "\t\t\t\tOFFSET 0.0 -43.0 0.0\r\n"
    "\t\t\t}\r\n"
    "\t\t}\r\n"
    "\t}\r\n"
    "\tJOINT thigh_r\r\n"
    "\t{\r\n"
    "\t\tOFFSET -10.0 -5.0 0.0\r\n"
    "\t\tCHANNELS 3 Zrotation Xrotation Yrotation\r\n"
    "\t\tJOINT calf_r\r\n"
    "\t\t{\r\n"
    "\t\t\tOFFSET 0.0 -42.0 0.0\r\n"
    "\t\t\tCHANNELS 3 Zrotation Xrotation Yrotation\r\n"
    "\t\t\tEnd Site\r\n"
    "\t\t\t{\r\n"
    "\t\t\t\tOFFSET 0.0 -43.0 0.0\r\n"
    "\t\t\t}\r\n"
    "\t\t}\r\n"
    "\t}\r\n"
    "}\r\n"
    "MOTION\r\n"
    "Frames: 3\r\n"
    "Frame Time: 0.0083333\r\n"
    "1.0 90.0 2.0 10.0 20.0 30.0 5.0 -5.0 15.0 0.0 90.0 0.0 -30.0 0.0 10.0 45.0 0.0 0.0 30.0 0.0 0.0 0.0 0.0 0.0\r\n"
    "1.5 91.0 4.0 12.0 25.0 -170.0 6.0 -5.0 16.0 1.0 89.0 2.0 -31.0 1.0 10.0 44.0 0.0 0.0 31.0 0.0 0.0 0.0 1.0 0.0\r\n"
    "2.0 92.0 6.0 14.0 30.0 175.0 7.0 -5.0 17.0 2.0 88.0 4.0 -32.0 2.0 10.0 43.0 0.0 0.0 32.0 0.0 0.0 0.0 2.0 0.0\r\n"
)


def random_quats(n, rng):
    q = rng.standard_normal((n, 4))
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def synth_corpus():
    return synth.corpus()


# --- acceptance summary -------------------------------------------------------------

def pytest_configure(config):
    config.acceptance_lines = []


@pytest.fixture
def acceptance(request):
    """``record(n, ok, detail, seconds)`` adds one line to the acceptance summary."""
    lines = request.config.acceptance_lines

    def record(n, ok, detail, seconds):
        line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  ({seconds:.1f} s)  {detail}"
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = getattr(config, "acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
