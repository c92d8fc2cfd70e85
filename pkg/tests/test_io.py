import numpy as np
import pytest

from exobench import io as xio
from exobench.kinematics import MarkerFrame, MarkerTrajectory, SweepSpec, synth_ps_trajectory


def test_markers_round_trip_exactly(chain, tmp_path):
    s = synth_ps_trajectory(chain, SweepSpec(duration=0.05, noise_sd=1e-3))
    p = tmp_path / "m.csv"
    text = xio.write_markers(p, s.trajectory, chain.marker_names)
    back = xio.read_markers(p)
    assert back.sample_rate == pytest.approx(100.0)
    for a, b in zip(s.trajectory.frames, back.frames):
        assert a.t == b.t
        assert all(np.array_equal(a.positions[m], b.positions[m]) for m in chain.marker_names)
    assert xio.write_markers(None, back, chain.marker_names) == text


def test_missing_markers_are_empty_cells(tmp_path):
    frames = (MarkerFrame(0.0, {"a": (1, 2, 3), "b": (4, 5, 6)}), MarkerFrame(0.01, {"a": (1, 2, 3)}))
    p = tmp_path / "m.csv"
    xio.write_markers(p, MarkerTrajectory(frames, 100.0), ["a", "b"])
    assert p.read_text().splitlines()[2].endswith(",,,")
    back = xio.read_markers(p)
    assert set(back.frames[1].positions) == {"a"}


@pytest.mark.parametrize("body, match", [
    ("frame,t,a_x,a_y,a_z\n0,0.0,1,,3\n", "partially missing"),
    ("frame,t,a_x,a_y\n0,0.0,1,2\n", "header"),
    ("frame,t,a_x,a_y,a_z\n0,0.0,1,2,x\n", "not a number"),
    ("frame,t,a_x,a_y,a_z\n0,0.0,1,2,nan\n", "non-finite"),
    ("frame,t,a_x,a_y,a_z\n0,0.0,1,2\n", "expected 5 fields"),
    ("frame,t,a_x,a_y,a_z\n", "no frames"),
    ("", "empty"),
])
def test_bad_marker_files(tmp_path, body, match):
    p = tmp_path / "m.csv"
    p.write_text(body)
    with pytest.raises(xio.SeriesFormatError, match=match):
        xio.read_markers(p)


def test_q_file_uses_degrees_for_rotations(chain, tmp_path):
    q = np.zeros((2, 23))
    q[:, 18] = [np.pi / 2, -np.pi / 4]
    q[:, 16] = 0.01
    p = tmp_path / "q.csv"
    xio.write_q(p, chain, [0.0, 0.01], q)
    row = p.read_text().splitlines()[1].split(",")
    assert float(row[2 + 18]) == 90.0 and float(row[2 + 16]) == 0.01
    t, back = xio.read_q(p, chain)
    assert np.allclose(back, q, atol=1e-15) and t.tolist() == [0.0, 0.01]


def test_no_negative_zero():
    assert xio.fmt(-0.0) == "0.0" and xio.fmt(-1.5) == "-1.5"


def test_read_table(tmp_path):
    p = tmp_path / "s.csv"
    xio.write_series(p, ["t", "y"], [[0.0, 1.0], [2.0, 3.0]])
    header, data = xio.read_table(p)
    assert header == ["t", "y"] and data.tolist() == [[0.0, 2.0], [1.0, 3.0]]
