"""Delimited-text readers/writers for marker, coordinate, torque and power series.

Floats are written with ``repr`` so files round-trip exactly and identical
inputs give byte-identical outputs.
"""
from __future__ import annotations

import csv
import io
import math
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ExobenchError
from .kinematics import MarkerFrame, MarkerTrajectory
from .model import KinematicChain


class SeriesFormatError(ExobenchError):
    """A series file parsed but does not follow its documented layout."""


def fmt(x) -> str:
    x = float(x)
    if x == 0.0:
        return "0.0"  # no negative zero in output
    return repr(x)


def _write(path: Path | None, header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def _read_rows(path) -> tuple[list[str], list[list[str]]]:
    text = Path(path).read_text()
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise SeriesFormatError(f"{path}: file is empty")
    rows = list(csv.reader(lines))
    header = [c.strip() for c in rows[0]]
    return header, rows[1:]


def _float(cell: str, path, line: int, col: str) -> float:
    try:
        v = float(cell)
    except ValueError:
        raise SeriesFormatError(f"{path}: row {line}: column {col}: not a number: {cell!r}") from None
    if not math.isfinite(v):
        raise SeriesFormatError(f"{path}: row {line}: column {col}: non-finite value")
    return v


def _sample_rate(t: np.ndarray, default: float | None) -> float:
    if len(t) < 2:
        if default is None:
            raise SeriesFormatError("cannot infer a sample rate from fewer than 2 frames")
        return default
    return (len(t) - 1) / (t[-1] - t[0])


# ----------------------------------------------------------------- markers

def write_markers(path, traj: MarkerTrajectory, names: Sequence[str]) -> str:
    header = ["frame", "t"] + [f"{m}_{ax}" for m in names for ax in "xyz"]
    rows = []
    for k, fr in enumerate(traj.frames):
        row = [str(k), fmt(fr.t)]
        for m in names:
            p = fr.positions.get(m)
            row += ["", "", ""] if p is None else [fmt(v) for v in p]
        rows.append(row)
    return _write(path, header, rows)


def read_markers(path, sample_rate: float | None = None) -> MarkerTrajectory:
    header, rows = _read_rows(path)
    if header[:2] != ["frame", "t"] or (len(header) - 2) % 3:
        raise SeriesFormatError(f"{path}: header must be frame,t,<marker>_x,<marker>_y,<marker>_z,...")
    names = []
    for i in range(2, len(header), 3):
        stems = {h.rsplit("_", 1)[0] for h in header[i:i + 3]}
        axes = [h.rsplit("_", 1)[-1] for h in header[i:i + 3]]
        if len(stems) != 1 or axes != ["x", "y", "z"]:
            raise SeriesFormatError(f"{path}: bad marker columns {header[i:i + 3]}")
        names.append(stems.pop())
    if not rows:
        raise SeriesFormatError(f"{path}: no frames")
    frames = []
    for line, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise SeriesFormatError(f"{path}: row {line}: expected {len(header)} fields, got {len(row)}")
        t = _float(row[1], path, line, "t")
        pos = {}
        for j, m in enumerate(names):
            cells = row[2 + 3 * j: 5 + 3 * j]
            empty = [c.strip() == "" for c in cells]
            if all(empty):
                continue
            if any(empty):
                raise SeriesFormatError(f"{path}: row {line}: marker {m} partially missing")
            pos[m] = np.array([_float(c, path, line, m) for c in cells])
        frames.append(MarkerFrame(t, pos))
    t = np.array([f.t for f in frames])
    try:
        rate = sample_rate if sample_rate is not None else _sample_rate(t, 100.0)
        return MarkerTrajectory(tuple(frames), rate)
    except ValueError as exc:
        raise SeriesFormatError(f"{path}: {exc}") from None


# ------------------------------------------------------------ coordinates

def _rot_mask(chain: KinematicChain) -> np.ndarray:
    return np.array([chain.dof(i + 1).kind == "rotation" for i in range(chain.n_coords)])


def write_q(path, chain: KinematicChain, t, Q) -> str:
    """Coordinates file; rotations in degrees, translations in metres."""
    Q = np.asarray(Q, dtype=float)
    rot = _rot_mask(chain)
    out = np.where(rot, np.degrees(Q), Q)
    header = ["frame", "t"] + [f"q{i + 1}" for i in range(chain.n_coords)]
    rows = [[str(k), fmt(tk)] + [fmt(v) for v in out[k]] for k, tk in enumerate(t)]
    return _write(path, header, rows)


def read_q(path, chain: KinematicChain) -> tuple[np.ndarray, np.ndarray]:
    """Returns ``(t, q)`` with q in SI units (radians, metres)."""
    header, rows = _read_rows(path)
    expected = ["frame", "t"] + [f"q{i + 1}" for i in range(chain.n_coords)]
    if header != expected:
        raise SeriesFormatError(f"{path}: header must be frame,t,q1..q{chain.n_coords}")
    if not rows:
        raise SeriesFormatError(f"{path}: no frames")
    data = np.array([[_float(c, path, line, header[j + 1]) for j, c in enumerate(row[1:])]
                     for line, row in enumerate(rows, start=2) if _row_len(row, header, path, line)])
    t, q = data[:, 0], data[:, 1:]
    rot = _rot_mask(chain)
    return t, np.where(rot, np.radians(q), q)


def _row_len(row, header, path, line) -> bool:
    if len(row) != len(header):
        raise SeriesFormatError(f"{path}: row {line}: expected {len(header)} fields, got {len(row)}")
    return True


# ----------------------------------------------------- torques and power

def write_torques(path, t, Q, lam) -> str:
    Q = np.asarray(Q, dtype=float)
    lam = np.asarray(lam, dtype=float).reshape(len(Q), -1)
    header = ["t"] + [f"Q{i + 1}" for i in range(Q.shape[1])] + [f"lambda{i + 1}" for i in range(lam.shape[1])]
    rows = [[fmt(tk)] + [fmt(v) for v in Q[k]] + [fmt(v) for v in lam[k]] for k, tk in enumerate(t)]
    return _write(path, header, rows)


def write_power(path, t, P, total) -> str:
    P = np.asarray(P, dtype=float)
    header = ["t"] + [f"P{i + 1}" for i in range(P.shape[1])] + ["Ptotal"]
    rows = [[fmt(tk)] + [fmt(v) for v in P[k]] + [fmt(total[k])] for k, tk in enumerate(t)]
    return _write(path, header, rows)


def read_table(path) -> tuple[list[str], np.ndarray]:
    """Generic numeric table (header + float rows)."""
    header, rows = _read_rows(path)
    data = np.array([[_float(c, path, line, header[j]) for j, c in enumerate(row)]
                     for line, row in enumerate(rows, start=2) if _row_len(row, header, path, line)])
    return header, data.reshape(len(rows), len(header))


def write_series(path, header: Sequence[str], columns: Sequence[Sequence[float]]) -> str:
    rows = [[fmt(v) for v in vals] for vals in zip(*columns)]
    return _write(path, header, rows)


def write_decoded(path, samples) -> str:
    header = ["t", "angle_deg", "torque_nm", "load_fraction", "direction", "over_range"]
    rows = [[fmt(s.t), fmt(s.angle), fmt(s.torque), fmt(s.load_fraction), s.direction.value,
             "1" if s.over_range else "0"] for s in samples]
    return _write(path, header, rows)
