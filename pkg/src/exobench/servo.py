"""Decoding of smart-servo position/load feedback and trial-log ingest.

Position counts are 0.29 deg each over 0..1023. Load is a direction bit at
1024 plus a 10-bit magnitude in units of 0.1 % of stall torque (1.8 N m).
Positive torque is counter-clockwise, which on the test bench is pronation.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable

from .errors import DecodeError, LogParseError

log = logging.getLogger(__name__)

DEG_PER_COUNT = 0.29
POSITION_MAX = 1023
LOAD_MAX = 2047
CW_OFFSET = 1024
LOAD_UNIT = 0.001  # fraction of stall torque per count
STALL_TORQUE = 1.8  # N m
DEFAULT_NEUTRAL = 512
LOG_HEADER = ("t", "servo_id", "raw_position", "raw_load")
METADATA_KEYS = ("session_id", "trial_label", "speed_rpm", "joint_name", "neutral_raw")


class Direction(str, Enum):
    CCW = "CCW"
    CW = "CW"


@dataclass(frozen=True)
class ServoFeedbackRecord:
    t: float
    servo_id: int
    raw_position: int
    raw_load: int


@dataclass(frozen=True)
class ServoTrialLog:
    records: tuple[ServoFeedbackRecord, ...]
    metadata: dict = field(default_factory=dict)

    @property
    def neutral_raw(self) -> int:
        return int(self.metadata.get("neutral_raw", DEFAULT_NEUTRAL))


@dataclass(frozen=True)
class DecodedSample:
    t: float
    angle: float  # deg from neutral
    torque: float  # N m, + = CCW
    load_fraction: float
    direction: Direction
    over_range: bool = False  # K > 1


def _check_int(raw, hi: int, what: str) -> int:
    if isinstance(raw, bool) or not isinstance(raw, int):
        raise DecodeError(f"{what} must be an integer, got {raw!r}")
    if not 0 <= raw <= hi:
        raise DecodeError(f"{what} {raw} outside 0..{hi}")
    return raw


def decode_position(raw: int) -> float:
    """Absolute servo angle in degrees (0..296.67)."""
    return _check_int(raw, POSITION_MAX, "raw position") * DEG_PER_COUNT


def decode_load(raw: int) -> tuple[Direction, float]:
    """Direction and load fraction K. Raw 1023 is counter-clockwise."""
    raw = _check_int(raw, LOAD_MAX, "raw load")
    if raw < CW_OFFSET:
        return Direction.CCW, raw * LOAD_UNIT
    return Direction.CW, (raw - CW_OFFSET) * LOAD_UNIT


def load_to_torque(direction: Direction | str, k: float) -> float:
    if k < 0:
        raise DecodeError(f"load fraction must be non-negative, got {k}")
    sign = 1.0 if Direction(direction) is Direction.CCW else -1.0
    return sign * STALL_TORQUE * k + 0.0  # +0.0 folds -0.0 to 0.0


def decode_record(rec: ServoFeedbackRecord, neutral_raw: int = DEFAULT_NEUTRAL) -> DecodedSample:
    angle = decode_position(rec.raw_position) - decode_position(neutral_raw)
    direction, k = decode_load(rec.raw_load)
    over = k > 1.0
    if over:
        log.warning("load fraction %.3f exceeds 1 at t=%s", k, rec.t)
    return DecodedSample(rec.t, angle, load_to_torque(direction, k), k, direction, over)


def decode_trial(trial: ServoTrialLog) -> list[DecodedSample]:
    out = []
    neutral = trial.neutral_raw
    for i, rec in enumerate(trial.records):
        try:
            out.append(decode_record(rec, neutral))
        except DecodeError as exc:
            raise DecodeError(str(exc), index=i) from None
    return out


# ---------------------------------------------------------------- encoders

def encode_position(angle_deg: float) -> int:
    """Nearest raw count for an absolute angle (inverse of decode_position)."""
    raw = int(round(angle_deg / DEG_PER_COUNT))
    return _check_int(raw, POSITION_MAX, "encoded position")


def encode_load(direction: Direction | str, k: float) -> int:
    counts = int(round(k / LOAD_UNIT))
    if not 0 <= counts <= POSITION_MAX:
        raise DecodeError(f"load fraction {k} not encodable")
    return counts if Direction(direction) is Direction.CCW else counts + CW_OFFSET


def encode_torque(torque: float) -> int:
    """Raw load register for a signed torque; zero maps to the CCW zero."""
    k = min(abs(torque) / STALL_TORQUE, POSITION_MAX * LOAD_UNIT)
    return encode_load(Direction.CCW if torque >= 0 else Direction.CW, k)


# ------------------------------------------------------------------- logs

def _parse_metadata(key: str, value: str, line_no: int):
    if key == "speed_rpm":
        try:
            return float(value)
        except ValueError:
            raise LogParseError(f"speed_rpm must be a number, got {value!r}", line_no) from None
    if key == "neutral_raw":
        try:
            return _check_int(int(value), POSITION_MAX, "neutral_raw")
        except (ValueError, DecodeError):
            raise LogParseError(f"neutral_raw must be an integer 0..{POSITION_MAX}, got {value!r}",
                                line_no) from None
    return value


def _parse_int(text: str, what: str, line_no: int) -> int:
    text = text.strip()
    if not text.lstrip("-").isdigit():
        raise LogParseError(f"{what} must be an integer, got {text!r}", line_no)
    return int(text)


def parse_trial_text(text: str) -> ServoTrialLog:
    """Parse a trial log (``# key=value`` metadata, then a CSV table)."""
    metadata: dict = {}
    records: list[ServoFeedbackRecord] = []
    header_seen = False
    servo_ids: set[int] = set()
    last_t = -math.inf
    for line_no, line in enumerate(io.StringIO(text), start=1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body:
                key, value = (s.strip() for s in body.split("=", 1))
                metadata[key] = _parse_metadata(key, value, line_no)
            continue
        cells = next(csv.reader([line]))
        if not header_seen:
            if tuple(c.strip() for c in cells) != LOG_HEADER:
                raise LogParseError(f"expected header {','.join(LOG_HEADER)}", line_no)
            header_seen = True
            continue
        if len(cells) != 4:
            raise LogParseError(f"expected 4 fields, got {len(cells)}", line_no)
        try:
            t = float(cells[0])
        except ValueError:
            raise LogParseError(f"t must be a number, got {cells[0]!r}", line_no) from None
        if not math.isfinite(t):
            raise LogParseError("t must be finite", line_no)
        sid = _parse_int(cells[1], "servo_id", line_no)
        pos = _parse_int(cells[2], "raw_position", line_no)
        load = _parse_int(cells[3], "raw_load", line_no)
        if t < last_t:
            raise LogParseError(f"timestamps not monotonic ({t} after {last_t})", line_no)
        last_t = t
        servo_ids.add(sid)
        records.append(ServoFeedbackRecord(t, sid, pos, load))
    if not header_seen:
        raise LogParseError("missing header line", 1)
    if len(servo_ids) > 1:
        log.info("trial log mixes servo ids %s", sorted(servo_ids))
    return ServoTrialLog(tuple(records), metadata)


def parse_trial_log(path: str | Path) -> ServoTrialLog:
    return parse_trial_text(Path(path).read_text())


def format_trial_log(records: Iterable[ServoFeedbackRecord], metadata: dict | None = None) -> str:
    lines = [f"# {k}={v}" for k, v in (metadata or {}).items()]
    lines.append(",".join(LOG_HEADER))
    for r in records:
        lines.append(f"{float(r.t)!r},{r.servo_id},{r.raw_position},{r.raw_load}")
    return "\n".join(lines) + "\n"
