import math

import pytest
from hypothesis import given, strategies as st

from exobench import servo
from exobench.errors import DecodeError, LogParseError
from exobench.servo import Direction, ServoFeedbackRecord


def test_load_register_split():
    assert servo.decode_load(0) == (Direction.CCW, 0.0)
    assert servo.decode_load(1023) == (Direction.CCW, pytest.approx(1.023))
    d, k = servo.decode_load(1024)
    assert d is Direction.CW and k == 0.0
    d, k = servo.decode_load(1024 + 256)
    assert d is Direction.CW and servo.load_to_torque(d, k) == pytest.approx(-0.4608)


@pytest.mark.parametrize("raw", [-1, 2048, 1.5, True])
def test_load_out_of_range(raw):
    with pytest.raises(DecodeError):
        servo.decode_load(raw)


def test_position_scale():
    assert servo.decode_position(0) == 0.0
    assert servo.decode_position(1023) == pytest.approx(296.67)
    with pytest.raises(DecodeError):
        servo.decode_position(1024)


@given(st.integers(0, 2047))
def test_load_round_trip(raw):
    d, k = servo.decode_load(raw)
    assert servo.encode_load(d, k) == raw


@given(st.integers(0, 1023))
def test_position_round_trip(raw):
    assert servo.encode_position(servo.decode_position(raw)) == raw


@given(st.floats(-1.8, 1.8, allow_nan=False))
def test_torque_round_trip_within_one_count(tau):
    d, k = servo.decode_load(servo.encode_torque(tau))
    assert abs(servo.load_to_torque(d, k) - tau) <= 0.5 * servo.LOAD_UNIT * servo.STALL_TORQUE + 1e-12


def test_zero_torque_is_ccw_zero():
    assert servo.encode_torque(0.0) == 0
    assert math.copysign(1.0, servo.load_to_torque(Direction.CW, 0.0)) == 1.0


def test_record_relative_to_neutral():
    s = servo.decode_record(ServoFeedbackRecord(0.5, 1, 803, 100), neutral_raw=512)
    assert s.angle == pytest.approx((803 - 512) * 0.29)
    assert s.torque == pytest.approx(0.18) and not s.over_range


def test_over_range_flagged(caplog):
    s = servo.decode_record(ServoFeedbackRecord(0.0, 1, 512, 1023))
    assert s.over_range and s.load_fraction > 1.0
    assert "exceeds" in caplog.text


LOG = """# session_id=s1
# trial_label=trial1
# speed_rpm=11.1
# neutral_raw=512
t,servo_id,raw_position,raw_load
0.0,1,512,0
0.01,1,520,1100
0.02,1,530,40
"""


def test_parse_and_format_round_trip():
    trial = servo.parse_trial_text(LOG)
    assert trial.metadata["speed_rpm"] == 11.1 and trial.neutral_raw == 512
    assert len(trial.records) == 3
    again = servo.parse_trial_text(servo.format_trial_log(trial.records, trial.metadata))
    assert again == trial
    samples = servo.decode_trial(trial)
    assert samples[1].direction is Direction.CW
    assert samples[2].angle == pytest.approx(18 * 0.29)


@pytest.mark.parametrize("text, line", [
    ("t,servo_id,raw_position,raw_load\n0.0,1,512\n", 2),
    ("t,servo_id,raw_position,raw_load\n0.1,1,512,0\n0.0,1,512,0\n", 3),
    ("t,servo_id,raw_position,raw_load\n0.0,1,5x2,0\n", 2),
    ("# neutral_raw=abc\nt,servo_id,raw_position,raw_load\n", 1),
    ("time,id,pos,load\n", 1),
    ("", 1),
])
def test_malformed_logs_report_the_line(text, line):
    with pytest.raises(LogParseError) as exc:
        servo.parse_trial_text(text)
    assert exc.value.line == line


def test_decode_error_carries_record_index():
    trial = servo.parse_trial_text(LOG.replace("0.02,1,530,40", "0.02,1,530,4000"))
    with pytest.raises(DecodeError) as exc:
        servo.decode_trial(trial)
    assert exc.value.index == 2
