"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run ``pytest tests/test_acceptance.py -v -s`` to see the summary lines.
"""
from __future__ import annotations

import math

import numpy as np
import pytest

from exobench import analysis, dynamics, servo
from exobench.cli import main as cli_main
from exobench.kinematics import (SweepProfile, SweepSpec, default_partition, frame_from_q,
                                 inverse_kinematics_frame, inverse_kinematics_trajectory,
                                 project_acceleration, project_velocity,
                                 solve_closure, synth_ps_trajectory)
from exobench.model import GeneralizedState, default_model
from exobench.report import build_report, published_exp, published_sim

PS = 18  # 0-based index of the pronation-supination coordinate


def verdict(criterion: int, ok: bool, detail: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}")
    assert ok, detail


@pytest.fixture(scope="module")
def chain():
    return default_model()


@pytest.fixture(scope="module")
def report():
    return build_report(published_sim(), published_exp()).data


def _pct(report, name, convention):
    for e in report["comparisons"]["percent_differences"]:
        if e["name"] == name and e["reference_convention"] == convention:
            return e["percent"]
    raise KeyError(name)


def test_criterion_01_table_aggregation(report):
    agg = report["simulated"]["aggregate"]
    ang, tq = agg["angle_range"], agg["torque_range"]
    ok = (abs(ang["mean"] - 146.84) <= 0.01 and abs(ang["sd"] - 14.32) <= 0.01
          and abs(tq["mean"] - 0.197) <= 0.01 and abs(tq["sd"] - 0.05) <= 0.01)
    verdict(1, ok, f"angle range {ang['mean']:.3f} ± {ang['sd']:.3f} deg, "
                   f"torque range {tq['mean']:.4f} ± {tq['sd']:.4f} N.m")


def test_criterion_02_interval_overlap(report):
    a = analysis.UncertaintyInterval.from_mean_sd(146.84, 14.32)
    b = analysis.UncertaintyInterval.from_mean_sd(156.26, 4.71)
    ov = analysis.interval_overlap(a, b).rounded(2)
    from_report = report["comparisons"]["interval_overlap"]["overlap_rounded"]
    ok = (ov.lo, ov.hi) == (151.55, 160.97) and from_report == [151.55, 160.97]
    verdict(2, ok, f"overlap [{ov.lo}, {ov.hi}], report {from_report}")


def test_criterion_03_percent_differences(report):
    mean_gap = _pct(report, "torque_range_mean", "simulated")
    max_gap = _pct(report, "torque_range_max_vs_average", "simulated")
    rom = _pct(report, "rom", "simulated")
    trials = [_pct(report, f"torque_range_trial{i}", "experimental") for i in (1, 2, 3)]
    ok = (abs(mean_gap - 40.0) <= 0.5 and abs(max_gap - 3.4) <= 0.1 and 6.4 <= rom <= 6.5
          and all(abs(p - ref) <= 0.5 for p, ref in zip(trials, (13, 23, 41))))
    verdict(3, ok, f"mean {mean_gap:.2f}%, max {max_gap:.2f}%, ROM {rom:.2f}%, "
                   f"trials {'/'.join(f'{p:.2f}' for p in trials)}%")


def test_criterion_04_servo_decoding():
    t256 = servo.load_to_torque(*servo.decode_load(256))
    t1024 = servo.load_to_torque(*servo.decode_load(1024))
    unit = servo.decode_position(1) - servo.decode_position(0)
    ok = (abs(t256 - 0.4608) < 1e-12 and abs(t256 - 0.45) <= 0.02 and t1024 == 0.0 and math.copysign(1, t1024) > 0
          and servo.DEG_PER_COUNT == 0.29 and abs(unit - 0.29) < 1e-12)
    verdict(4, ok, f"256 -> {t256:.4f} N.m, 1024 -> {t1024}, {servo.DEG_PER_COUNT} deg/count")


def test_criterion_05_ik_round_trip(chain):
    cycle = SweepProfile(SweepSpec()).cycle
    synth = synth_ps_trajectory(chain, SweepSpec(sample_rate=99 / cycle))
    assert len(synth.t) == 100
    part = default_partition(chain)
    sol = inverse_kinematics_trajectory(chain, synth.trajectory, partition=part)
    ind = list(part.independent)
    err = float(np.abs(sol.q[:, ind] - synth.q[:, ind]).max())
    h_max = float(sol.constraint_norm.max())

    # noisy: 100 seeded trials, one frame each at a random PS angle
    rng = np.random.default_rng(42)
    errors = []
    for seed in range(100):
        q = np.zeros(chain.n_coords)
        q[PS] = rng.uniform(-math.radians(71.05), math.radians(85.26))
        q = solve_closure(chain, q, part)
        frame = frame_from_q(chain, q, noise_sd=1e-3, rng=np.random.default_rng(seed))
        res = inverse_kinematics_frame(chain, frame, q, partition=part)
        errors.append(abs(math.degrees(res.q[PS] - q[PS])))
    mean_err = float(np.mean(errors))
    ok = err < 1e-6 and h_max <= 1e-8 and mean_err < 0.5
    verdict(5, ok, f"noise-free max error {err:.2e} rad, max |h| {h_max:.1e} m; "
                   f"1 mm noise mean PS error {mean_err:.3f} deg")


def _random_state(chain, part, rng):
    # away from the shoulder gimbal (q14 = 0) where M is singular
    while True:
        q = np.zeros(chain.n_coords)
        q[3:16] = rng.uniform(-0.6, 0.6, 13)
        q[16] = rng.uniform(-0.01, 0.01)
        q[PS] = rng.uniform(-1.2, 1.4)
        q[21:23] = rng.uniform(-0.3, 0.3, 2)
        if abs(q[13]) < 0.1:
            continue
        q = solve_closure(chain, q, part)
        qd = project_velocity(chain, q, rng.normal(0, 1.0, chain.n_coords), part)
        qdd = project_acceleration(chain, q, qd, rng.normal(0, 2.0, chain.n_coords), part)
        return GeneralizedState(0.0, q, qd, qdd)


def test_criterion_06_id_fd_consistency(chain):
    part = default_partition(chain)
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(100):
        s = _random_state(chain, part, rng)
        Q, _ = dynamics.inverse_dynamics(chain, s, partition=part)
        qdd = dynamics.forward_dynamics(chain, s.q, s.qd, Q)
        worst = max(worst, float(np.linalg.norm(qdd - s.qdd) / np.linalg.norm(s.qdd)))
    verdict(6, worst < 1e-8, f"worst relative q-double-dot error {worst:.2e} over 100 states")


def test_criterion_07_analytic_oracles():
    m, l, izz, g = 1.3, 0.4, 0.02, 9.81
    pend = dynamics.pendulum_chain(m, l, izz, g)
    rng = np.random.default_rng(3)
    worst = 0.0
    for theta in rng.uniform(-math.pi, math.pi, 20):
        q = np.array([theta])
        M = dynamics.mass_matrix(pend, q)[0, 0]
        G = dynamics.nonlinear_effects(pend, q, [0.0])[0]
        acc = dynamics.forward_dynamics(pend, q, [0.0], [0.0])[0]
        I = dynamics.pendulum_inertia(m, l, izz)
        tg = dynamics.gravity_torque(m, l, theta, g)
        worst = max(worst, abs(M - I), abs(G - tg), abs(acc + tg / I))

    q0, t_end = np.array([1.0]), 2.0
    t, q, qd = dynamics.simulate(pend, q0, [0.0], None, t_end, 1e-4, record_every=100)
    datum = dynamics.potential_energy(pend, [0.0])
    E = np.array([dynamics.kinetic_energy(pend, qi, qdi) + dynamics.potential_energy(pend, qi) - datum
                  for qi, qdi in zip(q, qd)])
    drift = float(np.abs(E - E[0]).max() / abs(E[0]) / t_end * 100.0)
    ok = worst < 1e-8 and drift < 0.1
    verdict(7, ok, f"max oracle error {worst:.1e}; energy drift {drift:.4f} %/s")


def test_criterion_08_energy_quadrature():
    t = np.linspace(0.0, 2 * math.pi, 20001)
    P = np.sin(t)[:, None]
    E = dynamics.energy(dynamics.PowerSeries(t, P, P[:, 0]))
    verdict(8, abs(E - 4.0) < 1e-4, f"E = {E:.8f} J")


def test_criterion_09_reliability_properties():
    a = np.array([0.21, 0.25, 0.19, 0.30, 0.27])
    b = np.array([0.22, 0.24, 0.20, 0.33, 0.25])
    same = analysis.reliability_alpha(a, a).alpha
    base = analysis.reliability_alpha(a, b).alpha
    moved = analysis.reliability_alpha(3.7 * a - 1.2, 3.7 * b - 1.2).alpha
    bands = analysis.band(0.93), analysis.band(0.84)
    ok = same == 1.0 and abs(moved - base) <= 1e-12 and bands == ("excellent", "good")
    verdict(9, ok, f"identical alpha {same!r}, affine delta {abs(moved - base):.1e}, bands {bands}")


def test_criterion_10_end_to_end_determinism(tmp_path):
    outputs = []
    for run in ("a", "b"):
        base = tmp_path / run
        common = ["--out", str(base)]
        assert cli_main(["synth", "--duration", "1.0", "--seed", "42", *common, "--run-name", "synth"]) == 0
        assert cli_main(["ik", str(base / "synth" / "markers.csv"), *common, "--run-name", "ik"]) == 0
        assert cli_main(["id", str(base / "ik" / "q.csv"), *common, "--run-name", "id"]) == 0
        assert cli_main(["report", str(base / "id"), "published", *common, "--run-name", "report"]) == 0
        outputs.append([(base / "report" / f).read_bytes() for f in ("report.json", "report.txt")])
    ok = outputs[0] == outputs[1]
    verdict(10, ok, f"report.json {len(outputs[0][0])} bytes, report.txt {len(outputs[0][1])} bytes, "
                    f"{'identical' if ok else 'different'}")
