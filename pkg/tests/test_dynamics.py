import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from exobench import dynamics
from exobench.errors import ConstraintViolationError, ExobenchError
from exobench.kinematics import (SweepSpec, constraint_jacobian, inverse_kinematics_trajectory,
                                 differentiate, loop_constraints, project_acceleration,
                                 project_velocity, solve_closure, synth_ps_trajectory)
from exobench.model import ExternalLoads, GeneralizedState

PS = 18


def _state(chain, part, seed):
    rng = np.random.default_rng(seed)
    q = np.zeros(23)
    q[3:16] = rng.uniform(-0.5, 0.5, 13)
    q[13] = 0.4
    q[PS] = rng.uniform(-1.0, 1.2)
    q = solve_closure(chain, q, part)
    qd = project_velocity(chain, q, rng.normal(0, 1, 23), part)
    qdd = project_acceleration(chain, q, qd, rng.normal(0, 1, 23), part)
    return GeneralizedState(0.0, q, qd, qdd)


def test_mass_matrix_symmetric_positive_definite(chain, part):
    s = _state(chain, part, 0)
    M = dynamics.mass_matrix(chain, s.q)
    assert np.array_equal(M, M.T)
    assert np.linalg.eigvalsh(M).min() > 0


def test_mass_matrix_matches_kinetic_energy_of_unit_velocities(chain, part):
    s = _state(chain, part, 1)
    M = dynamics.mass_matrix(chain, s.q)
    # column i of M is the ID of a unit acceleration without gravity or velocity
    for i in (0, 5, 15, 18, 22):
        e = np.zeros(23)
        e[i] = 1.0
        tau = dynamics._rnea(dynamics._model(chain), s.q, np.zeros(23), e, gravity=False)
        assert np.allclose(M[:, i], tau, atol=1e-12)


def test_passive_coordinates_carry_no_torque(chain, part):
    s = _state(chain, part, 2)
    Q, lam = dynamics.inverse_dynamics(chain, s, partition=part)
    assert np.all(Q[list(part.dependent)] == 0.0)
    assert lam.shape == (3,)


def test_multipliers_reproduce_open_tree_forces(chain, part):
    s = _state(chain, part, 3)
    Q, lam = dynamics.inverse_dynamics(chain, s, partition=part)
    M = dynamics.mass_matrix(chain, s.q)
    C = dynamics.nonlinear_effects(chain, s.q, s.qd)
    J = constraint_jacobian(chain, s.q)
    assert np.allclose(M @ s.qdd + C, Q + J.T @ lam, atol=1e-9)


def test_fd_returns_multipliers_consistent_with_id(chain, part):
    s = _state(chain, part, 4)
    Q, lam = dynamics.inverse_dynamics(chain, s, partition=part)
    qdd, lam_fd = dynamics.forward_dynamics_with_multipliers(chain, s.q, s.qd, Q)
    assert np.allclose(qdd, s.qdd, atol=1e-8)
    assert np.allclose(lam_fd, lam, atol=1e-7)


def test_inconsistent_states_rejected(chain, part):
    s = _state(chain, part, 5)
    bad_q = s.q.copy()
    bad_q[17] += 0.05
    with pytest.raises(ConstraintViolationError, match="closure"):
        dynamics.inverse_dynamics(chain, GeneralizedState(0.0, bad_q, s.qd, s.qdd))
    bad_qd = s.qd.copy()
    bad_qd[17] += 1.0
    with pytest.raises(ConstraintViolationError, match="velocity"):
        dynamics.forward_dynamics(chain, s.q, bad_qd, np.zeros(23))
    bad_qdd = s.qdd.copy()
    bad_qdd[19] += 1.0
    with pytest.raises(ConstraintViolationError, match="acceleration"):
        dynamics.inverse_dynamics(chain, GeneralizedState(0.0, s.q, s.qd, bad_qdd))


def test_external_load_on_the_hand(chain, part):
    """Base translations see an applied force in full, with opposite sign."""
    s = _state(chain, part, 6)
    f = np.array([0.0, -10.0, 0.0])
    Q0, _ = dynamics.inverse_dynamics(chain, s, partition=part)
    Q1, _ = dynamics.inverse_dynamics(chain, s, ExternalLoads({"hand": f}), partition=part)
    assert np.allclose((Q1 - Q0)[:3], [0.0, 10.0, 0.0], atol=1e-9)
    with pytest.raises(ExobenchError, match="unknown segment"):
        dynamics.inverse_dynamics(chain, s, ExternalLoads({"tail": f}), partition=part)


def test_mass_scaling_scales_torques(chain, part):
    s = _state(chain, part, 7)
    Q, _ = dynamics.inverse_dynamics(chain, s, partition=part)
    Q2, _ = dynamics.inverse_dynamics(chain.with_scaled_masses(2.0), s, partition=part)
    assert np.allclose(Q2, 2 * Q, rtol=1e-10, atol=1e-10)


def test_static_hold_has_no_velocity_terms(chain, part):
    s = _state(chain, part, 8)
    static = GeneralizedState(0.0, s.q)
    Q, _ = dynamics.inverse_dynamics(chain, static, partition=part)
    weightless = chain.with_gravity((0.0, 0.0, 0.0))
    Qw, _ = dynamics.inverse_dynamics(weightless, static, partition=part)
    assert np.allclose(Qw, 0.0, atol=1e-12)
    assert np.abs(Q).max() > 1.0


def test_id_series_on_a_sweep(chain, part):
    s = synth_ps_trajectory(chain, SweepSpec(duration=0.3, sample_rate=50.0))
    sol = differentiate(chain, inverse_kinematics_trajectory(chain, s.trajectory, partition=part),
                        partition=part)
    series = dynamics.inverse_dynamics_series(chain, sol, partition=part)
    assert series.Q.shape == (len(sol), 23) and series.lam.shape == (len(sol), 3)
    P = dynamics.joint_power(series, sol.qd)
    assert np.allclose(P.total, (series.Q * sol.qd).sum(axis=1))
    with pytest.raises(ValueError):
        dynamics.joint_power(series, sol.qd[:, :5])
    with pytest.raises(ValueError, match="differentiate"):
        dynamics.inverse_dynamics_series(chain, sol.__class__(sol.t, sol.q, sol.residual,
                                                              sol.constraint_norm), partition=part)


# ------------------------------------------------------------ pendulum

@settings(max_examples=40, deadline=None)
@given(st.floats(0.1, 5.0), st.floats(0.05, 1.0), st.floats(0.0, 0.1), st.floats(-math.pi, math.pi),
       st.floats(-5, 5))
def test_pendulum_closed_forms(m, l, izz, theta, omega):
    pend = dynamics.pendulum_chain(m, l, izz)
    q, qd = np.array([theta]), np.array([omega])
    I = dynamics.pendulum_inertia(m, l, izz)
    assert abs(dynamics.mass_matrix(pend, q)[0, 0] - I) < 1e-10
    # no Coriolis term for a single hinge
    assert abs(dynamics.nonlinear_effects(pend, q, qd)[0] - dynamics.gravity_torque(m, l, theta)) < 1e-10
    acc = dynamics.forward_dynamics(pend, q, qd, [0.0])[0]
    assert abs(acc + dynamics.gravity_torque(m, l, theta) / I) < 1e-9


def test_pendulum_small_angle_period():
    m, l, izz = 1.0, 0.5, 0.0
    pend = dynamics.pendulum_chain(m, l, izz)
    theta0 = 0.05
    t, q, qd = dynamics.simulate(pend, [theta0], [0.0], None, 1.5, 1e-4, record_every=10)
    period = 2 * math.pi * math.sqrt(l / 9.81)
    k = np.argmin(np.abs(t - period))
    assert abs(q[k, 0] - theta0) < 2e-4


def test_free_fall_from_rest(chain, part):
    """The floating base drops as a whole; no relative motion, the loop stays closed."""
    s = _state(chain, part, 9)
    t, q, qd = dynamics.simulate(chain, s.q, np.zeros(23), None, 0.1, 1e-3, record_every=20)
    assert len(t) == 6
    rel = np.delete(q - s.q, 1, axis=1)
    assert np.abs(rel).max() < 1e-9
    # semi-implicit Euler: y_n = -g dt^2 n (n + 1) / 2
    n = 100
    assert math.isclose(q[-1, 1] - s.q[1], -9.81 * 1e-6 * n * (n + 1) / 2, rel_tol=1e-9)
    assert max(np.abs(loop_constraints(chain, qk)).max() for qk in q) < 1e-10


def test_loop_drift_shrinks_with_the_step(chain, part):
    s = _state(chain, part, 9)
    drift = []
    for dt in (1e-3, 1e-4):
        _, q, _ = dynamics.simulate(chain, s.q, s.qd, None, 0.02, dt, record_every=int(0.02 / dt))
        drift.append(np.abs(loop_constraints(chain, q[-1])).max())
    assert drift[1] < drift[0] / 5


def test_simulate_argument_checks():
    pend = dynamics.pendulum_chain()
    with pytest.raises(ValueError):
        dynamics.simulate(pend, [0.0], [0.0], None, 1.0, 0.0)


# --------------------------------------------------------------- energy

def test_energy_absolute_and_signed():
    t = np.linspace(0, 2 * math.pi, 4001)
    P = np.stack([np.sin(t), np.ones_like(t)], axis=1)
    ps = dynamics.PowerSeries(t, P, P.sum(axis=1))
    e1 = dynamics.energy_terms(ps, coordinate=1)
    assert abs(e1.absolute - 4.0) < 1e-5 and abs(e1.signed) < 1e-12
    e2 = dynamics.energy_terms(ps, coordinate=2)
    assert math.isclose(e2.absolute, 2 * math.pi) and math.isclose(e2.signed, 2 * math.pi)
    with pytest.raises(ValueError):
        dynamics.energy_terms(dynamics.PowerSeries(t[:1], P[:1], P[:1, 0]))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=2, max_size=30))
def test_absolute_energy_bounds_signed_work(values):
    p = np.array(values)
    t = np.arange(len(p)) * 0.01
    e = dynamics.energy_terms(dynamics.PowerSeries(t, p[:, None], p))
    assert e.absolute >= abs(e.signed) - 1e-9
    assert e.absolute >= 0
