"""Constrained rigid-body dynamics on the cut-open tree.

Equations of motion with the loop cut reinstated by multipliers::

    M(q) qdd + C(q, qd) = Q + J(q)^T lambda,    J qdd + Jdot qd = 0

Inverse dynamics resolves ``lambda`` so that the dependent (passive) loop
coordinates carry no generalized force.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import kernels
from .errors import ConstraintViolationError, ExobenchError, SingularJacobianError
from .kinematics import (
    ChainModel,
    CoordinatePartition,
    IkSolution,
    _model,
    _partition,
    constraint_acc_residual,
    constraint_jacobian,
    jdot_qd,
    loop_constraints,
)
from .model import BASE, Dof, ExternalLoads, GeneralizedState, JointSpec, KinematicChain, SegmentInertia

H_TOL = 1e-8
HDD_TOL = 1e-6
KKT_MAX_COND = 1e14


@dataclass(frozen=True)
class JointTorqueSeries:
    t: np.ndarray
    Q: np.ndarray  # (n_frames, n_coords)
    lam: np.ndarray  # (n_frames, n_constraints)

    def __post_init__(self):
        if not (len(self.t) == len(self.Q) == len(self.lam)):
            raise ValueError("t, Q and lambda lengths disagree")
        if not (np.all(np.isfinite(self.Q)) and np.all(np.isfinite(self.lam))):
            raise ValueError("torque series contains non-finite values")


@dataclass(frozen=True)
class PowerSeries:
    t: np.ndarray
    P: np.ndarray  # (n_frames, n_coords)
    total: np.ndarray

    def __post_init__(self):
        if len(self.t) != len(self.P) or len(self.t) != len(self.total):
            raise ValueError("t, P and total lengths disagree")


@dataclass(frozen=True)
class EnergyResult:
    absolute: float  # integral of |P_total|, J
    signed: float  # net work, J


# ------------------------------------------------------------ helpers

def _loads_arrays(model: ChainModel, loads: ExternalLoads | None):
    f = np.zeros((model.n, 3))
    t = np.zeros((model.n, 3))
    if loads is None:
        return f, t
    for name, vec in loads.forces.items():
        f[_segment_link(model, name)] += vec
    for name, vec in loads.torques.items():
        t[_segment_link(model, name)] += vec
    return f, t


def _segment_link(model: ChainModel, name: str) -> int:
    try:
        return model.tree.segment_link[name]
    except KeyError:
        raise ExobenchError(f"external load on unknown segment {name!r}") from None


def _rnea(model: ChainModel, q, qd, qdd, loads=None, gravity=True):
    fext, text = _loads_arrays(model, loads)
    a0 = model.a0 if gravity else np.zeros(3)
    return kernels.rnea(np.asarray(q, float), np.asarray(qd, float), np.asarray(qdd, float), a0,
                        fext, text, *model.tree.topology, *model.tree.inertials)


def _vec(model, x, what):
    x = np.asarray(x, dtype=float)
    if x.shape != (model.n,):
        raise ValueError(f"{what} must have length {model.n}, got shape {x.shape}")
    return x


# ----------------------------------------------------------- operations

def mass_matrix(chain, q) -> np.ndarray:
    """Joint-space inertia of the cut-open tree (unit-acceleration columns)."""
    model = _model(chain)
    M = kernels.mass_matrix(_vec(model, q, "q"), *model.tree.topology, *model.tree.inertials)
    return 0.5 * (M + M.T)


def nonlinear_effects(chain, q, qd, loads: ExternalLoads | None = None) -> np.ndarray:
    """Gyroscopic, centrifugal, gravity and external-load terms (ID at qdd = 0)."""
    model = _model(chain)
    return _rnea(model, _vec(model, q, "q"), _vec(model, qd, "qd"), np.zeros(model.n), loads)


def _check_consistent(model: ChainModel, q, qd, qdd=None):
    if not model.has_loop:
        return
    h = np.abs(loop_constraints(model, q)).max()
    if h > H_TOL:
        raise ConstraintViolationError(f"state violates loop closure: |h| = {h:.3e} m > {H_TOL:g}")
    hd = np.abs(constraint_jacobian(model, q) @ qd).max()
    if hd > H_TOL:
        raise ConstraintViolationError(f"velocity violates loop closure: |J qd| = {hd:.3e} > {H_TOL:g}")
    if qdd is not None:
        hdd = np.abs(constraint_acc_residual(model, q, qd, qdd)).max()
        if hdd > HDD_TOL:
            raise ConstraintViolationError(
                f"acceleration violates loop closure: |hdd| = {hdd:.3e} > {HDD_TOL:g}")


def inverse_dynamics(chain, state: GeneralizedState, loads: ExternalLoads | None = None, *,
                     partition: CoordinatePartition | None = None,
                     check: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Actuation ``Q`` and cut multipliers ``lambda`` that reproduce ``state``.

    Dependent loop coordinates are passive: ``lambda`` is chosen so that
    their entries of ``Q`` vanish.
    """
    model = _model(chain)
    if state.qd is None or state.qdd is None:
        raise ValueError("inverse dynamics needs qd and qdd")
    q, qd, qdd = (_vec(model, x, w) for x, w in ((state.q, "q"), (state.qd, "qd"), (state.qdd, "qdd")))
    if check:
        _check_consistent(model, q, qd, qdd)
    Q_open = _rnea(model, q, qd, qdd, loads)
    if not model.has_loop:
        return Q_open, np.zeros(0)
    part = _partition(model, partition)
    dep = list(part.dependent)
    J = constraint_jacobian(model, q)
    Jd = J[:, dep]
    if np.linalg.cond(Jd) > 1e12:
        raise SingularJacobianError("dependent-coordinate Jacobian is singular")
    lam = np.linalg.solve(Jd.T, Q_open[dep])
    Q = Q_open - J.T @ lam
    Q[dep] = 0.0  # exact zero rather than round-off
    return Q, lam


def inverse_dynamics_series(chain, solution: IkSolution, loads: ExternalLoads | None = None, *,
                            partition: CoordinatePartition | None = None,
                            check: bool = True) -> JointTorqueSeries:
    if solution.qd is None or solution.qdd is None:
        raise ValueError("solution has no velocities/accelerations; differentiate it first")
    model = _model(chain)
    part = _partition(model, partition)
    Qs, lams = [], []
    for k in range(len(solution)):
        st = GeneralizedState(float(solution.t[k]), solution.q[k], solution.qd[k], solution.qdd[k])
        try:
            Q, lam = inverse_dynamics(model, st, loads, partition=part, check=check)
        except ExobenchError as exc:
            raise type(exc)(f"frame {k}: {exc}") from exc
        Qs.append(Q)
        lams.append(lam)
    n_c = 3 if model.has_loop else 0
    return JointTorqueSeries(np.asarray(solution.t, float), np.array(Qs),
                             np.array(lams).reshape(len(Qs), n_c))


def _kkt(model: ChainModel, q, qd, Q, loads, rhs_extra=None):
    M = mass_matrix(model, q)
    C = nonlinear_effects(model, q, qd, loads)
    if not model.has_loop:
        if np.linalg.cond(M) > KKT_MAX_COND:
            raise SingularJacobianError("mass matrix is singular")
        return np.linalg.solve(M, Q - C), np.zeros(0)
    J = constraint_jacobian(model, q)
    n, m = model.n, J.shape[0]
    K = np.zeros((n + m, n + m))
    K[:n, :n] = M
    K[:n, n:] = -J.T
    K[n:, :n] = J
    gamma = -jdot_qd(model, q, qd)
    if rhs_extra is not None:
        gamma = gamma + rhs_extra
    if np.linalg.cond(K) > KKT_MAX_COND:
        raise SingularJacobianError("KKT matrix is singular (rank-deficient M or J)")
    sol = np.linalg.solve(K, np.concatenate([Q - C, gamma]))
    return sol[:n], sol[n:]


def forward_dynamics(chain, q, qd, Q, loads: ExternalLoads | None = None, *,
                     check: bool = True) -> np.ndarray:
    """Constraint-consistent accelerations from generalized forces ``Q``."""
    model = _model(chain)
    q, qd, Q = _vec(model, q, "q"), _vec(model, qd, "qd"), _vec(model, Q, "Q")
    if check:
        _check_consistent(model, q, qd)
    return _kkt(model, q, qd, Q, loads)[0]


def forward_dynamics_with_multipliers(chain, q, qd, Q, loads=None):
    model = _model(chain)
    return _kkt(model, _vec(model, q, "q"), _vec(model, qd, "qd"), _vec(model, Q, "Q"), loads)


def simulate(chain, q0, qd0, torque: Callable[[float, np.ndarray, np.ndarray], np.ndarray] | None,
             t_end: float, dt: float, loads: ExternalLoads | None = None, *,
             alpha: float = 10.0, beta: float = 10.0, record_every: int = 1):
    """Semi-implicit Euler with Baumgarte stabilization of the loop constraint.

    Returns ``(t, q, qd)`` arrays sampled every ``record_every`` steps.
    """
    model = _model(chain)
    if dt <= 0 or t_end <= 0:
        raise ValueError("dt and t_end must be positive")
    q = _vec(model, q0, "q0").copy()
    qd = _vec(model, qd0, "qd0").copy()
    n_steps = int(round(t_end / dt))
    zero = np.zeros(model.n)
    ts, qs, qds = [0.0], [q.copy()], [qd.copy()]
    for k in range(n_steps):
        t = k * dt
        Q = zero if torque is None else np.asarray(torque(t, q, qd), dtype=float)
        extra = None
        if model.has_loop:
            h = loop_constraints(model, q)
            hd = constraint_jacobian(model, q) @ qd
            extra = -2.0 * alpha * hd - beta**2 * h
        qdd, _ = _kkt(model, q, qd, Q, loads, extra)
        qd = qd + dt * qdd
        q = q + dt * qd
        if (k + 1) % record_every == 0:
            ts.append((k + 1) * dt)
            qs.append(q.copy())
            qds.append(qd.copy())
    return np.array(ts), np.array(qs), np.array(qds)


def kinetic_energy(chain, q, qd) -> float:
    qd = np.asarray(qd, dtype=float)
    return 0.5 * float(qd @ mass_matrix(chain, q) @ qd)


def potential_energy(chain, q) -> float:
    """Gravitational potential relative to the world origin."""
    model = _model(chain)
    R, P = model.fk(_vec(model, q, "q"))
    mass, com, _ = model.tree.inertials
    x = P + np.einsum("kij,kj->ki", R, com)
    g = -model.a0
    return float(-(mass * (x @ g)).sum())


def joint_power(series: JointTorqueSeries, qd) -> PowerSeries:
    """Per-coordinate power Q_i * qd_i and its sum."""
    qd = np.asarray(qd, dtype=float)
    if qd.shape != series.Q.shape:
        raise ValueError(f"velocity series shape {qd.shape} does not match torque series {series.Q.shape}")
    P = series.Q * qd
    return PowerSeries(series.t, P, P.sum(axis=1))


def energy(power: PowerSeries) -> float:
    """Trapezoidal integral of |P_total|."""
    return energy_terms(power).absolute


def energy_terms(power: PowerSeries, coordinate: int | None = None) -> EnergyResult:
    """Absolute-value energy and signed net work; ``coordinate`` is 1-based."""
    t = np.asarray(power.t, dtype=float)
    if len(t) < 2:
        raise ValueError("energy needs at least 2 samples")
    p = power.total if coordinate is None else power.P[:, coordinate - 1]
    return EnergyResult(float(np.trapezoid(np.abs(p), t)), float(np.trapezoid(p, t)))


# --------------------------------------------------------- test fixture

def pendulum_chain(mass: float = 1.0, length: float = 0.5, izz: float = 0.01,
                   gravity: float = 9.81) -> KinematicChain:
    """Single revolute pendulum about world Z; hangs along -Y at q = 0."""
    seg = SegmentInertia("bob", mass, (0.0, -length, 0.0),
                         ((izz, 0.0, 0.0), (0.0, izz, 0.0), (0.0, 0.0, izz)), "assumed")
    joint = JointSpec("hinge", BASE, "bob", (Dof(1, "Z", "rotation", "swing", None),),
                      (0.0, 0.0, 0.0), "assumed")
    return KinematicChain(segments=(seg,), joints=(joint,), loop_cuts=(), markers=(),
                          gravity=(0.0, -gravity, 0.0), n_coords=1, name="pendulum",
                          provenance="assumed")


def pendulum_inertia(mass: float = 1.0, length: float = 0.5, izz: float = 0.01) -> float:
    return izz + mass * length**2


def gravity_torque(mass: float, length: float, theta: float, g: float = 9.81) -> float:
    return mass * g * length * math.sin(theta)
