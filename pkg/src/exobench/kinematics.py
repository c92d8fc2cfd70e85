"""Forward/inverse kinematics of the closed-loop chain.

Loop closure uses coordinate partitioning: three dependent coordinates are
re-solved by Newton-Raphson whenever the independent ones change, so every
configuration handed out by this module satisfies the cut constraint.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations
from typing import Mapping, Sequence

import numpy as np

from . import kernels
from ._tree import ROTATION, Tree, build_tree
from .errors import (
    ClosureError,
    DifferentiationError,
    ExobenchError,
    IkError,
    SingularJacobianError,
)
from .model import GeneralizedState, KinematicChain, coordinate_index

log = logging.getLogger(__name__)

CLOSURE_TOL = 1e-10
CLOSURE_MAX_ITER = 50
CLOSURE_MAX_COND = 1e12
IK_MAX_ITER = 200
IK_STEP_TOL = 1e-8
IK_REL_TOL = 1e-10
LM_MU0 = 1e-3
SVD_RCOND = 1e-7


# ------------------------------------------------------------------ types

@dataclass(frozen=True)
class BodyPose:
    segment: str
    rotation: np.ndarray  # world <- local
    position: np.ndarray


@dataclass(frozen=True)
class MarkerFrame:
    t: float
    positions: Mapping[str, np.ndarray]

    def __post_init__(self):
        clean = {}
        for name, pos in self.positions.items():
            p = np.asarray(pos, dtype=float)
            if p.shape != (3,) or not np.all(np.isfinite(p)):
                raise ValueError(f"marker {name!r} at t={self.t}: position must be a finite 3-vector")
            clean[name] = p
        object.__setattr__(self, "positions", clean)


@dataclass(frozen=True)
class MarkerTrajectory:
    frames: tuple
    sample_rate: float

    def __post_init__(self):
        frames = tuple(self.frames)
        object.__setattr__(self, "frames", frames)
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        t = np.array([f.t for f in frames])
        if len(t) > 1:
            dt = np.diff(t)
            if np.any(dt <= 0):
                raise ValueError("frame times must be strictly increasing")
            if np.abs(dt - 1.0 / self.sample_rate).max() > 1e-9:
                raise ValueError("frame times are not uniformly spaced at the sample rate")

    @property
    def times(self) -> np.ndarray:
        return np.array([f.t for f in self.frames])

    def __len__(self):
        return len(self.frames)


@dataclass(frozen=True)
class CoordinatePartition:
    """0-based independent/dependent coordinate indices."""

    independent: tuple
    dependent: tuple

    def __post_init__(self):
        ind, dep = set(self.independent), set(self.dependent)
        if ind & dep:
            raise ValueError("independent and dependent sets overlap")
        object.__setattr__(self, "independent", tuple(sorted(ind)))
        object.__setattr__(self, "dependent", tuple(sorted(dep)))


@dataclass(frozen=True)
class IkFrameResult:
    q: np.ndarray
    residual: float  # f(q), m^2
    constraint_norm: float  # max |h|, m
    iterations: int
    history: tuple = ()  # f at each accepted iterate, starting point first


@dataclass
class IkSolution:
    t: np.ndarray
    q: np.ndarray  # (n_frames, n_coords)
    residual: np.ndarray
    constraint_norm: np.ndarray
    qd: np.ndarray | None = None
    qdd: np.ndarray | None = None
    failed_frames: list = field(default_factory=list)
    missing_markers: dict = field(default_factory=dict)  # frame -> list of names

    @property
    def states(self) -> list[GeneralizedState]:
        out = []
        for k, t in enumerate(self.t):
            qd = None if self.qd is None else self.qd[k]
            qdd = None if self.qdd is None else self.qdd[k]
            out.append(GeneralizedState(float(t), self.q[k], qd, qdd))
        return out

    def __len__(self):
        return len(self.t)


# ------------------------------------------------------- compiled chain

class ChainModel:
    """A chain compiled into kernel arrays, marker tables and cut anchors."""

    def __init__(self, chain: KinematicChain):
        self.chain = chain
        self.tree: Tree = build_tree(chain)
        self.n = chain.n_coords
        self.marker_names = [m.name for m in chain.markers]
        self.marker_link = np.array([self.tree.segment_link[m.segment] for m in chain.markers],
                                    dtype=np.int64)
        self.marker_local = np.array([m.local_position for m in chain.markers], dtype=float).reshape(-1, 3)
        self.marker_segment = [m.segment for m in chain.markers]
        if chain.loop_cuts:
            cut = chain.loop_cuts[0]
            self.cut_links = np.array([self.tree.segment_link[cut.body_a],
                                       self.tree.segment_link[cut.body_b]], dtype=np.int64)
            self.cut_local = np.array([cut.anchor_a, cut.anchor_b], dtype=float)
        else:
            self.cut_links = np.zeros(0, dtype=np.int64)
            self.cut_local = np.zeros((0, 3))
        self.a0 = -np.asarray(chain.gravity, dtype=float)
        self.gimbal_triples = self._find_gimbal_triples()
        lim = [chain.dof(i + 1).limits or (-math.inf, math.inf) for i in range(self.n)]
        self.lower = np.array([lo for lo, _ in lim])
        self.upper = np.array([hi for _, hi in lim])
        self.rot_mask = self.tree.kind == ROTATION
        self._axes = self.tree.axis

    def _find_gimbal_triples(self):
        """Coordinate triples (a, b, c): rotations about axis k, then j != k, then k again,
        all through one point. At sin(q_b) = 0 only q_a + q_c (or q_a - q_c) is defined."""
        t = self.tree
        out = []
        for c in range(self.n):
            b = t.parent[c]
            a = t.parent[b] if b >= 0 else -1
            if a < 0 or not (t.kind[a] == t.kind[b] == t.kind[c] == ROTATION):
                continue
            if t.axis[a] == t.axis[c] != t.axis[b] and not t.offset[b].any() and not t.offset[c].any():
                out.append((int(a), int(b), int(c)))
        return out

    @property
    def has_loop(self) -> bool:
        return len(self.cut_links) == 2

    def fk(self, q):
        return kernels.fk(np.asarray(q, dtype=float), *self.tree.topology)

    def world_axes(self, R):
        return R[np.arange(self.n), :, self._axes]

    def points(self, R, P, links, local):
        return P[links] + np.einsum("kij,kj->ki", R[links], local)

    def point_jacobians(self, R, P, links, points):
        """(K, 3, n) Jacobians of world points rigidly attached to ``links``."""
        Z = self.world_axes(R)
        rel = points[:, None, :] - P[None, :, :]
        cols = np.where(self.rot_mask[None, :, None], np.cross(Z[None, :, :], rel),
                        np.broadcast_to(Z, rel.shape))
        cols = cols * self.tree.ancestors[links][:, :, None]
        return cols.transpose(0, 2, 1)

    def constraint(self, R, P):
        x = self.points(R, P, self.cut_links, self.cut_local)
        return x[0] - x[1], x

    def constraint_and_jacobian(self, q):
        R, P = self.fk(q)
        h, x = self.constraint(R, P)
        Jp = self.point_jacobians(R, P, self.cut_links, x)
        return h, Jp[0] - Jp[1]

    def point_accelerations(self, q, qd, qdd, links, local, a0=None):
        a0 = np.zeros(3) if a0 is None else a0
        R, P, W, V, DW, A = kernels.sweep(np.asarray(q, float), np.asarray(qd, float),
                                          np.asarray(qdd, float), a0, *self.tree.topology)
        r = np.einsum("kij,kj->ki", R[links], local)
        w, dw = W[links], DW[links]
        return A[links] + np.cross(dw, r) + np.cross(w, np.cross(w, r))


@lru_cache(maxsize=16)
def compile_chain(chain: KinematicChain) -> ChainModel:
    return ChainModel(chain)


def _model(chain) -> ChainModel:
    return chain if isinstance(chain, ChainModel) else compile_chain(chain)


def _check_q(model: ChainModel, q, what="q") -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape != (model.n,):
        raise ValueError(f"{what} must have length {model.n}, got shape {q.shape}")
    return q


# ------------------------------------------------------ forward kinematics

def forward_kinematics(chain, q) -> tuple[list[BodyPose], dict[str, np.ndarray]]:
    """Segment poses and world marker positions at configuration ``q``."""
    model = _model(chain)
    q = _check_q(model, q)
    R, P = model.fk(q)
    poses = [
        BodyPose(seg.name, R[model.tree.segment_link[seg.name]].copy(),
                 P[model.tree.segment_link[seg.name]].copy())
        for seg in model.chain.segments
    ]
    X = model.points(R, P, model.marker_link, model.marker_local)
    return poses, dict(zip(model.marker_names, X))


def marker_array(chain, q) -> np.ndarray:
    """World marker positions as an (n_markers, 3) array in config order."""
    model = _model(chain)
    R, P = model.fk(_check_q(model, q))
    return model.points(R, P, model.marker_link, model.marker_local)


# ---------------------------------------------------------- loop closure

def loop_constraints(chain, q) -> np.ndarray:
    """h(q): radius-side cut anchor minus humerus-side anchor (world, m)."""
    model = _model(chain)
    if not model.has_loop:
        return np.zeros(0)
    R, P = model.fk(_check_q(model, q))
    return model.constraint(R, P)[0]


def constraint_jacobian(chain, q) -> np.ndarray:
    """Analytic 3 x n Jacobian of :func:`loop_constraints`."""
    model = _model(chain)
    if not model.has_loop:
        return np.zeros((0, model.n))
    return model.constraint_and_jacobian(_check_q(model, q))[1]


def jdot_qd(chain, q, qd) -> np.ndarray:
    """J-dot times q-dot, i.e. the constraint acceleration at zero q-double-dot."""
    return constraint_acc_residual(chain, q, qd, np.zeros_like(np.asarray(q, float)))


def constraint_acc_residual(chain, q, qd, qdd) -> np.ndarray:
    """Second time derivative of h: J(q) qdd + Jdot(q, qd) qd."""
    model = _model(chain)
    if not model.has_loop:
        return np.zeros(0)
    acc = model.point_accelerations(_check_q(model, q), _check_q(model, qd, "qd"),
                                    _check_q(model, qdd, "qdd"), model.cut_links, model.cut_local)
    return acc[0] - acc[1]


def default_partition(chain) -> CoordinatePartition:
    """Pick the 3 loop coordinates with the best-conditioned Jacobian block at q = 0."""
    model = _model(chain)
    n = model.n
    if not model.has_loop:
        return CoordinatePartition(tuple(range(n)), ())
    cut = model.chain.loop_cuts[0]
    J = constraint_jacobian(model, np.zeros(n))
    best, best_cond = None, math.inf
    for combo in combinations(cut.candidate_dependents, cut.n_constraints):
        cols = [c - 1 for c in combo]
        cond = np.linalg.cond(J[:, cols])
        if cond < best_cond:
            best, best_cond = cols, cond
    if best is None or not math.isfinite(best_cond) or best_cond > CLOSURE_MAX_COND:
        raise SingularJacobianError("no well-conditioned set of dependent coordinates at q = 0")
    dep = tuple(best)
    return CoordinatePartition(tuple(i for i in range(n) if i not in dep), dep)


@lru_cache(maxsize=16)
def _cached_partition(chain: KinematicChain) -> CoordinatePartition:
    return default_partition(chain)


def _partition(model: ChainModel, partition):
    return partition if partition is not None else _cached_partition(model.chain)


def _close(model: ChainModel, q, partition, tol=CLOSURE_TOL, max_iter=CLOSURE_MAX_ITER,
           polish=False):
    """Newton on the dependents. ``polish`` keeps iterating past ``tol`` while |h| still drops."""
    q = np.array(q, dtype=float)
    if not model.has_loop:
        return q, 0
    if not np.all(np.isfinite(q)):
        raise ClosureError("non-finite configuration")
    dep = list(partition.dependent)
    for it in range(max_iter + 1):
        h, J = model.constraint_and_jacobian(q)
        err = np.abs(h).max()
        if err <= tol:
            if polish:
                q = _polish(model, q, dep, err, J, h)
            return _wrap_into_limits(model, q, dep), it
        if it == max_iter:
            break
        Jd = J[:, dep]
        if np.linalg.cond(Jd) > CLOSURE_MAX_COND:
            raise SingularJacobianError(f"dependent-coordinate Jacobian is singular (iteration {it})")
        q[dep] -= np.linalg.solve(Jd, h)
        if not np.all(np.isfinite(q)):
            break
    raise ClosureError(f"loop closure did not converge in {max_iter} iterations "
                       f"(|h| = {np.abs(h).max():.3e} m)")


def _polish(model, q, dep, err, J, h, max_steps=4):
    for _ in range(max_steps):
        if err == 0.0:
            break
        q_new = q.copy()
        q_new[dep] -= np.linalg.solve(J[:, dep], h)
        h_new, J_new = model.constraint_and_jacobian(q_new)
        err_new = np.abs(h_new).max()
        if err_new >= err:
            break
        q, h, J, err = q_new, h_new, J_new, err_new
    return q


def solve_closure(chain, q_guess, partition: CoordinatePartition | None = None,
                  tol: float = CLOSURE_TOL, max_iter: int = CLOSURE_MAX_ITER) -> np.ndarray:
    """Newton-Raphson on the dependent coordinates; independents are returned unchanged."""
    model = _model(chain)
    q = _check_q(model, q_guess, "q_guess")
    return _close(model, q, _partition(model, partition), tol, max_iter)[0]


def project_velocity(chain, q, qd, partition=None) -> np.ndarray:
    """Replace dependent velocities so that J qd = 0."""
    model = _model(chain)
    part = _partition(model, partition)
    qd = np.array(qd, dtype=float)
    if not model.has_loop:
        return qd
    dep, ind = list(part.dependent), list(part.independent)
    J = constraint_jacobian(model, q)
    qd[dep] = -np.linalg.solve(J[:, dep], J[:, ind] @ qd[ind])
    return qd


def project_acceleration(chain, q, qd, qdd, partition=None) -> np.ndarray:
    """Replace dependent accelerations so that J qdd + Jdot qd = 0."""
    model = _model(chain)
    part = _partition(model, partition)
    qdd = np.array(qdd, dtype=float)
    if not model.has_loop:
        return qdd
    dep, ind = list(part.dependent), list(part.independent)
    J = constraint_jacobian(model, q)
    bias = jdot_qd(model, q, qd)
    qdd[dep] = -np.linalg.solve(J[:, dep], J[:, ind] @ qdd[ind] + bias)
    return qdd


# ------------------------------------------------------ inverse kinematics

def _frame_targets(model: ChainModel, frame: MarkerFrame):
    present = [i for i, name in enumerate(model.marker_names) if name in frame.positions]
    segments = {model.marker_segment[i] for i in present}
    if len(present) < 4 or len(segments) < 2:
        raise IkError(f"too few markers: {len(present)} present on {len(segments)} segment(s); "
                      "need >= 4 spanning >= 2 segments")
    idx = np.array(present, dtype=np.int64)
    target = np.array([frame.positions[model.marker_names[i]] for i in present])
    return idx, target


def _ik_eval(model, q, idx, target, part):
    """Residual vector and its reduced Jacobian w.r.t. the independents."""
    R, P = model.fk(q)
    links, local = model.marker_link[idx], model.marker_local[idx]
    X = model.points(R, P, links, local)
    r = (X - target).ravel()
    Jm = model.point_jacobians(R, P, links, X).reshape(-1, model.n)
    ind = list(part.independent)
    if model.has_loop and part.dependent:
        dep = list(part.dependent)
        h, Jh = model.constraint(R, P)[0], None
        Jp = model.point_jacobians(R, P, model.cut_links, model.points(R, P, model.cut_links, model.cut_local))
        Jh = Jp[0] - Jp[1]
        # dq_dep/dq_ind = -Jh_dep^-1 Jh_ind
        S = -np.linalg.solve(Jh[:, dep], Jh[:, ind])
        Jr = Jm[:, ind] + Jm[:, dep] @ S
    else:
        Jr = Jm[:, ind]
    return r, Jr


def _ik_residual(model, q, idx, target):
    R, P = model.fk(q)
    X = model.points(R, P, model.marker_link[idx], model.marker_local[idx])
    return (X - target).ravel()


GIMBAL_TOL = 1e-7


def _canonical_gimbal(model: ChainModel, q, q_ref, independent):
    """Resolve gimbal-lock ambiguities by keeping the reference split."""
    ind = set(independent)
    for a, b, c in model.gimbal_triples:
        if a not in ind or c not in ind or abs(math.sin(q[b])) > GIMBAL_TOL:
            continue
        if math.cos(q[b]) > 0:
            total = q[a] + q[c]
            q[a] = q_ref[a]
            q[c] = total - q_ref[a]
        else:
            diff = q[a] - q[c]
            q[a] = q_ref[a]
            q[c] = q_ref[a] - diff
    return q


def _wrap_into_limits(model: ChainModel, q, coords=None):
    """Shift rotation angles by 2*pi when that brings them inside their limits."""
    for i in np.flatnonzero(model.rot_mask) if coords is None else coords:
        if not model.rot_mask[i]:
            continue
        if q[i] < model.lower[i] or q[i] > model.upper[i]:
            k = np.round(-q[i] / (2 * math.pi))
            cand = q[i] + 2 * math.pi * k
            if model.lower[i] <= cand <= model.upper[i]:
                q[i] = cand
    return q


def _lm_step(Jr, r, mu):
    """Damped step (Jr^T Jr + mu I)^-1 (-Jr^T r) computed through the SVD.

    Directions with a numerically zero singular value (a gimbal pair such
    as two parallel axes through one point) get no update at all, so
    rounding noise cannot accumulate along them.
    """
    U, s, Vt = np.linalg.svd(Jr, full_matrices=False)
    keep = s > SVD_RCOND * s[0]
    coef = np.zeros_like(s)
    coef[keep] = s[keep] / (s[keep] ** 2 + mu)
    return -(Vt.T * coef) @ (U.T @ r)


def inverse_kinematics_frame(chain, frame: MarkerFrame, q_init,
                             partition: CoordinatePartition | None = None,
                             max_iter: int = IK_MAX_ITER) -> IkFrameResult:
    """Damped least-squares fit of model markers to one measured frame."""
    model = _model(chain)
    part = _partition(model, partition)
    idx, target = _frame_targets(model, frame)
    q, _ = _close(model, _check_q(model, q_init, "q_init"), part, polish=True)
    q_start = q.copy()
    ind = list(part.independent)

    r, Jr = _ik_eval(model, q, idx, target, part)
    f = float(r @ r)
    history = [f]
    mu = LM_MU0
    for it in range(1, max_iter + 1):
        step = _lm_step(Jr, r, mu)
        small = np.linalg.norm(step) < IK_STEP_TOL
        if not np.any(step):
            break
        q_try = q.copy()
        q_try[ind] += step
        try:
            q_try, _ = _close(model, q_try, part, polish=True)
        except ClosureError:
            if small:
                break
            mu *= 10.0
            continue
        r_try = _ik_residual(model, q_try, idx, target)
        f_try = float(r_try @ r_try)
        if f_try < f:
            rel = (f - f_try) / max(f, 1e-300)
            q, f = q_try, f_try
            history.append(f)
            mu = max(mu / 10.0, 1e-15)
            if small or rel < IK_REL_TOL:
                break  # the sub-tolerance step is still taken when it helps
            r, Jr = _ik_eval(model, q, idx, target, part)
        else:
            if small:
                break
            mu *= 10.0
            if mu > 1e16:
                break  # no descent direction left at working precision
    else:
        raise IkError(f"inverse kinematics did not converge in {max_iter} iterations")
    q = _wrap_into_limits(model, _canonical_gimbal(model, q, q_start, ind))
    h = loop_constraints(model, q)
    return IkFrameResult(q, f, float(np.abs(h).max()) if h.size else 0.0, it, tuple(history))


def inverse_kinematics_trajectory(chain, traj: MarkerTrajectory, *,
                                  partition: CoordinatePartition | None = None,
                                  policy: str = "abort", warm_start: bool = True,
                                  workers: int = 1, q_init=None) -> IkSolution:
    """Frame-by-frame IK. Warm start chains each frame from the previous solution.

    ``policy="abort"`` raises on the first failing frame; ``"interpolate"``
    records the failure and fills the frame by linear interpolation of the
    independent coordinates, re-closing the loop afterwards.
    """
    if policy not in ("abort", "interpolate"):
        raise ValueError(f"unknown policy {policy!r}")
    model = _model(chain)
    part = _partition(model, partition)
    nf = len(traj)
    if nf == 0:
        raise IkError("marker trajectory is empty")
    q0 = np.zeros(model.n) if q_init is None else _check_q(model, q_init, "q_init")

    Q = np.full((nf, model.n), np.nan)
    res = np.full(nf, np.nan)
    cnorm = np.full(nf, np.nan)
    failed: list[int] = []
    missing = {}
    for k, frame in enumerate(traj.frames):
        gone = [m for m in model.marker_names if m not in frame.positions]
        if gone:
            missing[k] = gone

    def solve(k, init):
        return inverse_kinematics_frame(model, traj.frames[k], init, part)

    def record(k, out):
        Q[k], res[k], cnorm[k] = out.q, out.residual, out.constraint_norm

    if warm_start:
        init = q0
        for k in range(nf):
            try:
                out = solve(k, init)
            except ExobenchError as exc:
                if policy == "abort":
                    raise IkError(str(exc), frame=k) from exc
                log.warning("frame %d failed: %s", k, exc)
                failed.append(k)
                continue
            record(k, out)
            init = out.q
    else:
        with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
            futures = [pool.submit(solve, k, q0) for k in range(nf)]
            for k, fut in enumerate(futures):
                try:
                    record(k, fut.result())
                except ExobenchError as exc:
                    if policy == "abort":
                        raise IkError(str(exc), frame=k) from exc
                    failed.append(k)

    if failed:
        good = [k for k in range(nf) if k not in failed]
        if not good:
            raise IkError("every frame failed")
        t = traj.times
        ind = list(part.independent)
        for k in failed:
            guess = np.zeros(model.n)
            for j in ind:
                guess[j] = np.interp(t[k], t[good], Q[good, j])
            for j in part.dependent:
                guess[j] = np.interp(t[k], t[good], Q[good, j])
            q, _ = _close(model, guess, part)
            Q[k] = q
            try:
                r = _ik_residual(model, q, *_frame_targets(model, traj.frames[k]))
                res[k] = float(r @ r)
            except IkError:
                res[k] = math.nan  # too few markers to score the fill
            cnorm[k] = float(np.abs(loop_constraints(model, q)).max())
    return IkSolution(traj.times, Q, res, cnorm, failed_frames=failed, missing_markers=missing)


# --------------------------------------------------------- differentiation

def moving_average(x: np.ndarray, window: int) -> np.ndarray:
    """Centered moving average along axis 0; the window shrinks at the ends."""
    if window is None or window <= 1:
        return np.array(x, dtype=float)
    if window % 2 == 0:
        raise ValueError("smoothing window must be odd")
    half = window // 2
    x = np.asarray(x, dtype=float)
    n = len(x)
    c = np.concatenate([np.zeros((1,) + x.shape[1:]), np.cumsum(x, axis=0)])
    out = np.empty_like(x, dtype=float)
    for k in range(n):
        lo, hi = max(0, k - half), min(n, k + half + 1)
        # symmetric shrink keeps the filter centered
        w = min(k - lo, hi - 1 - k)
        lo, hi = k - w, k + w + 1
        out[k] = (c[hi] - c[lo]) / (hi - lo)
    return out


def finite_differences(q: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Central differences inside, second-order one-sided at the ends."""
    q = np.asarray(q, dtype=float)
    n = len(q)
    if n < 3:
        raise DifferentiationError(f"need at least 3 frames to differentiate, got {n}")
    qd = np.gradient(q, dt, axis=0, edge_order=2)
    qdd = np.empty_like(q)
    qdd[1:-1] = (q[2:] - 2.0 * q[1:-1] + q[:-2]) / dt**2
    if n >= 4:
        qdd[0] = (2.0 * q[0] - 5.0 * q[1] + 4.0 * q[2] - q[3]) / dt**2
        qdd[-1] = (2.0 * q[-1] - 5.0 * q[-2] + 4.0 * q[-3] - q[-4]) / dt**2
    else:
        qdd[0] = qdd[-1] = qdd[1]
    return qd, qdd


def differentiate(chain, solution: IkSolution, sample_rate: float | None = None, *,
                  smoothing_window: int | None = None,
                  partition: CoordinatePartition | None = None,
                  project: bool = True) -> IkSolution:
    """Fill qd/qdd by finite differences, then make them constraint-consistent."""
    model = _model(chain)
    part = _partition(model, partition)
    t = np.asarray(solution.t, dtype=float)
    if len(t) < 3:
        raise DifferentiationError(f"need at least 3 frames to differentiate, got {len(t)}")
    steps = np.diff(t)
    dt = 1.0 / sample_rate if sample_rate else float(steps.mean())
    if np.abs(steps - dt).max() > 1e-9:
        raise DifferentiationError("frames are not uniformly spaced")

    q = np.array(solution.q, dtype=float)
    if smoothing_window and smoothing_window > 1:
        q = moving_average(q, smoothing_window)
        q = np.array([_close(model, qk, part)[0] for qk in q])
    qd, qdd = finite_differences(q, dt)
    if project and model.has_loop:
        for k in range(len(q)):
            qd[k] = project_velocity(model, q[k], qd[k], part)
            qdd[k] = project_acceleration(model, q[k], qd[k], qdd[k], part)
    cnorm = np.array([np.abs(loop_constraints(model, qk)).max() if model.has_loop else 0.0 for qk in q])
    return IkSolution(t, q, np.array(solution.residual, dtype=float), cnorm, qd, qdd,
                      list(solution.failed_frames), dict(solution.missing_markers))


# ------------------------------------------------------ synthetic sweeps

@dataclass(frozen=True)
class SweepSpec:
    amplitude_pron: float = 71.05  # deg, reached at q19 = -amplitude_pron
    amplitude_sup: float = 85.26  # deg, reached at q19 = +amplitude_sup
    speed: float = 11.1  # RPM, plateau speed of the sweep
    duration: float | None = None  # s; None = one full cycle
    sample_rate: float = 100.0  # Hz
    noise_sd: float = 0.0  # m, isotropic marker noise
    ramp_time: float = 0.25  # s, cosine velocity ramp
    dwell: float = 0.1  # s, hold at each waypoint
    seed: int = 42

    @property
    def peak_speed(self) -> float:
        """deg/s; 1 RPM = 6 deg/s."""
        return self.speed * 6.0


class SweepProfile:
    """Cosine-ramped constant-speed moves through 0 -> -pron -> +sup -> 0 (rad)."""

    def __init__(self, spec: SweepSpec):
        self.spec = spec
        v = math.radians(spec.peak_speed)
        waypoints = [0.0, -math.radians(spec.amplitude_pron), math.radians(spec.amplitude_sup), 0.0]
        self.segments = []  # (t_start, q_start, distance(signed), peak speed, ramp)
        t = spec.dwell
        for a, b in zip(waypoints[:-1], waypoints[1:]):
            d = b - a
            tr = spec.ramp_time
            if abs(d) < v * tr:  # too short to reach the plateau: shrink the ramp
                tr = abs(d) / v
            dur = abs(d) / v + tr if d != 0 else 0.0
            self.segments.append((t, a, d, v, tr, dur))
            t += dur + spec.dwell
        self.cycle = t

    @staticmethod
    def _move(tau, d, v, tr, dur):
        """Position/velocity/acceleration (unsigned) tau seconds into a move."""
        if dur == 0.0:
            return 0.0, 0.0, 0.0
        D = abs(d)
        if tau <= 0:
            return 0.0, 0.0, 0.0
        if tau >= dur:
            return D, 0.0, 0.0
        if tau < tr:
            x = v * (tau / 2 - tr / (2 * math.pi) * math.sin(math.pi * tau / tr))
            xd = v * 0.5 * (1 - math.cos(math.pi * tau / tr))
            xdd = v * math.pi / (2 * tr) * math.sin(math.pi * tau / tr)
            return x, xd, xdd
        rem = dur - tau
        if rem < tr:
            x = D - v * (rem / 2 - tr / (2 * math.pi) * math.sin(math.pi * rem / tr))
            xd = v * 0.5 * (1 - math.cos(math.pi * rem / tr))
            xdd = -v * math.pi / (2 * tr) * math.sin(math.pi * rem / tr)
            return x, xd, xdd
        return v * tr / 2 + v * (tau - tr), v, 0.0

    def __call__(self, t: float) -> tuple[float, float, float]:
        t = math.fmod(t, self.cycle) if t >= self.cycle else t
        q = 0.0
        for start, a, d, v, tr, dur in self.segments:
            if t < start:
                return q, 0.0, 0.0
            x, xd, xdd = self._move(t - start, d, v, tr, dur)
            s = 1.0 if d >= 0 else -1.0
            q = a + s * x
            if t < start + dur:
                return q, s * xd, s * xdd
        return q, 0.0, 0.0


@dataclass
class SynthResult:
    trajectory: MarkerTrajectory
    t: np.ndarray
    q: np.ndarray
    qd: np.ndarray
    qdd: np.ndarray

    @property
    def ps_angle_deg(self) -> np.ndarray:
        return np.degrees(self.q[:, 18])


def synth_ps_trajectory(chain, spec: SweepSpec = SweepSpec(), *,
                        partition: CoordinatePartition | None = None) -> SynthResult:
    """Drive the PS coordinate through a sweep and emit FK marker positions.

    Ground truth carries analytic q19 derivatives; dependent coordinates are
    re-closed per frame and their rates obtained from the constraint
    equations, so (q, qd, qdd) is constraint-consistent.
    """
    model = _model(chain)
    part = _partition(model, partition)
    ps = coordinate_index(model.chain, "RU.pronation_supination") - 1
    dof = model.chain.dof(ps + 1)
    lo, hi = -math.radians(spec.amplitude_pron), math.radians(spec.amplitude_sup)
    if dof.limits is not None and (lo < dof.limits[0] - 1e-12 or hi > dof.limits[1] + 1e-12):
        raise ValueError("sweep amplitudes exceed the pronation-supination joint limits")
    if spec.duration is not None and spec.duration <= 0:
        raise ValueError("duration must be positive")
    if spec.sample_rate <= 0:
        raise ValueError("sample_rate must be positive")

    profile = SweepProfile(spec)
    duration = profile.cycle if spec.duration is None else spec.duration
    n_frames = int(math.floor(duration * spec.sample_rate + 1e-9)) + 1
    t = np.arange(n_frames) / spec.sample_rate

    Q = np.zeros((n_frames, model.n))
    QD = np.zeros_like(Q)
    QDD = np.zeros_like(Q)
    q = np.zeros(model.n)
    for k, tk in enumerate(t):
        q = q.copy()
        q[ps], qd_ps, qdd_ps = profile(float(tk))
        try:
            q, _ = _close(model, q, part)
        except ClosureError as exc:
            raise ClosureError(f"frame {k} (t={tk:.3f}s): {exc}") from exc
        qd = np.zeros(model.n)
        qd[ps] = qd_ps
        qd = project_velocity(model, q, qd, part)
        qdd = np.zeros(model.n)
        qdd[ps] = qdd_ps
        qdd = project_acceleration(model, q, qd, qdd, part)
        Q[k], QD[k], QDD[k] = q, qd, qdd

    rng = np.random.default_rng(spec.seed)
    frames = []
    for k in range(n_frames):
        X = marker_array(model, Q[k])
        if spec.noise_sd > 0:
            X = X + rng.normal(0.0, spec.noise_sd, X.shape)
        frames.append(MarkerFrame(float(t[k]), dict(zip(model.marker_names, X))))
    return SynthResult(MarkerTrajectory(tuple(frames), spec.sample_rate), t, Q, QD, QDD)


def frame_from_q(chain, q, t: float = 0.0, noise_sd: float = 0.0, rng=None,
                 drop: Sequence[str] = ()) -> MarkerFrame:
    """Marker frame generated by FK at ``q`` (optionally noisy / with gaps)."""
    model = _model(chain)
    X = marker_array(model, q)
    if noise_sd > 0:
        rng = np.random.default_rng() if rng is None else rng
        X = X + rng.normal(0.0, noise_sd, X.shape)
    return MarkerFrame(t, {n: x for n, x in zip(model.marker_names, X) if n not in drop})
