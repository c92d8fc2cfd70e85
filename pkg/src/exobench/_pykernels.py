"""Pure-Python kinematic/dynamic kernels (reference and fallback backend).

Every quantity is expressed in the world frame. Link frames are
origin-at-joint; ``a0`` is the linear acceleration imposed on the base,
``-gravity`` for inverse dynamics.
"""
import numpy as np

_EYE = np.eye(3)


def _axis_rotation(axis, angle):
    c, s = np.cos(angle), np.sin(angle)
    if axis == 0:
        return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])
    if axis == 1:
        return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def fk(q, parent, offset, axis, kind, order):
    n = len(q)
    R = np.zeros((n, 3, 3))
    P = np.zeros((n, 3))
    for i in order:
        p = parent[i]
        Rp, Pp = (R[p], P[p]) if p >= 0 else (_EYE, np.zeros(3))
        if kind[i] == 0:
            R[i] = Rp @ _axis_rotation(axis[i], q[i])
            P[i] = Pp + Rp @ offset[i]
        else:
            local = offset[i].copy()
            local[axis[i]] += q[i]
            R[i] = Rp
            P[i] = Pp + Rp @ local
    return R, P


def sweep(q, qd, qdd, a0, parent, offset, axis, kind, order):
    """Forward kinematic sweep: poses plus angular/linear velocity and acceleration."""
    n = len(q)
    R, P = fk(q, parent, offset, axis, kind, order)
    W = np.zeros((n, 3))
    V = np.zeros((n, 3))
    DW = np.zeros((n, 3))
    A = np.zeros((n, 3))
    a0 = np.asarray(a0, dtype=float)
    zero = np.zeros(3)
    for i in order:
        p = parent[i]
        if p >= 0:
            wp, vp, dwp, ap, Rp, Pp = W[p], V[p], DW[p], A[p], R[p], P[p]
        else:
            wp, vp, dwp, ap, Rp, Pp = zero, zero, zero, a0, _EYE, zero
        z = Rp[:, axis[i]]
        r = P[i] - Pp
        zqd = z * qd[i]
        if kind[i] == 0:
            W[i] = wp + zqd
            DW[i] = dwp + z * qdd[i] + np.cross(wp, zqd)
            V[i] = vp + np.cross(wp, r)
            A[i] = ap + np.cross(dwp, r) + np.cross(wp, np.cross(wp, r))
        else:
            W[i] = wp
            DW[i] = dwp
            V[i] = vp + np.cross(wp, r) + zqd
            A[i] = (ap + np.cross(dwp, r) + np.cross(wp, np.cross(wp, r))
                    + z * qdd[i] + 2.0 * np.cross(wp, zqd))
    return R, P, W, V, DW, A


def rnea(q, qd, qdd, a0, fext, text, parent, offset, axis, kind, order, mass, com, inertia):
    """Recursive Newton-Euler inverse dynamics of the open tree."""
    n = len(q)
    R, P, W, _, DW, A = sweep(q, qd, qdd, a0, parent, offset, axis, kind, order)
    f = np.zeros((n, 3))
    m = np.zeros((n, 3))
    for i in order:
        c = R[i] @ com[i]
        w, dw = W[i], DW[i]
        F = mass[i] * (A[i] + np.cross(dw, c) + np.cross(w, np.cross(w, c))) - fext[i]
        Iw = R[i] @ inertia[i] @ R[i].T
        N = Iw @ dw + np.cross(w, Iw @ w) - text[i]
        f[i] = F
        m[i] = N + np.cross(c, F)
    tau = np.zeros(n)
    for i in order[::-1]:
        z = R[i][:, axis[i]]
        tau[i] = z @ (m[i] if kind[i] == 0 else f[i])
        p = parent[i]
        if p >= 0:
            f[p] += f[i]
            m[p] += m[i] + np.cross(P[i] - P[p], f[i])
    return tau


def mass_matrix(q, parent, offset, axis, kind, order, mass, com, inertia):
    n = len(q)
    M = np.zeros((n, n))
    zeros = np.zeros(n)
    loads = np.zeros((n, 3))
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        M[:, j] = rnea(q, zeros, e, np.zeros(3), loads, loads,
                       parent, offset, axis, kind, order, mass, com, inertia)
    return M
