# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kinematic/dynamic kernels; same signatures as ``_pykernels``."""
import numpy as np
from libc.math cimport sin, cos

ctypedef long long i64


cdef inline void _cross(const double* a, const double* b, double* out) noexcept nogil:
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]


cdef inline void _matvec(const double* M, const double* x, double* out) noexcept nogil:
    # M row-major 3x3
    out[0] = M[0] * x[0] + M[1] * x[1] + M[2] * x[2]
    out[1] = M[3] * x[0] + M[4] * x[1] + M[5] * x[2]
    out[2] = M[6] * x[0] + M[7] * x[1] + M[8] * x[2]


cdef inline void _axis_rotation(i64 axis, double angle, double* out) noexcept nogil:
    cdef double c = cos(angle), s = sin(angle)
    cdef int k
    for k in range(9):
        out[k] = 0.0
    if axis == 0:
        out[0] = 1.0; out[4] = c; out[5] = -s; out[7] = s; out[8] = c
    elif axis == 1:
        out[0] = c; out[2] = s; out[4] = 1.0; out[6] = -s; out[8] = c
    else:
        out[0] = c; out[1] = -s; out[3] = s; out[4] = c; out[8] = 1.0


cdef inline void _matmul(const double* A, const double* B, double* out) noexcept nogil:
    cdef int r, c
    for r in range(3):
        for c in range(3):
            out[3 * r + c] = (A[3 * r] * B[c] + A[3 * r + 1] * B[3 + c]
                              + A[3 * r + 2] * B[6 + c])


cdef void _fk(const double[::1] q, const i64[::1] parent, const double[:, ::1] offset,
              const i64[::1] axis, const i64[::1] kind, const i64[::1] order,
              double[:, :, ::1] R, double[:, ::1] P) noexcept nogil:
    cdef Py_ssize_t n = q.shape[0], k, i
    cdef i64 p
    cdef double eye[9]
    cdef double zero3[3]
    cdef double rot[9]
    cdef double local[3]
    cdef double tmp[3]
    cdef const double* Rp
    cdef const double* Pp
    cdef int a
    for a in range(9):
        eye[a] = 0.0
    eye[0] = 1.0; eye[4] = 1.0; eye[8] = 1.0
    zero3[0] = 0.0; zero3[1] = 0.0; zero3[2] = 0.0
    for k in range(n):
        i = order[k]
        p = parent[i]
        if p >= 0:
            Rp = &R[p, 0, 0]
            Pp = &P[p, 0]
        else:
            Rp = eye
            Pp = zero3
        local[0] = offset[i, 0]; local[1] = offset[i, 1]; local[2] = offset[i, 2]
        if kind[i] == 0:
            _axis_rotation(axis[i], q[i], rot)
            _matmul(Rp, rot, &R[i, 0, 0])
        else:
            local[axis[i]] += q[i]
            for a in range(9):
                R[i, a // 3, a % 3] = Rp[a]
        _matvec(Rp, local, tmp)
        for a in range(3):
            P[i, a] = Pp[a] + tmp[a]


cdef void _sweep(const double[::1] q, const double[::1] qd, const double[::1] qdd,
                 const double[::1] a0, const i64[::1] parent, const double[:, ::1] offset,
                 const i64[::1] axis, const i64[::1] kind, const i64[::1] order,
                 double[:, :, ::1] R, double[:, ::1] P, double[:, ::1] W, double[:, ::1] V,
                 double[:, ::1] DW, double[:, ::1] A) noexcept nogil:
    cdef Py_ssize_t n = q.shape[0], k, i
    cdef i64 p
    cdef int c
    cdef double zero3[3]
    cdef double eye[9]
    cdef double z[3]
    cdef double r[3]
    cdef double zqd[3]
    cdef double t1[3]
    cdef double t2[3]
    cdef double t3[3]
    cdef const double* wp
    cdef const double* vp
    cdef const double* dwp
    cdef const double* ap
    cdef const double* Rp
    cdef const double* Pp
    _fk(q, parent, offset, axis, kind, order, R, P)
    zero3[0] = 0.0; zero3[1] = 0.0; zero3[2] = 0.0
    for c in range(9):
        eye[c] = 0.0
    eye[0] = 1.0; eye[4] = 1.0; eye[8] = 1.0
    for k in range(n):
        i = order[k]
        p = parent[i]
        if p >= 0:
            wp = &W[p, 0]; vp = &V[p, 0]; dwp = &DW[p, 0]; ap = &A[p, 0]
            Rp = &R[p, 0, 0]; Pp = &P[p, 0]
        else:
            wp = zero3; vp = zero3; dwp = zero3; ap = &a0[0]
            Rp = eye; Pp = zero3
        for c in range(3):
            z[c] = Rp[3 * c + axis[i]]
            r[c] = P[i, c] - Pp[c]
            zqd[c] = z[c] * qd[i]
        # common: v = vp + wp x r ; a = ap + dwp x r + wp x (wp x r)
        _cross(wp, r, t1)
        _cross(dwp, r, t2)
        _cross(wp, t1, t3)
        for c in range(3):
            V[i, c] = vp[c] + t1[c]
            A[i, c] = ap[c] + t2[c] + t3[c]
        if kind[i] == 0:
            _cross(wp, zqd, t1)
            for c in range(3):
                W[i, c] = wp[c] + zqd[c]
                DW[i, c] = dwp[c] + z[c] * qdd[i] + t1[c]
        else:
            _cross(wp, zqd, t1)
            for c in range(3):
                W[i, c] = wp[c]
                DW[i, c] = dwp[c]
                V[i, c] += zqd[c]
                A[i, c] += z[c] * qdd[i] + 2.0 * t1[c]


cdef void _backward(const i64[::1] parent, const i64[::1] axis, const i64[::1] kind,
                    const i64[::1] order, const double[::1] mass, const double[:, ::1] com,
                    const double[:, :, ::1] inertia, const double[:, ::1] fext,
                    const double[:, ::1] text, double[:, :, ::1] R, double[:, ::1] P,
                    double[:, ::1] W, double[:, ::1] DW, double[:, ::1] A,
                    double[:, ::1] f, double[:, ::1] m, double[::1] tau) noexcept nogil:
    cdef Py_ssize_t n = parent.shape[0], k, i
    cdef i64 p
    cdef int a, b, c
    cdef double cw[3]
    cdef double t1[3]
    cdef double t2[3]
    cdef double F[3]
    cdef double N[3]
    cdef double Iw[9]
    cdef double RI[9]
    cdef double Iww[3]
    cdef double r[3]
    cdef const double* Ri
    for k in range(n):
        i = order[k]
        Ri = &R[i, 0, 0]
        _matvec(Ri, &com[i, 0], cw)
        _cross(&W[i, 0], cw, t1)
        _cross(&W[i, 0], t1, t2)
        _cross(&DW[i, 0], cw, t1)
        for c in range(3):
            F[c] = mass[i] * (A[i, c] + t1[c] + t2[c]) - fext[i, c]
        # Iw = R I R^T
        _matmul(Ri, &inertia[i, 0, 0], RI)
        for a in range(3):
            for b in range(3):
                Iw[3 * a + b] = RI[3 * a] * Ri[3 * b] + RI[3 * a + 1] * Ri[3 * b + 1] + RI[3 * a + 2] * Ri[3 * b + 2]
        _matvec(Iw, &W[i, 0], Iww)
        _cross(&W[i, 0], Iww, t1)
        _matvec(Iw, &DW[i, 0], t2)
        for c in range(3):
            N[c] = t2[c] + t1[c] - text[i, c]
        _cross(cw, F, t1)
        for c in range(3):
            f[i, c] = F[c]
            m[i, c] = N[c] + t1[c]
    for k in range(n - 1, -1, -1):
        i = order[k]
        Ri = &R[i, 0, 0]
        a = axis[i]
        if kind[i] == 0:
            tau[i] = Ri[a] * m[i, 0] + Ri[3 + a] * m[i, 1] + Ri[6 + a] * m[i, 2]
        else:
            tau[i] = Ri[a] * f[i, 0] + Ri[3 + a] * f[i, 1] + Ri[6 + a] * f[i, 2]
        p = parent[i]
        if p >= 0:
            for c in range(3):
                r[c] = P[i, c] - P[p, c]
            _cross(r, &f[i, 0], t1)
            for c in range(3):
                f[p, c] += f[i, c]
                m[p, c] += m[i, c] + t1[c]


def fk(q, parent, offset, axis, kind, order):
    cdef Py_ssize_t n = len(q)
    R = np.zeros((n, 3, 3))
    P = np.zeros((n, 3))
    _fk(np.ascontiguousarray(q, dtype=np.float64), parent, offset, axis, kind, order, R, P)
    return R, P


def sweep(q, qd, qdd, a0, parent, offset, axis, kind, order):
    cdef Py_ssize_t n = len(q)
    R = np.zeros((n, 3, 3))
    P = np.zeros((n, 3))
    W = np.zeros((n, 3))
    V = np.zeros((n, 3))
    DW = np.zeros((n, 3))
    A = np.zeros((n, 3))
    _sweep(np.ascontiguousarray(q, dtype=np.float64), np.ascontiguousarray(qd, dtype=np.float64),
           np.ascontiguousarray(qdd, dtype=np.float64), np.ascontiguousarray(a0, dtype=np.float64),
           parent, offset, axis, kind, order, R, P, W, V, DW, A)
    return R, P, W, V, DW, A


def rnea(q, qd, qdd, a0, fext, text, parent, offset, axis, kind, order, mass, com, inertia):
    cdef Py_ssize_t n = len(q)
    R = np.zeros((n, 3, 3))
    P = np.zeros((n, 3))
    W = np.zeros((n, 3))
    V = np.zeros((n, 3))
    DW = np.zeros((n, 3))
    A = np.zeros((n, 3))
    f = np.zeros((n, 3))
    m = np.zeros((n, 3))
    tau = np.zeros(n)
    _sweep(np.ascontiguousarray(q, dtype=np.float64), np.ascontiguousarray(qd, dtype=np.float64),
           np.ascontiguousarray(qdd, dtype=np.float64), np.ascontiguousarray(a0, dtype=np.float64),
           parent, offset, axis, kind, order, R, P, W, V, DW, A)
    _backward(parent, axis, kind, order, mass, com, inertia,
              np.ascontiguousarray(fext, dtype=np.float64), np.ascontiguousarray(text, dtype=np.float64),
              R, P, W, DW, A, f, m, tau)
    return tau


def mass_matrix(q, parent, offset, axis, kind, order, mass, com, inertia):
    cdef Py_ssize_t n = len(q), j
    qv = np.ascontiguousarray(q, dtype=np.float64)
    zeros = np.zeros(n)
    a0 = np.zeros(3)
    loads = np.zeros((n, 3))
    e = np.zeros(n)
    cdef double[::1] e_view = e
    M = np.zeros((n, n))
    R = np.zeros((n, 3, 3))
    P = np.zeros((n, 3))
    W = np.zeros((n, 3))
    V = np.zeros((n, 3))
    DW = np.zeros((n, 3))
    A = np.zeros((n, 3))
    f = np.zeros((n, 3))
    m = np.zeros((n, 3))
    tau = np.zeros(n)
    cdef double[:, ::1] M_view = M
    cdef double[::1] tau_view = tau
    cdef Py_ssize_t row
    for j in range(n):
        e_view[j] = 1.0
        _sweep(qv, zeros, e, a0, parent, offset, axis, kind, order, R, P, W, V, DW, A)
        _backward(parent, axis, kind, order, mass, com, inertia, loads, loads,
                  R, P, W, DW, A, f, m, tau)
        for row in range(n):
            M_view[row, j] = tau_view[row]
        e_view[j] = 0.0
    return M
