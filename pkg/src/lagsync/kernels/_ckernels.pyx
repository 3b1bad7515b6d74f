# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled batched model kernels.

Same contract as ``_pykernels``; see that module for shapes and kind codes.
"""

import numpy as np
from libc.math cimport sin, cos, sqrt


cdef enum:
    ARM2 = 0
    CARTPEND3 = 1

NDOF = {0: 2, 1: 3}
NPARAM = {0: 4, 1: 6}


cdef inline int _ndof(int kind) noexcept nogil:
    if kind == ARM2:
        return 2
    return 3


cdef void _arm2(const double[:] a, double grav, const double[:] q,
                const double[:] qd, double* M, double* C, double* g) noexcept nogil:
    cdef double c2 = cos(q[1]), s2 = sin(q[1])
    cdef double h = a[2] * s2 - a[3] * c2
    M[0] = a[0] + 2.0 * a[2] * c2 + 2.0 * a[3] * s2
    M[1] = a[1] + a[2] * c2 + a[3] * s2
    M[2] = M[1]
    M[3] = a[1]
    C[0] = -h * qd[1]
    C[1] = -h * (qd[0] + qd[1])
    C[2] = h * qd[0]
    C[3] = 0.0
    g[0] = 0.0
    g[1] = 0.0


cdef void _cartpend3(const double[:] a, double grav, const double[:] q,
                     const double[:] qd, double* M, double* C, double* g) noexcept nogil:
    cdef double c1 = cos(q[1]), s1 = sin(q[1])
    cdef double c2 = cos(q[2]), s2 = sin(q[2])
    cdef double c12 = cos(q[1] - q[2]), s12 = sin(q[1] - q[2])
    M[0] = a[0]
    M[1] = a[1] * c1
    M[2] = a[2] * c2
    M[3] = M[1]
    M[4] = a[3]
    M[5] = a[4] * c12
    M[6] = M[2]
    M[7] = M[5]
    M[8] = a[5]
    C[0] = 0.0
    C[1] = -a[1] * s1 * qd[1]
    C[2] = -a[2] * s2 * qd[2]
    C[3] = 0.0
    C[4] = 0.0
    C[5] = a[4] * s12 * qd[2]
    C[6] = 0.0
    C[7] = -a[4] * s12 * qd[1]
    C[8] = 0.0
    g[0] = 0.0
    g[1] = -a[1] * grav * s1
    g[2] = -a[2] * grav * s2


cdef inline void _eval(int kind, const double[:] a, double grav, const double[:] q,
                       const double[:] qd, double* M, double* C, double* g) noexcept nogil:
    if kind == ARM2:
        _arm2(a, grav, q, qd, M, C, g)
    else:
        _cartpend3(a, grav, q, qd, M, C, g)


cdef void _chol_solve(double* A, double* b, int n) noexcept nogil:
    # In-place Cholesky of the SPD matrix A (row-major n x n), then b <- A^-1 b.
    cdef int i, j, k
    cdef double acc
    for j in range(n):
        acc = A[j * n + j]
        for k in range(j):
            acc -= A[j * n + k] * A[j * n + k]
        A[j * n + j] = sqrt(acc)
        for i in range(j + 1, n):
            acc = A[i * n + j]
            for k in range(j):
                acc -= A[i * n + k] * A[j * n + k]
            A[i * n + j] = acc / A[j * n + j]
    for i in range(n):
        acc = b[i]
        for k in range(i):
            acc -= A[i * n + k] * b[k]
        b[i] = acc / A[i * n + i]
    for i in range(n - 1, -1, -1):
        acc = b[i]
        for k in range(i + 1, n):
            acc -= A[k * n + i] * b[k]
        b[i] = acc / A[i * n + i]


def _check_kind(int kind):
    if kind != ARM2 and kind != CARTPEND3:
        raise ValueError(f"unknown model kind code {kind}")


def mcg(int kind, a, grav, q, qd):
    """Return (M, C, g) for every robot in the batch."""
    _check_kind(kind)
    cdef const double[:, :] av = np.ascontiguousarray(a, dtype=np.float64)
    cdef const double[:] gv = np.ascontiguousarray(grav, dtype=np.float64)
    cdef const double[:, :] qv = np.ascontiguousarray(q, dtype=np.float64)
    cdef const double[:, :] qdv = np.ascontiguousarray(qd, dtype=np.float64)
    cdef Py_ssize_t p = qv.shape[0], r
    cdef int n = _ndof(kind), i
    Mo = np.empty((p, n, n))
    Co = np.empty((p, n, n))
    go = np.empty((p, n))
    cdef double[:, :, :] Mv = Mo
    cdef double[:, :, :] Cv = Co
    cdef double[:, :] gov = go
    cdef double M[9]
    cdef double C[9]
    cdef double g[3]
    with nogil:
        for r in range(p):
            _eval(kind, av[r], gv[r], qv[r], qdv[r], M, C, g)
            for i in range(n * n):
                Mv[r, i // n, i % n] = M[i]
                Cv[r, i // n, i % n] = C[i]
            for i in range(n):
                gov[r, i] = g[i]
    return Mo, Co, go


def inverse_dynamics(int kind, a, grav, q, qd, v, acc):
    """M(q) acc + C(q, qd) v + g(q), batched."""
    _check_kind(kind)
    cdef const double[:, :] av = np.ascontiguousarray(a, dtype=np.float64)
    cdef const double[:] gv = np.ascontiguousarray(grav, dtype=np.float64)
    cdef const double[:, :] qv = np.ascontiguousarray(q, dtype=np.float64)
    cdef const double[:, :] qdv = np.ascontiguousarray(qd, dtype=np.float64)
    cdef const double[:, :] vv = np.ascontiguousarray(v, dtype=np.float64)
    cdef const double[:, :] accv = np.ascontiguousarray(acc, dtype=np.float64)
    cdef Py_ssize_t p = qv.shape[0], r
    cdef int n = _ndof(kind), i, j
    out = np.empty((p, n))
    cdef double[:, :] ov = out
    cdef double M[9]
    cdef double C[9]
    cdef double g[3]
    cdef double tot
    with nogil:
        for r in range(p):
            _eval(kind, av[r], gv[r], qv[r], qdv[r], M, C, g)
            for i in range(n):
                tot = g[i]
                for j in range(n):
                    tot = tot + M[i * n + j] * accv[r, j] + C[i * n + j] * vv[r, j]
                ov[r, i] = tot
    return out


def forward_dynamics(int kind, a, grav, q, qd, tau):
    """Solve M(q) qdd = tau - C(q, qd) qd - g(q) for qdd, batched."""
    _check_kind(kind)
    cdef const double[:, :] av = np.ascontiguousarray(a, dtype=np.float64)
    cdef const double[:] gv = np.ascontiguousarray(grav, dtype=np.float64)
    cdef const double[:, :] qv = np.ascontiguousarray(q, dtype=np.float64)
    cdef const double[:, :] qdv = np.ascontiguousarray(qd, dtype=np.float64)
    cdef const double[:, :] tv = np.ascontiguousarray(tau, dtype=np.float64)
    cdef Py_ssize_t p = qv.shape[0], r
    cdef int n = _ndof(kind), i, j
    out = np.empty((p, n))
    cdef double[:, :] ov = out
    cdef double M[9]
    cdef double C[9]
    cdef double g[3]
    cdef double b[3]
    cdef double tot
    with nogil:
        for r in range(p):
            _eval(kind, av[r], gv[r], qv[r], qdv[r], M, C, g)
            for i in range(n):
                tot = tv[r, i] - g[i]
                for j in range(n):
                    tot = tot - C[i * n + j] * qdv[r, j]
                b[i] = tot
            _chol_solve(M, b, n)
            for i in range(n):
                ov[r, i] = b[i]
    return out


def regressor(int kind, grav, q, qd, v, acc):
    """Regressor Y with Y @ a == M acc + C v + g, shape (p, n, k)."""
    _check_kind(kind)
    cdef const double[:] gv = np.ascontiguousarray(grav, dtype=np.float64)
    cdef const double[:, :] qv = np.ascontiguousarray(q, dtype=np.float64)
    cdef const double[:, :] qdv = np.ascontiguousarray(qd, dtype=np.float64)
    cdef const double[:, :] vv = np.ascontiguousarray(v, dtype=np.float64)
    cdef const double[:, :] av = np.ascontiguousarray(acc, dtype=np.float64)
    cdef Py_ssize_t p = qv.shape[0], r
    cdef double c1, s1, c2, s2, c12, s12, w
    if kind == ARM2:
        Y = np.zeros((p, 2, 4))
    else:
        Y = np.zeros((p, 3, 6))
    cdef double[:, :, :] Yv = Y
    with nogil:
        for r in range(p):
            if kind == ARM2:
                c2 = cos(qv[r, 1])
                s2 = sin(qv[r, 1])
                w = qdv[r, 1] * vv[r, 0] + (qdv[r, 0] + qdv[r, 1]) * vv[r, 1]
                Yv[r, 0, 0] = av[r, 0]
                Yv[r, 0, 1] = av[r, 1]
                Yv[r, 0, 2] = c2 * (2.0 * av[r, 0] + av[r, 1]) - s2 * w
                Yv[r, 0, 3] = s2 * (2.0 * av[r, 0] + av[r, 1]) + c2 * w
                Yv[r, 1, 1] = av[r, 0] + av[r, 1]
                Yv[r, 1, 2] = c2 * av[r, 0] + s2 * qdv[r, 0] * vv[r, 0]
                Yv[r, 1, 3] = s2 * av[r, 0] - c2 * qdv[r, 0] * vv[r, 0]
            else:
                c1 = cos(qv[r, 1])
                s1 = sin(qv[r, 1])
                c2 = cos(qv[r, 2])
                s2 = sin(qv[r, 2])
                c12 = cos(qv[r, 1] - qv[r, 2])
                s12 = sin(qv[r, 1] - qv[r, 2])
                Yv[r, 0, 0] = av[r, 0]
                Yv[r, 0, 1] = c1 * av[r, 1] - s1 * qdv[r, 1] * vv[r, 1]
                Yv[r, 0, 2] = c2 * av[r, 2] - s2 * qdv[r, 2] * vv[r, 2]
                Yv[r, 1, 1] = c1 * av[r, 0] - gv[r] * s1
                Yv[r, 1, 3] = av[r, 1]
                Yv[r, 1, 4] = c12 * av[r, 2] + s12 * qdv[r, 2] * vv[r, 2]
                Yv[r, 2, 2] = c2 * av[r, 0] - gv[r] * s2
                Yv[r, 2, 4] = c12 * av[r, 1] - s12 * qdv[r, 1] * vv[r, 1]
                Yv[r, 2, 5] = av[r, 2]
    return Y


FF_INVERSE = 0
FF_NONE = 1
FF_GRAVITY = 2


def closed_loop(int kind, a, grav, q, qd, qdes, qdes_d, qdes_dd, lam, L, int ff_mode, dist):
    """Fused right-hand side of ``p`` robots under ``tau = ff - L s``."""
    _check_kind(kind)
    cdef const double[:, :] av = np.ascontiguousarray(a, dtype=np.float64)
    cdef const double[:] gv = np.ascontiguousarray(grav, dtype=np.float64)
    cdef const double[:, :] qv = np.ascontiguousarray(q, dtype=np.float64)
    cdef const double[:, :] qdv = np.ascontiguousarray(qd, dtype=np.float64)
    cdef const double[:, :] xv = np.ascontiguousarray(qdes, dtype=np.float64)
    cdef const double[:, :] xdv = np.ascontiguousarray(qdes_d, dtype=np.float64)
    cdef const double[:, :] xddv = np.ascontiguousarray(qdes_dd, dtype=np.float64)
    cdef const double[:] lv = np.ascontiguousarray(lam, dtype=np.float64)
    cdef const double[:, :] Lv = np.ascontiguousarray(L, dtype=np.float64)
    cdef bint has_dist = dist is not None
    cdef const double[:, :] dv = np.ascontiguousarray(dist if has_dist else np.zeros((1, 1)),
                                                      dtype=np.float64)
    cdef Py_ssize_t p = qv.shape[0], r, c, N
    cdef int n = _ndof(kind), i, j
    N = p * n
    acc = np.empty((p, n))
    tau = np.empty((p, n))
    s = np.empty((p, n))
    qr_d_arr = np.empty((p, n))
    qr_dd_arr = np.empty((p, n))
    cdef double[:, :] accv = acc
    cdef double[:, :] tv = tau
    cdef double[:, :] sv = s
    cdef double[:, :] qrv = qr_d_arr
    cdef double[:, :] qrrv = qr_dd_arr
    cdef double M[9]
    cdef double C[9]
    cdef double g[3]
    cdef double b[3]
    cdef double tot
    with nogil:
        for r in range(p):
            for i in range(n):
                qrv[r, i] = xdv[r, i] - lv[i] * (qv[r, i] - xv[r, i])
                qrrv[r, i] = xddv[r, i] - lv[i] * (qdv[r, i] - xdv[r, i])
                sv[r, i] = qdv[r, i] - qrv[r, i]
        for r in range(p):
            _eval(kind, av[r], gv[r], qv[r], qdv[r], M, C, g)
            for i in range(n):
                if ff_mode == 0:
                    tot = g[i]
                    for j in range(n):
                        tot = tot + M[i * n + j] * qrrv[r, j] + C[i * n + j] * qrv[r, j]
                elif ff_mode == 2:
                    tot = g[i]
                else:
                    tot = 0.0
                for c in range(N):
                    tot = tot - Lv[r * n + i, c] * sv[c // n, c % n]
                tv[r, i] = tot
            for i in range(n):
                tot = tv[r, i] - g[i]
                if has_dist:
                    tot = tot + dv[r, i]
                for j in range(n):
                    tot = tot - C[i * n + j] * qdv[r, j]
                b[i] = tot
            _chol_solve(M, b, n)
            for i in range(n):
                accv[r, i] = b[i]
    return acc, tau, s
