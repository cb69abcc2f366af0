# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled RK4 integrator for  Y'' = (Q(x) - lam) Y  on a uniform grid.

Optionally carries the variational pair W = dY/dlam, which satisfies
W'' = (Q - lam) W - Y with zero initial data.
"""
import numpy as np
from libc.stdlib cimport malloc, free

ctypedef double complex cplx


cdef void _rhs(const cplx* Qx, cplx lam, const cplx* u, cplx* du,
               int m, int p, int var) noexcept nogil:
    cdef int mp = m * p
    cdef int i, j, l
    cdef cplx acc
    for i in range(mp):
        du[i] = u[mp + i]
    for i in range(m):
        for j in range(p):
            acc = -lam * u[i * p + j]
            for l in range(m):
                acc = acc + Qx[i * m + l] * u[l * p + j]
            du[mp + i * p + j] = acc
    if var:
        for i in range(mp):
            du[2 * mp + i] = u[3 * mp + i]
        for i in range(m):
            for j in range(p):
                acc = -lam * u[2 * mp + i * p + j] - u[i * p + j]
                for l in range(m):
                    acc = acc + Qx[i * m + l] * u[2 * mp + l * p + j]
                du[3 * mp + i * p + j] = acc


cdef void _integrate(const cplx* Qn, const cplx* Qm, int K, cplx lam,
                     cplx* u, int m, int p, int var, double h,
                     int stride, cplx* traj) noexcept nogil:
    cdef int mp = m * p
    cdef int nv = (4 if var else 2) * mp
    cdef int mm = m * m
    cdef int step, i, node
    cdef double h2 = 0.5 * h
    cdef double h6 = h / 6.0
    cdef cplx* k1 = <cplx*> malloc(5 * nv * sizeof(cplx))
    cdef cplx* k2 = k1 + nv
    cdef cplx* k3 = k2 + nv
    cdef cplx* k4 = k3 + nv
    cdef cplx* tmp = k4 + nv
    if stride > 0:
        for i in range(2 * mp):
            traj[i] = u[i]
    for step in range(K):
        _rhs(Qn + step * mm, lam, u, k1, m, p, var)
        for i in range(nv):
            tmp[i] = u[i] + h2 * k1[i]
        _rhs(Qm + step * mm, lam, tmp, k2, m, p, var)
        for i in range(nv):
            tmp[i] = u[i] + h2 * k2[i]
        _rhs(Qm + step * mm, lam, tmp, k3, m, p, var)
        for i in range(nv):
            tmp[i] = u[i] + h * k3[i]
        _rhs(Qn + (step + 1) * mm, lam, tmp, k4, m, p, var)
        for i in range(nv):
            u[i] = u[i] + h6 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        if stride > 0 and (step + 1) % stride == 0:
            node = (step + 1) // stride
            for i in range(2 * mp):
                traj[node * 2 * mp + i] = u[i]
    free(k1)


def rk4_batch(Qn, Qm, lam, Y0, Z0, double h, int stride=0, bint variational=False):
    """Integrate for every entry of ``lam``.

    Returns ``(Y, Z, W, Wd, traj)``: end values at the last node (W, Wd are
    None unless ``variational``) and, when ``stride > 0``, the values of
    (Y, Z) at every ``stride``-th node stacked as ``(B, nodes, 2, m, p)``.
    """
    cdef cplx[:, :, ::1] qn = np.ascontiguousarray(Qn, dtype=complex)
    cdef cplx[:, :, ::1] qm = np.ascontiguousarray(Qm, dtype=complex)
    cdef cplx[::1] lv = np.ascontiguousarray(np.atleast_1d(lam), dtype=complex)
    y0 = np.ascontiguousarray(Y0, dtype=complex)
    z0 = np.ascontiguousarray(Z0, dtype=complex)
    cdef int K = qm.shape[0]
    cdef int m = y0.shape[0]
    cdef int p = y0.shape[1]
    cdef int B = lv.shape[0]
    cdef int var = 1 if variational else 0
    cdef int nv = (4 if var else 2) * m * p
    cdef int nodes = (K // stride + 1) if stride > 0 else 1
    state = np.zeros((B, nv), dtype=complex)
    state[:, : m * p] = y0.ravel()
    state[:, m * p: 2 * m * p] = z0.ravel()
    traj_arr = np.zeros((B, nodes, 2 * m * p), dtype=complex)
    cdef cplx[:, ::1] st = state
    cdef cplx[:, :, ::1] tr = traj_arr
    cdef int b
    with nogil:
        for b in range(B):
            _integrate(&qn[0, 0, 0], &qm[0, 0, 0], K, lv[b], &st[b, 0], m, p, var,
                       h, stride, &tr[b, 0, 0])
    mp = m * p
    Y = state[:, :mp].reshape(B, m, p)
    Z = state[:, mp:2 * mp].reshape(B, m, p)
    W = state[:, 2 * mp:3 * mp].reshape(B, m, p) if var else None
    Wd = state[:, 3 * mp:].reshape(B, m, p) if var else None
    traj = traj_arr.reshape(B, nodes, 2, m, p) if stride > 0 else None
    return Y, Z, W, Wd, traj
