# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the hot kernels; see ``_pykernels`` for the reference."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, exp, fabs

cnp.import_array()


cdef inline double _dist(const double[:, ::1] a, Py_ssize_t i,
                         const double[:, ::1] b, Py_ssize_t j) noexcept nogil:
    cdef double dx = a[i, 0] - b[j, 0]
    cdef double dy = a[i, 1] - b[j, 1]
    cdef double dz = a[i, 2] - b[j, 2]
    return sqrt(dx * dx + dy * dy + dz * dz)


def length_diff(pa, qa, pb, qb):
    cdef const double[:, ::1] pa_v = np.ascontiguousarray(pa, dtype=np.float64)
    cdef const double[:, ::1] qa_v = np.ascontiguousarray(qa, dtype=np.float64)
    cdef const double[:, ::1] pb_v = np.ascontiguousarray(pb, dtype=np.float64)
    cdef const double[:, ::1] qb_v = np.ascontiguousarray(qb, dtype=np.float64)
    cdef Py_ssize_t na = pa_v.shape[0], nb = pb_v.shape[0], i, j
    out = np.empty((na, nb), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for i in range(na):
            for j in range(nb):
                o[i, j] = fabs(_dist(pa_v, i, pb_v, j) - _dist(qa_v, i, qb_v, j))
    return out


def affinity_csr(p, q, double sigma_d):
    cdef const double[:, ::1] pv = np.ascontiguousarray(p, dtype=np.float64)
    cdef const double[:, ::1] qv = np.ascontiguousarray(q, dtype=np.float64)
    cdef Py_ssize_t n = pv.shape[0], i, j, nnz = 0, cap
    cdef double d, two_s2 = 2.0 * sigma_d * sigma_d
    indptr = np.zeros(n + 1, dtype=np.int64)
    cdef cnp.int64_t[::1] ip = indptr
    cap = max(16, 4 * n)
    indices = np.empty(cap, dtype=np.int64)
    data = np.empty(cap, dtype=np.float64)
    cdef cnp.int64_t[::1] ix = indices
    cdef double[::1] dv = data
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            d = fabs(_dist(pv, i, pv, j) - _dist(qv, i, qv, j))
            if d <= sigma_d:
                if nnz == cap:
                    cap *= 2
                    indices = np.resize(indices, cap)
                    data = np.resize(data, cap)
                    ix = indices
                    dv = data
                ix[nnz] = j
                dv[nnz] = exp(-(d * d) / two_s2)
                nnz += 1
        ip[i + 1] = nnz
    return indptr, indices[:nnz].copy(), data[:nnz].copy()


def truncated_distance_sums(rotations, translations, p, q, double sigma_d):
    cdef const double[:, :, ::1] rv = np.ascontiguousarray(rotations, dtype=np.float64)
    cdef const double[:, ::1] tv = np.ascontiguousarray(translations, dtype=np.float64)
    cdef const double[:, ::1] pv = np.ascontiguousarray(p, dtype=np.float64)
    cdef const double[:, ::1] qv = np.ascontiguousarray(q, dtype=np.float64)
    cdef Py_ssize_t nc = rv.shape[0], n = pv.shape[0], c, i
    cdef double lo = 0.5 * sigma_d, hi = 2.5 * sigma_d
    cdef double dx, dy, dz, dist, acc
    out = np.empty(nc, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for c in range(nc):
            acc = 0.0
            for i in range(n):
                dx = rv[c, 0, 0] * pv[i, 0] + rv[c, 0, 1] * pv[i, 1] + rv[c, 0, 2] * pv[i, 2] + tv[c, 0] - qv[i, 0]
                dy = rv[c, 1, 0] * pv[i, 0] + rv[c, 1, 1] * pv[i, 1] + rv[c, 1, 2] * pv[i, 2] + tv[c, 1] - qv[i, 1]
                dz = rv[c, 2, 0] * pv[i, 0] + rv[c, 2, 1] * pv[i, 1] + rv[c, 2, 2] * pv[i, 2] + tv[c, 2] - qv[i, 2]
                dist = sqrt(dx * dx + dy * dy + dz * dz)
                if dist <= lo:
                    acc += lo
                elif dist < hi:
                    acc += dist
                else:
                    acc += hi
            o[c] = acc
    return out


def pair_weights(p, q, double sigma_d):
    cdef const double[:, ::1] pv = np.ascontiguousarray(p, dtype=np.float64)
    cdef const double[:, ::1] qv = np.ascontiguousarray(q, dtype=np.float64)
    cdef Py_ssize_t n = pv.shape[0], i, j
    cdef double d, w, two_s2 = 2.0 * sigma_d * sigma_d
    out = np.empty((n, n), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for i in range(n):
            o[i, i] = 1.0
            for j in range(i + 1, n):
                d = fabs(_dist(pv, i, pv, j) - _dist(qv, i, qv, j))
                w = exp(-(d * d) / two_s2)
                o[i, j] = w
                o[j, i] = w
    return out
