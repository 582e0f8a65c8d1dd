# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel implementations.

Same surface as ``_kernels_py``; loops are written out so the hot
O(n*m^2) factorization path costs no Python overhead. Matrix kernels
take the tall matrix in rows layout, (c, n) with row j holding column j,
which is contiguous in memory and matches the history buffer storage.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, sqrt

cnp.import_array()

BACKEND_NAME = "compiled"

# restrict-qualified helpers so the compiler may vectorize; four dot
# accumulators hide the FMA latency chain
cdef extern from *:
    """
    static inline double aamix_dot(const double* __restrict__ x,
                                   const double* __restrict__ y,
                                   long n) {
        double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
        long i = 0;
        for (; i + 4 <= n; i += 4) {
            s0 += x[i] * y[i];
            s1 += x[i + 1] * y[i + 1];
            s2 += x[i + 2] * y[i + 2];
            s3 += x[i + 3] * y[i + 3];
        }
        for (; i < n; ++i) s0 += x[i] * y[i];
        return (s0 + s1) + (s2 + s3);
    }
    static inline void aamix_subax(double* __restrict__ w,
                                   const double* __restrict__ v,
                                   double a, long n) {
        for (long i = 0; i < n; ++i) w[i] -= a * v[i];
    }
    """
    double aamix_dot(const double* x, const double* y, long n) nogil
    void aamix_subax(double* w, const double* v, double a, long n) nogil


cdef double _dot(double[::1] a, double[::1] b, Py_ssize_t start, Py_ssize_t stop) nogil:
    if stop <= start:
        return 0.0
    return aamix_dot(&a[start], &b[start], stop - start)


cdef Py_ssize_t _reduce(double[:, ::1] wt, double[:, ::1] vt, char* used,
                        double[::1] rhs, bint has_rhs) nogil:
    """Householder triangularization of wt, the (c, n) transposed matrix.

    Row j of wt is column j of the original matrix. Reflector j is written
    into row j of vt; used[j] records whether it is a real reflection.
    """
    cdef Py_ssize_t c = wt.shape[0]
    cdef Py_ssize_t n = wt.shape[1]
    cdef Py_ssize_t j, l, i, tail
    cdef double norm_x, alpha, vnorm, proj

    for j in range(c):
        tail = n - j
        norm_x = sqrt(aamix_dot(&wt[j, j], &wt[j, j], tail))
        if norm_x == 0.0:
            used[j] = 0
            continue
        if wt[j, j] >= 0.0:
            alpha = -norm_x
        else:
            alpha = norm_x
        for i in range(j, n):
            vt[j, i] = wt[j, i]
        vt[j, j] -= alpha
        vnorm = sqrt(aamix_dot(&vt[j, j], &vt[j, j], tail))
        if vnorm == 0.0:
            used[j] = 0
            continue
        for i in range(j, n):
            vt[j, i] /= vnorm
        used[j] = 1

        for l in range(j, c):
            proj = 2.0 * aamix_dot(&vt[j, j], &wt[l, j], tail)
            aamix_subax(&wt[l, j], &vt[j, j], proj, tail)
        # exact triangular structure for the processed column
        wt[j, j] = alpha
        for i in range(j + 1, n):
            wt[j, i] = 0.0
        if has_rhs:
            proj = 2.0 * aamix_dot(&vt[j, j], &rhs[j], tail)
            aamix_subax(&rhs[j], &vt[j, j], proj, tail)
    return c


cdef Py_ssize_t _rank(double[:, ::1] wt, double drop_tol) nogil:
    cdef Py_ssize_t c = wt.shape[0]
    cdef Py_ssize_t j
    cdef double scale = fabs(wt[0, 0])
    if scale == 0.0:
        return 0
    for j in range(c):
        if fabs(wt[j, j]) < drop_tol * scale:
            return j
    return c


def qr_rows(rows):
    """Thin Householder QR from rows layout; returns (q, r)."""
    cdef Py_ssize_t c = rows.shape[0]
    cdef Py_ssize_t n = rows.shape[1]
    wt_arr = np.array(rows, dtype=np.float64, copy=True)
    vt_arr = np.empty((c, n))
    used_arr = np.zeros(c, dtype=np.int8)
    cdef double[:, ::1] wt = wt_arr
    cdef double[:, ::1] vt = vt_arr
    cdef char[::1] used = used_arr
    cdef double[::1] dummy = np.zeros(1)

    _reduce(wt, vt, &used[0], dummy, False)

    r_arr = np.zeros((c, c))
    cdef double[:, ::1] r = r_arr
    cdef Py_ssize_t i, j, l
    for i in range(c):
        for j in range(i, c):
            r[i, j] = wt[j, i]

    # accumulate thin Q (as rows of qt) by applying reflectors in reverse
    qt_arr = np.zeros((c, n))
    cdef double[:, ::1] qt = qt_arr
    cdef double proj
    for i in range(c):
        qt[i, i] = 1.0
    for j in range(c - 1, -1, -1):
        if not used[j]:
            continue
        for l in range(c):
            proj = 2.0 * aamix_dot(&vt[j, j], &qt[l, j], n - j)
            aamix_subax(&qt[l, j], &vt[j, j], proj, n - j)

    for j in range(c):
        if r[j, j] < 0.0:
            for i in range(c):
                r[j, i] = -r[j, i]
            for i in range(n):
                qt[j, i] = -qt[j, i]
    return np.ascontiguousarray(qt_arr.T), r_arr


def lstsq_rows(rows, rhs, double drop_tol):
    """Least-squares coefficients via Householder QR; returns (g, rank)."""
    cdef Py_ssize_t c = rows.shape[0]
    cdef Py_ssize_t n = rows.shape[1]
    wt_arr = np.array(rows, dtype=np.float64, copy=True)
    vt_arr = np.empty((c, n))
    used_arr = np.zeros(c, dtype=np.int8)
    b_arr = np.array(rhs, dtype=np.float64, copy=True)
    cdef double[:, ::1] wt = wt_arr
    cdef double[:, ::1] vt = vt_arr
    cdef char[::1] used = used_arr
    cdef double[::1] b = b_arr

    _reduce(wt, vt, &used[0], b, True)
    cdef Py_ssize_t rank = _rank(wt, drop_tol)

    g_arr = np.zeros(c)
    cdef double[::1] g = g_arr
    cdef Py_ssize_t i, k
    cdef double s
    for i in range(rank - 1, -1, -1):
        s = b[i]
        for k in range(i + 1, rank):
            s -= wt[k, i] * g[k]
        g[i] = s / wt[i, i]
    return g_arr, int(rank)


def norm_l2(v):
    cdef double[::1] x = np.ascontiguousarray(v, dtype=np.float64)
    return sqrt(_dot(x, x, 0, x.shape[0]))


def norm_inf(v):
    cdef double[::1] x = np.ascontiguousarray(v, dtype=np.float64)
    cdef Py_ssize_t i
    cdef double best = 0.0
    for i in range(x.shape[0]):
        if fabs(x[i]) > best:
            best = fabs(x[i])
    return best


def axpy(double alpha, x, y):
    cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    out_arr = np.array(y, dtype=np.float64, copy=True)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i
    for i in range(out.shape[0]):
        out[i] += alpha * xv[i]
    return out_arr


def window_mean(rows):
    cdef double[:, ::1] r = np.ascontiguousarray(rows, dtype=np.float64)
    cdef Py_ssize_t j = r.shape[0]
    cdef Py_ssize_t n = r.shape[1]
    out_arr = np.zeros(n)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, k
    for k in range(j):
        for i in range(n):
            out[i] += r[k, i]
    for i in range(n):
        out[i] /= j
    return out_arr


def window_variance(rows):
    cdef double[:, ::1] r = np.ascontiguousarray(rows, dtype=np.float64)
    cdef Py_ssize_t j = r.shape[0]
    cdef Py_ssize_t n = r.shape[1]
    mu_arr = window_mean(rows)
    out_arr = np.zeros(n)
    cdef double[::1] mu = mu_arr
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, k
    cdef double d
    for k in range(j):
        for i in range(n):
            d = r[k, i] - mu[i]
            out[i] += d * d
    for i in range(n):
        out[i] /= j
        if out[i] < 0.0:
            out[i] = 0.0
    return out_arr
