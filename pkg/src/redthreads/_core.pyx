# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops.

Every reduction here accumulates left to right in a single ``double`` so
results are bitwise reproducible and match :mod:`redthreads._fallback`.
Loops with enough work release the GIL so threaded replicas can overlap on
multicore hosts. Tiny calls keep it: releasing costs a thread switch
whenever another thread is waiting, which dwarfs a 64-element dot.
"""

from libc.string cimport memcmp
from libc.math cimport fabs

import numpy as np
cimport numpy as cnp

cnp.import_array()

BACKEND = "cython"

# element count below which a loop keeps the GIL
cdef enum:
    NOGIL_MIN = 4096


cdef inline double _dot(const double[::1] a, const double[::1] b, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t k
    cdef double acc = 0.0
    for k in range(n):
        acc = acc + a[k] * b[k]
    return acc


cdef inline double _dot_rc(const double[:, ::1] A, const double[:, ::1] B,
                           Py_ssize_t i, Py_ssize_t j) noexcept nogil:
    cdef Py_ssize_t k
    cdef double acc = 0.0
    for k in range(A.shape[1]):
        acc = acc + A[i, k] * B[k, j]
    return acc


cdef inline double _csr_dot(const cnp.int64_t[::1] row_ptr, const cnp.int64_t[::1] col_idx,
                            const double[::1] values, const double[::1] x,
                            Py_ssize_t i) noexcept nogil:
    cdef Py_ssize_t p
    cdef double acc = 0.0
    for p in range(row_ptr[i], row_ptr[i + 1]):
        acc = acc + values[p] * x[col_idx[p]]
    return acc


def dot(const double[::1] a, const double[::1] b):
    cdef Py_ssize_t n = a.shape[0]
    cdef double acc
    if b.shape[0] != n:
        raise ValueError("length mismatch")
    if n < NOGIL_MIN:
        return _dot(a, b, n)
    with nogil:
        acc = _dot(a, b, n)
    return acc


def dot_row_col(const double[:, ::1] A, const double[:, ::1] B, Py_ssize_t i, Py_ssize_t j):
    """sum_k A[i, k] * B[k, j], accumulated in k order."""
    cdef double acc
    if A.shape[1] < NOGIL_MIN:
        return _dot_rc(A, B, i, j)
    with nogil:
        acc = _dot_rc(A, B, i, j)
    return acc


def gemm_row(const double[:, ::1] A, const double[:, ::1] B, Py_ssize_t i):
    cdef Py_ssize_t j, m = B.shape[1]
    out = np.empty(m, dtype=np.float64)
    cdef double[::1] o = out
    if A.shape[1] * m < NOGIL_MIN:
        for j in range(m):
            o[j] = _dot_rc(A, B, i, j)
        return out
    with nogil:
        for j in range(m):
            o[j] = _dot_rc(A, B, i, j)
    return out


def csr_row_dot(const cnp.int64_t[::1] row_ptr, const cnp.int64_t[::1] col_idx,
                const double[::1] values, const double[::1] x, Py_ssize_t i):
    cdef double acc
    if row_ptr[i + 1] - row_ptr[i] < NOGIL_MIN:
        return _csr_dot(row_ptr, col_idx, values, x, i)
    with nogil:
        acc = _csr_dot(row_ptr, col_idx, values, x, i)
    return acc


def csr_matvec(const cnp.int64_t[::1] row_ptr, const cnp.int64_t[::1] col_idx,
               const double[::1] values, const double[::1] x):
    cdef Py_ssize_t i, n = row_ptr.shape[0] - 1
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] y = out
    with nogil:
        for i in range(n):
            y[i] = _csr_dot(row_ptr, col_idx, values, x, i)
    return out


# -- 1D Poisson (-u'' = f, zero Dirichlet ends), h2 = h*h ------------------

def jacobi_1d(const double[::1] u, const double[::1] f, double h2, double omega):
    cdef Py_ssize_t i, n = u.shape[0]
    out = np.zeros(n, dtype=np.float64)
    cdef double[::1] v = out
    with nogil:
        for i in range(1, n - 1):
            v[i] = (1.0 - omega) * u[i] + omega * 0.5 * (u[i - 1] + u[i + 1] + h2 * f[i])
    return out


def residual_1d(const double[::1] u, const double[::1] f, double h2):
    cdef Py_ssize_t i, n = u.shape[0]
    out = np.zeros(n, dtype=np.float64)
    cdef double[::1] r = out
    with nogil:
        for i in range(1, n - 1):
            r[i] = f[i] - (2.0 * u[i] - u[i - 1] - u[i + 1]) / h2
    return out


def restrict_1d(const double[::1] r):
    cdef Py_ssize_t i, nc = (r.shape[0] - 1) // 2 + 1
    out = np.zeros(nc, dtype=np.float64)
    cdef double[::1] c = out
    with nogil:
        for i in range(1, nc - 1):
            c[i] = 0.25 * r[2 * i - 1] + 0.5 * r[2 * i] + 0.25 * r[2 * i + 1]
    return out


def interpolate_1d(const double[::1] e):
    cdef Py_ssize_t i, nc = e.shape[0], nf = 2 * (e.shape[0] - 1) + 1
    out = np.zeros(nf, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for i in range(nc):
            o[2 * i] = e[i]
        for i in range(nc - 1):
            o[2 * i + 1] = 0.5 * (e[i] + e[i + 1])
    return out


# -- 2D Poisson on an (n x n) grid including the boundary ring ------------

def jacobi_2d(const double[:, ::1] u, const double[:, ::1] f, double h2, double omega):
    cdef Py_ssize_t i, j, n = u.shape[0]
    out = np.zeros((n, n), dtype=np.float64)
    cdef double[:, ::1] v = out
    with nogil:
        for i in range(1, n - 1):
            for j in range(1, n - 1):
                v[i, j] = (1.0 - omega) * u[i, j] + omega * 0.25 * (
                    u[i - 1, j] + u[i + 1, j] + u[i, j - 1] + u[i, j + 1] + h2 * f[i, j])
    return out


def residual_2d(const double[:, ::1] u, const double[:, ::1] f, double h2):
    cdef Py_ssize_t i, j, n = u.shape[0]
    out = np.zeros((n, n), dtype=np.float64)
    cdef double[:, ::1] r = out
    with nogil:
        for i in range(1, n - 1):
            for j in range(1, n - 1):
                r[i, j] = f[i, j] - (4.0 * u[i, j] - u[i - 1, j] - u[i + 1, j]
                                     - u[i, j - 1] - u[i, j + 1]) / h2
    return out


def restrict_2d(const double[:, ::1] r):
    cdef Py_ssize_t i, j, a, b, nc = (r.shape[0] - 1) // 2 + 1
    out = np.zeros((nc, nc), dtype=np.float64)
    cdef double[:, ::1] c = out
    with nogil:
        for i in range(1, nc - 1):
            a = 2 * i
            for j in range(1, nc - 1):
                b = 2 * j
                c[i, j] = (0.25 * r[a, b]
                           + 0.125 * (r[a - 1, b] + r[a + 1, b] + r[a, b - 1] + r[a, b + 1])
                           + 0.0625 * (r[a - 1, b - 1] + r[a - 1, b + 1]
                                       + r[a + 1, b - 1] + r[a + 1, b + 1]))
    return out


def interpolate_2d(const double[:, ::1] e):
    cdef Py_ssize_t i, j, nc = e.shape[0], nf = 2 * (e.shape[0] - 1) + 1
    out = np.zeros((nf, nf), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for i in range(nc):
            for j in range(nc):
                o[2 * i, 2 * j] = e[i, j]
        for i in range(nc):
            for j in range(nc - 1):
                o[2 * i, 2 * j + 1] = 0.5 * (e[i, j] + e[i, j + 1])
        for i in range(nc - 1):
            for j in range(nf):
                o[2 * i + 1, j] = 0.5 * (o[2 * i, j] + o[2 * i + 2, j])
    return out


# -- comparison ----------------------------------------------------------

def bytes_equal(cnp.ndarray a, cnp.ndarray b):
    """Bitwise equality of two C-contiguous arrays of equal byte length."""
    cdef Py_ssize_t nbytes = a.nbytes
    if b.nbytes != nbytes:
        return False
    return memcmp(cnp.PyArray_DATA(a), cnp.PyArray_DATA(b), nbytes) == 0


def first_mismatch_bits(const cnp.uint64_t[::1] a, const cnp.uint64_t[::1] b):
    """Index of the first differing 64-bit word, or -1."""
    cdef Py_ssize_t k, n = a.shape[0]
    cdef Py_ssize_t hit = -1
    with nogil:
        for k in range(n):
            if a[k] != b[k]:
                hit = k
                break
    return hit


def first_mismatch_tol(const double[::1] a, const double[::1] b, double eps):
    """Index of the first element with |a - b| > eps, or -1.

    Bitwise-identical elements always match, so identical NaNs compare equal.
    """
    cdef Py_ssize_t k, n = a.shape[0]
    cdef Py_ssize_t hit = -1
    with nogil:
        for k in range(n):
            if fabs(a[k] - b[k]) <= eps:
                continue
            if memcmp(&a[k], &b[k], sizeof(double)) == 0:
                continue
            hit = k
            break
    return hit
