"""Pure-Python/numpy implementations of the routines in ``_core.pyx``.

Reductions run in an explicit left-to-right loop so the results are
bitwise identical to the compiled versions. Stencil routines are
vectorised; each output element is a fixed expression of its neighbours,
so evaluation order does not change the bits.
"""

import numpy as np

BACKEND = "python"


def dot(a, b):
    if len(a) != len(b):
        raise ValueError("length mismatch")
    acc = 0.0
    for x, y in zip(a.tolist(), b.tolist()):
        acc = acc + x * y
    return acc


def dot_row_col(A, B, i, j):
    acc = 0.0
    for x, y in zip(A[i].tolist(), B[:, j].tolist()):
        acc = acc + x * y
    return acc


def gemm_row(A, B, i):
    row = A[i].tolist()
    out = np.empty(B.shape[1], dtype=np.float64)
    for j in range(B.shape[1]):
        acc = 0.0
        for x, y in zip(row, B[:, j].tolist()):
            acc = acc + x * y
        out[j] = acc
    return out


def csr_row_dot(row_ptr, col_idx, values, x, i):
    lo, hi = int(row_ptr[i]), int(row_ptr[i + 1])
    acc = 0.0
    for v, c in zip(values[lo:hi].tolist(), col_idx[lo:hi].tolist()):
        acc = acc + v * float(x[c])
    return acc


def csr_matvec(row_ptr, col_idx, values, x):
    n = len(row_ptr) - 1
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        out[i] = csr_row_dot(row_ptr, col_idx, values, x, i)
    return out


def jacobi_1d(u, f, h2, omega):
    v = np.zeros_like(u)
    v[1:-1] = (1.0 - omega) * u[1:-1] + omega * 0.5 * (u[:-2] + u[2:] + h2 * f[1:-1])
    return v


def residual_1d(u, f, h2):
    r = np.zeros_like(u)
    r[1:-1] = f[1:-1] - (2.0 * u[1:-1] - u[:-2] - u[2:]) / h2
    return r


def restrict_1d(r):
    nc = (len(r) - 1) // 2 + 1
    c = np.zeros(nc, dtype=np.float64)
    c[1:-1] = 0.25 * r[1:-2:2] + 0.5 * r[2:-1:2] + 0.25 * r[3::2]
    return c


def interpolate_1d(e):
    nf = 2 * (len(e) - 1) + 1
    o = np.zeros(nf, dtype=np.float64)
    o[::2] = e
    o[1::2] = 0.5 * (e[:-1] + e[1:])
    return o


def jacobi_2d(u, f, h2, omega):
    v = np.zeros_like(u)
    v[1:-1, 1:-1] = (1.0 - omega) * u[1:-1, 1:-1] + omega * 0.25 * (
        u[:-2, 1:-1] + u[2:, 1:-1] + u[1:-1, :-2] + u[1:-1, 2:] + h2 * f[1:-1, 1:-1])
    return v


def residual_2d(u, f, h2):
    r = np.zeros_like(u)
    r[1:-1, 1:-1] = f[1:-1, 1:-1] - (4.0 * u[1:-1, 1:-1] - u[:-2, 1:-1] - u[2:, 1:-1]
                                     - u[1:-1, :-2] - u[1:-1, 2:]) / h2
    return r


def restrict_2d(r):
    nc = (r.shape[0] - 1) // 2 + 1
    c = np.zeros((nc, nc), dtype=np.float64)
    ev = slice(2, -1, 2)
    lo = slice(1, -2, 2)
    hi = slice(3, None, 2)
    c[1:-1, 1:-1] = (0.25 * r[ev, ev]
                     + 0.125 * (r[lo, ev] + r[hi, ev] + r[ev, lo] + r[ev, hi])
                     + 0.0625 * (r[lo, lo] + r[lo, hi] + r[hi, lo] + r[hi, hi]))
    return c


def interpolate_2d(e):
    nf = 2 * (e.shape[0] - 1) + 1
    o = np.zeros((nf, nf), dtype=np.float64)
    o[::2, ::2] = e
    o[::2, 1::2] = 0.5 * (e[:, :-1] + e[:, 1:])
    o[1::2, :] = 0.5 * (o[0:-1:2, :] + o[2::2, :])
    return o


def bytes_equal(a, b):
    return a.nbytes == b.nbytes and a.tobytes() == b.tobytes()


def first_mismatch_bits(a, b):
    hits = np.flatnonzero(a != b)
    return int(hits[0]) if hits.size else -1


def first_mismatch_tol(a, b, eps):
    with np.errstate(invalid="ignore", over="ignore"):
        close = np.abs(a - b) <= eps
    same = a.view(np.uint64) == b.view(np.uint64)
    hits = np.flatnonzero(~(close | same))
    return int(hits[0]) if hits.size else -1
