"""Reference implementations that share no code with the protected kernels."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as sla

__all__ = ["naive_matmul", "dense_matvec", "direct_solve", "reference_multigrid",
           "poisson_direct"]


def naive_matmul(A, B) -> np.ndarray:
    """Triple loop in plain Python floats, summing over k in order."""
    a = np.asarray(A, dtype=np.float64).tolist()
    b = np.asarray(B, dtype=np.float64)
    bt = b.T.tolist()
    C = np.zeros((len(a), b.shape[1]))
    for i, row in enumerate(a):
        for j, col in enumerate(bt):
            acc = 0.0
            for x, y in zip(row, col):
                acc = acc + x * y
            C[i, j] = acc
    return C


def dense_matvec(A_dense, x) -> np.ndarray:
    """Row-by-row dense product in plain Python, zeros included."""
    out = []
    xs = np.asarray(x, dtype=np.float64).tolist()
    for row in np.asarray(A_dense, dtype=np.float64).tolist():
        acc = 0.0
        for a, v in zip(row, xs):
            acc = acc + a * v
        out.append(acc)
    return np.array(out)


def direct_solve(A_dense, b) -> np.ndarray:
    return np.linalg.solve(np.asarray(A_dense, dtype=np.float64), np.asarray(b, dtype=np.float64))


# -- multigrid reference, written with sparse matrices over interior unknowns --

def _lap(m: int, dim: int, h2: float):
    if m <= 1:
        t = sp.csr_matrix(np.full((m, m), 2.0))
    else:
        t = sp.diags([-1.0, 2.0, -1.0], [-1, 0, 1], shape=(m, m), format="csr")
    if dim == 2:
        eye = sp.identity(m, format="csr")
        t = sp.kron(eye, t) + sp.kron(t, eye)
    return sp.csr_matrix(t / h2)


def _restriction(m_fine: int, dim: int):
    m_c = (m_fine - 1) // 2
    r = sp.lil_matrix((m_c, m_fine))
    for i in range(m_c):
        r[i, 2 * i] = 0.25
        r[i, 2 * i + 1] = 0.5
        r[i, 2 * i + 2] = 0.25
    r = sp.csr_matrix(r)
    return sp.csr_matrix(sp.kron(r, r)) if dim == 2 else r


def _interior(a, dim):
    return (a[1:-1] if dim == 1 else a[1:-1, 1:-1]).ravel()


def _embed(v, n, dim):
    out = np.zeros((n,) * dim)
    m = n - 2
    if dim == 1:
        out[1:-1] = v
    else:
        out[1:-1, 1:-1] = v.reshape(m, m)
    return out


def reference_multigrid(f, depth: int, n_cycles: int, omega: float = 2.0 / 3.0,
                        pre: int = 2, post: int = 2):
    """V-cycles in matrix form: Jacobi ``u += omega D^-1 (f - A u)``,
    ``R`` full weighting and ``P = 2^dim R^T``. Returns (u on the full grid,
    residual 2-norm history)."""
    f = np.asarray(f, dtype=np.float64)
    dim, n = f.ndim, f.shape[0]
    ms = [(n - 1) // 2 ** lvl - 1 for lvl in range(depth + 1)]
    h2s = [((2 ** lvl) / (n - 1)) ** 2 for lvl in range(depth + 1)]
    As = [_lap(m, dim, h2) for m, h2 in zip(ms, h2s)]
    Rs = [_restriction(ms[lvl], dim) for lvl in range(depth)]
    Ps = [(2 ** dim) * R.T.tocsr() for R in Rs]
    dinv = [1.0 / A.diagonal() for A in As]

    def cycle(u, rhs, lvl):
        if lvl == depth:
            if ms[lvl] <= 0:
                return np.zeros_like(rhs)
            return sla.spsolve(As[lvl].tocsc(), rhs)
        A = As[lvl]
        for _ in range(pre):
            u = u + omega * dinv[lvl] * (rhs - A @ u)
        rc = Rs[lvl] @ (rhs - A @ u)
        u = u + Ps[lvl] @ cycle(np.zeros(rc.shape), rc, lvl + 1)
        for _ in range(post):
            u = u + omega * dinv[lvl] * (rhs - A @ u)
        return u

    rhs = _interior(f, dim)
    u = np.zeros_like(rhs)
    hist = [float(np.linalg.norm(rhs - As[0] @ u))]
    for _ in range(n_cycles):
        u = cycle(u, rhs, 0)
        hist.append(float(np.linalg.norm(rhs - As[0] @ u)))
    return _embed(u, n, dim), hist


def poisson_direct(f) -> np.ndarray:
    """Exact discrete solution of the Poisson problem on the full grid."""
    f = np.asarray(f, dtype=np.float64)
    dim, n = f.ndim, f.shape[0]
    A = _lap(n - 2, dim, (1.0 / (n - 1)) ** 2)
    return _embed(sla.spsolve(A.tocsc(), _interior(f, dim)), n, dim)
