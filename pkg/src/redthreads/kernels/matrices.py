"""Dense and CSR matrix containers, synthetic generators and Matrix Market input."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.sparse as sp

from redthreads import core
from redthreads.errors import DimensionMismatch

__all__ = [
    "DenseMatrix", "CsrMatrix", "random_dense", "poisson_1d", "poisson_2d", "random_spd",
    "read_matrix_market",
]


@dataclass(frozen=True, eq=False)
class DenseMatrix:
    """Row-major 64-bit matrix."""

    data: np.ndarray

    def __post_init__(self):
        a = np.ascontiguousarray(self.data, dtype=np.float64)
        if a.ndim != 2:
            raise DimensionMismatch(f"expected a 2-D array, got {a.ndim}-D")
        object.__setattr__(self, "data", a)

    @property
    def n_rows(self) -> int:
        return self.data.shape[0]

    @property
    def n_cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self):
        return self.data.shape


@dataclass(frozen=True, eq=False)
class CsrMatrix:
    """Compressed sparse row storage with int64 indices."""

    n_rows: int
    n_cols: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        rp = np.ascontiguousarray(self.row_ptr, dtype=np.int64)
        ci = np.ascontiguousarray(self.col_idx, dtype=np.int64)
        va = np.ascontiguousarray(self.values, dtype=np.float64)
        if rp.shape != (self.n_rows + 1,):
            raise DimensionMismatch(f"row_ptr has length {rp.shape[0]}, expected {self.n_rows + 1}")
        if rp[0] != 0 or np.any(np.diff(rp) < 0):
            raise ValueError("row_ptr must start at 0 and be nondecreasing")
        if rp[-1] != ci.shape[0] or ci.shape != va.shape:
            raise DimensionMismatch("col_idx/values length disagrees with row_ptr[-1]")
        if ci.size and (ci.min() < 0 or ci.max() >= self.n_cols):
            raise ValueError("column index out of range")
        object.__setattr__(self, "row_ptr", rp)
        object.__setattr__(self, "col_idx", ci)
        object.__setattr__(self, "values", va)

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self) -> int:
        return int(self.row_ptr[-1])

    @classmethod
    def from_scipy(cls, m) -> "CsrMatrix":
        m = sp.csr_matrix(m)
        m.sort_indices()
        return cls(m.shape[0], m.shape[1], m.indptr, m.indices, m.data)

    @classmethod
    def from_dense(cls, a) -> "CsrMatrix":
        return cls.from_scipy(sp.csr_matrix(np.asarray(a, dtype=np.float64)))

    def to_scipy(self):
        return sp.csr_matrix((self.values, self.col_idx, self.row_ptr), shape=self.shape)

    def to_dense(self) -> np.ndarray:
        return self.to_scipy().toarray()

    def matvec(self, x) -> np.ndarray:
        """Unprotected y = A x, rows summed in storage order."""
        x = np.ascontiguousarray(x, dtype=np.float64)
        if x.shape != (self.n_cols,):
            raise DimensionMismatch(f"x has shape {x.shape}, matrix is {self.shape}")
        return core.csr_matvec(self.row_ptr, self.col_idx, self.values, x)


def random_dense(n: int, seed: int = 0, m: int = None) -> DenseMatrix:
    rng = np.random.default_rng(seed)
    return DenseMatrix(rng.uniform(-1.0, 1.0, size=(n, n if m is None else m)))


def _tridiag(n: int):
    if n == 1:
        return sp.csr_matrix([[2.0]])
    return sp.diags([-1.0, 2.0, -1.0], [-1, 0, 1], shape=(n, n))


def poisson_1d(n: int) -> CsrMatrix:
    """tridiag(-1, 2, -1) of order n."""
    return CsrMatrix.from_scipy(_tridiag(n))


def poisson_2d(m: int) -> CsrMatrix:
    """5-point Laplacian on an m x m interior grid (order m*m)."""
    t = _tridiag(m)
    eye = sp.identity(m)
    return CsrMatrix.from_scipy(sp.kron(eye, t) + sp.kron(t, eye))


def random_spd(n: int, density: float = 0.05, seed: int = 0) -> CsrMatrix:
    """Sparse, strictly diagonally dominant symmetric matrix (hence SPD).

    The diagonal margin keeps the condition number small, so CG converges
    in a few dozen iterations at any desk-scale size.
    """
    rng = np.random.default_rng(seed)
    r = sp.random(n, n, density=density, random_state=rng, data_rvs=lambda k: rng.uniform(-1, 1, k))
    s = (r + r.T) * 0.5
    s.setdiag(0.0)
    s.eliminate_zeros()
    rowsum = np.asarray(abs(s).sum(axis=1)).ravel()
    return CsrMatrix.from_scipy(s + sp.diags(rowsum + 1.0))


def read_matrix_market(path) -> CsrMatrix:
    m = scipy.io.mmread(str(path))
    if not sp.issparse(m):
        m = sp.csr_matrix(m)
    return CsrMatrix.from_scipy(m.astype(np.float64))
