"""DGEMM with one sphere per inner dot product, and CSR SpMV with one per row."""

from __future__ import annotations

import numpy as np

from redthreads import core
from redthreads.errors import DimensionMismatch
from redthreads.kernels.driver import SphereDriver
from redthreads.kernels.matrices import CsrMatrix, DenseMatrix
from redthreads.sphere import SphereSpec, Strength

__all__ = ["DGEMM_DOT", "DGEMM_ROW", "SPMV_ROW", "dgemm", "spmv"]

# Kernels request the strongest level; the runtime's ICV decides what runs.
DGEMM_DOT = SphereSpec("dgemm.dot", Strength.CORRECT, shared_vars=("A", "B"),
                       private_vars=("i", "j"), compare_vars=("c",))
DGEMM_ROW = SphereSpec("dgemm.row", Strength.CORRECT, shared_vars=("A", "B"),
                       private_vars=("i",), compare_vars=("row",))
SPMV_ROW = SphereSpec("spmv.row", Strength.CORRECT,
                      shared_vars=("row_ptr", "col_idx", "values", "x"),
                      private_vars=("i",), compare_vars=("y",))


def _dot_unit(_r, sh, pv, _dot=core.dot_row_col):
    return (_dot(sh["A"], sh["B"], pv["i"], pv["j"]),)


def _row_unit(_r, sh, pv, _row=core.gemm_row):
    return (_row(sh["A"], sh["B"], pv["i"]),)


def _spmv_unit(_r, sh, pv, _rd=core.csr_row_dot):
    return (_rd(sh["row_ptr"], sh["col_idx"], sh["values"], sh["x"], pv["i"]),)


def _as_array(m):
    return m.data if isinstance(m, DenseMatrix) else np.ascontiguousarray(m, dtype=np.float64)


def dgemm(A, B, driver: SphereDriver = None, granularity: str = "dot") -> np.ndarray:
    """C = A B. ``granularity`` is ``"dot"`` (one sphere per C[i, j]) or ``"row"``."""
    a, b = _as_array(A), _as_array(B)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionMismatch(f"cannot multiply {a.shape} by {b.shape}")
    drv = driver or SphereDriver.standalone()
    n, m = a.shape[0], b.shape[1]
    C = np.zeros((n, m))
    inp = {"A": a, "B": b}
    if granularity == "row":
        for i in range(n):
            inp["i"] = i
            C[i] = drv(DGEMM_ROW, _row_unit, inp)["row"]
    elif granularity == "dot":
        for i in range(n):
            inp["i"] = i
            row = C[i]
            for j in range(m):
                inp["j"] = j
                row[j] = drv(DGEMM_DOT, _dot_unit, inp)["c"]
    else:
        raise ValueError(f"granularity must be 'dot' or 'row', not {granularity!r}")
    if driver is None:
        drv.close()
    return C


def spmv(A: CsrMatrix, x, driver: SphereDriver = None) -> np.ndarray:
    """y = A x with one sphere per row; loop counter private, A and x shared."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.shape != (A.n_cols,):
        raise DimensionMismatch(f"x has shape {x.shape}, matrix is {A.shape}")
    drv = driver or SphereDriver.standalone()
    y = np.zeros(A.n_rows)
    inp = {"row_ptr": A.row_ptr, "col_idx": A.col_idx, "values": A.values, "x": x}
    for i in range(A.n_rows):
        inp["i"] = i
        y[i] = drv(SPMV_ROW, _spmv_unit, inp)["y"]
    if driver is None:
        drv.close()
    return y
