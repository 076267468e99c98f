"""Backend selection for the numeric inner loops.

The compiled extension is used when it imports; otherwise the pure-Python
module takes its place. Set ``REDTHREADS_PURE_PYTHON=1`` to force the
fallback (the test-suite uses this to check the two agree).
"""

import os

if os.environ.get("REDTHREADS_PURE_PYTHON", "") not in ("", "0"):
    from redthreads import _fallback as _impl
else:
    try:
        from redthreads import _core as _impl
    except ImportError:  # extension not built
        from redthreads import _fallback as _impl

BACKEND = _impl.BACKEND

dot = _impl.dot
dot_row_col = _impl.dot_row_col
gemm_row = _impl.gemm_row
csr_row_dot = _impl.csr_row_dot
csr_matvec = _impl.csr_matvec
jacobi_1d = _impl.jacobi_1d
residual_1d = _impl.residual_1d
restrict_1d = _impl.restrict_1d
interpolate_1d = _impl.interpolate_1d
jacobi_2d = _impl.jacobi_2d
residual_2d = _impl.residual_2d
restrict_2d = _impl.restrict_2d
interpolate_2d = _impl.interpolate_2d
bytes_equal = _impl.bytes_equal
first_mismatch_bits = _impl.first_mismatch_bits
first_mismatch_tol = _impl.first_mismatch_tol

__all__ = [
    "BACKEND", "dot", "dot_row_col", "gemm_row", "csr_row_dot", "csr_matvec",
    "jacobi_1d", "residual_1d", "restrict_1d", "interpolate_1d",
    "jacobi_2d", "residual_2d", "restrict_2d", "interpolate_2d",
    "bytes_equal", "first_mismatch_bits", "first_mismatch_tol",
]
