"""Conjugate gradient, and self-stabilizing CG whose correction step is protected.

Plain CG puts every iteration in a sphere and compares the residual norm;
the host uses that compared norm for its stopping test. Self-stabilizing CG
runs ordinary iterations unprotected and every ``correction_period``
iterations executes a correction step inside a sphere: the residual is
recomputed from scratch as ``b - A x`` and the search direction is
re-derived from it, which flushes any error picked up in between.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from redthreads import core
from redthreads.errors import Breakdown, DimensionMismatch
from redthreads.kernels.driver import SphereDriver
from redthreads.kernels.matrices import CsrMatrix
from redthreads.sphere import SphereSpec, Strength

__all__ = ["SolverState", "CG_ITERATION", "SSCG_CORRECTION", "cg_solve", "sscg_solve"]

DEFAULT_CORRECTION_PERIOD = 8

# The units never write into their inputs (every update builds a new array),
# so the iterate vectors are shared read-only and need no per-replica copy.
CG_ITERATION = SphereSpec("cg.iteration", Strength.CORRECT,
                          shared_vars=("row_ptr", "col_idx", "values", "x", "r", "p", "rr"),
                          compare_vars=("rnorm",))
SSCG_CORRECTION = SphereSpec("sscg.correction", Strength.CORRECT,
                             shared_vars=("row_ptr", "col_idx", "values", "b", "x", "p"),
                             compare_vars=("x", "rnorm"))


@dataclass
class SolverState:
    x: np.ndarray
    r: np.ndarray
    p: np.ndarray
    iterations: int = 0
    history: List[float] = field(default_factory=list)
    converged: bool = False
    corrections: int = 0

    @property
    def residual_norm(self) -> float:
        return self.history[-1] if self.history else math.nan


_BROKEN = {"rnorm": math.nan, "breakdown": True}


def _cg_unit(_r, sh, pv):
    rp, ci, va = sh["row_ptr"], sh["col_idx"], sh["values"]
    x, r, p, rr = sh["x"], sh["r"], sh["p"], sh["rr"]
    Ap = core.csr_matvec(rp, ci, va, p)
    pAp = core.dot(p, Ap)
    if not pAp > 0.0:
        return _BROKEN
    alpha = rr / pAp
    x = x + alpha * p
    r = r - alpha * Ap
    rr_new = core.dot(r, r)
    p = r + (rr_new / rr) * p
    return {"rnorm": math.sqrt(rr_new), "x": x, "r": r, "p": p, "rr": rr_new,
            "breakdown": False}


def _sscg_unit(_r, sh, pv):
    rp, ci, va, b = sh["row_ptr"], sh["col_idx"], sh["values"], sh["b"]
    x, p = sh["x"], sh["p"]
    r = b - core.csr_matvec(rp, ci, va, x)
    Ap = core.csr_matvec(rp, ci, va, p)
    pAp = core.dot(p, Ap)
    if not pAp > 0.0:
        return _BROKEN
    x = x + (core.dot(r, p) / pAp) * p
    r = b - core.csr_matvec(rp, ci, va, x)
    p = r + (-core.dot(r, Ap) / pAp) * p
    rr = core.dot(r, r)
    return {"rnorm": math.sqrt(rr), "x": x, "r": r, "p": p, "rr": rr, "breakdown": False}


def _setup(A: CsrMatrix, b, x0):
    if A.n_rows != A.n_cols:
        raise DimensionMismatch(f"matrix is {A.shape}, not square")
    b = np.ascontiguousarray(b, dtype=np.float64)
    if b.shape != (A.n_rows,):
        raise DimensionMismatch(f"b has shape {b.shape}, matrix is {A.shape}")
    x = np.zeros(A.n_rows) if x0 is None else np.array(x0, dtype=np.float64)
    r = b - A.matvec(x)
    return b, x, r


def cg_solve(A: CsrMatrix, b, tol: float = 1e-10, max_iter: Optional[int] = None,
             x0=None, driver: SphereDriver = None) -> SolverState:
    """Solve A x = b for SPD ``A`` until ``||r|| <= tol * ||b||``."""
    b, x, r = _setup(A, b, x0)
    max_iter = 10 * A.n_rows if max_iter is None else max_iter
    drv = driver or SphereDriver.standalone()
    bnorm = math.sqrt(core.dot(b, b))
    rr = core.dot(r, r)
    rnorm = math.sqrt(rr)
    st = SolverState(x, r, r.copy(), 0, [rnorm])
    inp = {"row_ptr": A.row_ptr, "col_idx": A.col_idx, "values": A.values}
    p = st.p
    while rnorm > tol * bnorm and st.iterations < max_iter:
        inp["x"], inp["r"], inp["p"], inp["rr"] = x, r, p, rr
        out = drv(CG_ITERATION, _cg_unit, inp)
        if out["breakdown"]:
            raise Breakdown(f"p^T A p <= 0 at iteration {st.iterations}")
        x, r, p, rr, rnorm = out["x"], out["r"], out["p"], out["rr"], out["rnorm"]
        st.iterations += 1
        st.history.append(rnorm)
    st.x, st.r, st.p = x, r, p
    st.converged = rnorm <= tol * bnorm
    if driver is None:
        drv.close()
    return st


def sscg_solve(A: CsrMatrix, b, tol: float = 1e-10,
               correction_period: int = DEFAULT_CORRECTION_PERIOD,
               max_iter: Optional[int] = None, x0=None, driver: SphereDriver = None,
               perturb: Optional[Callable[[int, np.ndarray], np.ndarray]] = None) -> SolverState:
    """Self-stabilizing CG; only the periodic correction step is a sphere.

    ``perturb(iteration, x)`` may return a modified iterate after any
    unprotected iteration; tests use it to inject errors between corrections.
    Convergence is only declared on the true residual of a correction step.
    """
    if correction_period < 1:
        raise ValueError("correction_period must be >= 1")
    b, x, r = _setup(A, b, x0)
    max_iter = 10 * A.n_rows if max_iter is None else max_iter
    drv = driver or SphereDriver.standalone()
    rp, ci, va = A.row_ptr, A.col_idx, A.values
    bnorm = math.sqrt(core.dot(b, b))
    rr = core.dot(r, r)
    st = SolverState(x, r, r.copy(), 0, [math.sqrt(rr)])
    p = st.p
    inp = {"row_ptr": rp, "col_idx": ci, "values": va, "b": b}
    target = tol * bnorm
    if math.sqrt(rr) <= target:
        st.converged = True
    while not st.converged and st.iterations < max_iter:
        k = st.iterations + 1
        if k % correction_period == 0 or math.sqrt(rr) <= target:
            inp["x"], inp["p"] = x, p
            out = drv(SSCG_CORRECTION, _sscg_unit, inp)
            if out["breakdown"]:
                raise Breakdown(f"p^T A p <= 0 in correction at iteration {k}")
            x, r, p, rr = out["x"], out["r"], out["p"], out["rr"]
            st.corrections += 1
            st.history.append(out["rnorm"])
            st.converged = out["rnorm"] <= target
        else:
            Ap = core.csr_matvec(rp, ci, va, p)
            pAp = core.dot(p, Ap)
            if not pAp > 0.0:
                raise Breakdown(f"p^T A p <= 0 at iteration {k}")
            alpha = rr / pAp
            x = x + alpha * p
            r = r - alpha * Ap
            rr_new = core.dot(r, r)
            p = r + (rr_new / rr) * p
            rr = rr_new
            if perturb is not None:
                x = perturb(k, x)
            st.history.append(math.sqrt(rr))
        st.iterations = k
    st.x, st.r, st.p = x, r, p
    if driver is None:
        drv.close()
    return st
