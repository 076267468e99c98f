"""Benchmark kernels, each paired with an independent oracle.

``KERNELS`` maps a kernel name to a :class:`KernelCase`, which is what the
fault harness and the CLI drive. Problem sizes are desk-scale choices of
ours; nothing here reproduces the original benchmark dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Dict, Optional

import numpy as np

from redthreads.kernels.cg import SolverState, cg_solve, sscg_solve
from redthreads.kernels.dense import dgemm, spmv
from redthreads.kernels.driver import SphereDriver
from redthreads.kernels.matrices import (CsrMatrix, DenseMatrix, poisson_1d, poisson_2d,
                                         random_dense, random_spd, read_matrix_market)
from redthreads.kernels.multigrid import (MultigridResult, PoissonProblem, max_depth,
                                          multigrid_vcycle)
from redthreads.kernels import oracles

__all__ = [
    "KernelCase", "KERNELS", "get_kernel", "SphereDriver", "CsrMatrix", "DenseMatrix",
    "SolverState", "PoissonProblem", "MultigridResult", "dgemm", "spmv", "cg_solve",
    "sscg_solve", "multigrid_vcycle", "random_dense", "random_spd", "poisson_1d", "poisson_2d",
    "read_matrix_market", "max_depth",
]

SOLVER_TOL = 1e-10
SOLVER_RTOL = 1e-8
MG_RTOL = 1e-9


@dataclass(frozen=True)
class KernelCase:
    """How to build, run and check one kernel.

    ``build(size, seed, matrix_path)`` makes a problem; ``run(problem,
    driver, **options)`` returns the final output array; ``reference``
    computes the oracle answer without the runtime; ``matches`` applies
    the kernel's tolerance.
    """

    name: str
    default_size: int
    build: Callable[..., Any]
    run: Callable[..., np.ndarray]
    reference: Callable[[Any], np.ndarray]
    matches: Callable[[np.ndarray, np.ndarray], bool]
    tolerance: str


def _exact(out, ref) -> bool:
    return out.shape == ref.shape and bool(np.array_equal(out, ref))


def _rel(rtol):
    def check(out, ref) -> bool:
        if out.shape != ref.shape or not np.all(np.isfinite(out)):
            return False
        scale = np.linalg.norm(ref)
        return bool(np.linalg.norm(out - ref) <= rtol * (scale if scale > 0 else 1.0))
    return check


def _max_rel(rtol):
    def check(out, ref) -> bool:
        if out.shape != ref.shape or not np.all(np.isfinite(out)):
            return False
        scale = np.abs(ref).max() if ref.size else 0.0
        return bool(np.abs(out - ref).max(initial=0.0) <= rtol * (scale if scale > 0 else 1.0))
    return check


# -- dgemm ---------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DgemmProblem:
    A: np.ndarray
    B: np.ndarray


def _dgemm_build(size, seed=0, matrix=None):
    return DgemmProblem(random_dense(size, seed).data, random_dense(size, seed + 1).data)


def _dgemm_run(pb, driver, granularity="dot"):
    return dgemm(pb.A, pb.B, driver, granularity=granularity)


# -- sparse problems -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SparseProblem:
    A: CsrMatrix
    x: np.ndarray  # the input vector for spmv, the right-hand side for solvers


def _sparse_build(size, seed=0, matrix=None):
    if matrix is not None:
        A = read_matrix_market(matrix)
    else:
        A = random_spd(size, density=min(1.0, 8.0 / size), seed=seed)
    rng = np.random.default_rng([seed, 1])
    return SparseProblem(A, rng.standard_normal(A.n_cols))


def _spmv_run(pb, driver):
    return spmv(pb.A, pb.x, driver)


def _spmv_ref(pb):
    return oracles.dense_matvec(pb.A.to_dense(), pb.x)


def _cg_run(pb, driver, tol=SOLVER_TOL):
    return cg_solve(pb.A, pb.x, tol=tol, driver=driver).x


def _sscg_run(pb, driver, tol=SOLVER_TOL, correction_period=8):
    return sscg_solve(pb.A, pb.x, tol=tol, correction_period=correction_period, driver=driver).x


def _solve_ref(pb):
    return oracles.direct_solve(pb.A.to_dense(), pb.x)


# -- multigrid ---------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MultigridProblem:
    problem: PoissonProblem
    depth: int
    n_cycles: int


def _mg_build(size, seed=0, matrix=None, dim=1, depth=5, n_cycles=8):
    pb = PoissonProblem.sine(size, dim)
    return MultigridProblem(pb, min(depth, max_depth(size)), n_cycles)


def _mg_run(pb, driver, compare="grid"):
    return multigrid_vcycle(pb.problem, pb.depth, pb.n_cycles, driver, compare=compare).u


def _mg_ref(pb):
    return oracles.reference_multigrid(pb.problem.f, pb.depth, pb.n_cycles)[0]


KERNELS: Dict[str, KernelCase] = {
    "dgemm": KernelCase("dgemm", 24, _dgemm_build, _dgemm_run,
                        lambda pb: oracles.naive_matmul(pb.A, pb.B), _exact, "exact"),
    "spmv": KernelCase("spmv", 512, _sparse_build, _spmv_run, _spmv_ref, _exact, "exact"),
    "cg": KernelCase("cg", 128, _sparse_build, _cg_run, _solve_ref, _rel(SOLVER_RTOL),
                     f"relative 2-norm error <= {SOLVER_RTOL:g}"),
    "sscg": KernelCase("sscg", 128, _sparse_build, _sscg_run, _solve_ref, _rel(SOLVER_RTOL),
                       f"relative 2-norm error <= {SOLVER_RTOL:g}"),
    "multigrid": KernelCase("multigrid", 129, _mg_build, _mg_run, _mg_ref, _max_rel(MG_RTOL),
                            f"max-norm error <= {MG_RTOL:g} relative"),
}


def get_kernel(name) -> KernelCase:
    if isinstance(name, KernelCase):
        return name
    try:
        return KERNELS[name]
    except KeyError:
        raise KeyError(f"unknown kernel {name!r}; choose from {', '.join(KERNELS)}") from None
