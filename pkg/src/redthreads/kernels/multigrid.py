"""Geometric multigrid V-cycles for the Poisson equation ``-lap u = f``.

Grids include the zero Dirichlet boundary, so a 1D grid of ``n`` points has
``n - 2`` unknowns and ``h = 1 / (n - 1)``. Each V-cycle level runs weighted
Jacobi pre-smoothing, residual plus full-weighting restriction, a recursive
coarse correction, linear interpolation and post-smoothing. The three phase
kinds (relaxation, restriction, interpolation) are each one sphere. The
coarsest level is solved directly, outside any sphere.

By default a phase sphere compares the grid it produced. ``compare="checksum"``
compares only the sum of the grid values, which is cheaper but lets
compensating errors through and leaves the grid itself unchecked.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List

import numpy as np
import scipy.sparse.linalg as sla

from redthreads import core
from redthreads.errors import DimensionMismatch, GridTooCoarse
from redthreads.kernels.driver import SphereDriver
from redthreads.kernels.matrices import poisson_1d, poisson_2d
from redthreads.sphere import SphereSpec, Strength

__all__ = ["PoissonProblem", "MultigridResult", "multigrid_vcycle", "max_depth", "OMEGA"]

OMEGA = 2.0 / 3.0
PRE_SWEEPS = 2
POST_SWEEPS = 2

_OPS = {
    1: (core.jacobi_1d, core.residual_1d, core.restrict_1d, core.interpolate_1d),
    2: (core.jacobi_2d, core.residual_2d, core.restrict_2d, core.interpolate_2d),
}


def _specs(out_name):
    s = Strength.CORRECT
    return {
        "relax": SphereSpec("mg.relax", s, shared_vars=("f", "h2"), private_vars=("u",),
                            compare_vars=(out_name("u"),)),
        "restrict": SphereSpec("mg.restrict", s, shared_vars=("f", "h2"), private_vars=("u",),
                               compare_vars=(out_name("rc"),)),
        "interp": SphereSpec("mg.interpolate", s, shared_vars=("ec",), private_vars=("u",),
                             compare_vars=(out_name("u"),)),
    }


SPECS = {"grid": _specs(lambda n: n), "checksum": _specs(lambda n: "checksum")}


@dataclass(frozen=True, eq=False)
class PoissonProblem:
    """Right-hand side on a uniform grid of the unit interval or square."""

    f: np.ndarray

    def __post_init__(self):
        f = np.ascontiguousarray(self.f, dtype=np.float64)
        if f.ndim not in (1, 2) or (f.ndim == 2 and f.shape[0] != f.shape[1]):
            raise DimensionMismatch(f"need a 1-D or square 2-D grid, got shape {f.shape}")
        if f.shape[0] < 3:
            raise GridTooCoarse(f"grid of {f.shape[0]} points has no interior")
        object.__setattr__(self, "f", f)

    @property
    def dim(self) -> int:
        return self.f.ndim

    @property
    def n(self) -> int:
        return self.f.shape[0]

    @classmethod
    def sine(cls, n: int, dim: int = 1, modes=(1, 7, 31)) -> "PoissonProblem":
        """A smooth-plus-oscillatory right-hand side vanishing on the boundary."""
        t = np.linspace(0.0, 1.0, n)
        g = sum(np.sin(k * math.pi * t) for k in modes)
        f = g if dim == 1 else np.outer(g, g)
        f = np.array(f)
        _zero_boundary(f)
        return cls(f)


@dataclass
class MultigridResult:
    u: np.ndarray
    residual_history: List[float] = field(default_factory=list)

    @property
    def ratios(self) -> List[float]:
        h = self.residual_history
        return [h[k + 1] / h[k] for k in range(len(h) - 1) if h[k] > 0.0]


def _zero_boundary(a):
    a[0] = 0.0
    a[-1] = 0.0
    if a.ndim == 2:
        a[:, 0] = 0.0
        a[:, -1] = 0.0


def max_depth(n: int) -> int:
    """Deepest coarsening for ``n`` points: the largest d with 2**d dividing n - 1."""
    m = n - 1
    d = 0
    while m % 2 == 0 and m > 1:
        m //= 2
        d += 1
    return d


def _check_depth(n: int, depth: int):
    if depth < 1:
        raise GridTooCoarse("depth must be >= 1")
    if n < 2 ** depth + 1 or (n - 1) % (2 ** depth):
        raise GridTooCoarse(f"{n} points cannot be coarsened {depth} times "
                            f"(need n - 1 divisible by {2 ** depth})")


def _residual_norm(u, f, h2, dim) -> float:
    r = _OPS[dim][1](u, f, h2)
    return float(np.sqrt(np.sum(r * r)))


# -- phase units -------------------------------------------------------------

def _relax_unit(dim, sweeps, checksum):
    jac = _OPS[dim][0]

    def unit(_r, sh, pv):
        u, f, h2 = pv["u"], sh["f"], sh["h2"]
        for _ in range(sweeps):
            u = jac(u, f, h2, OMEGA)
        return {"checksum": float(u.sum()), "u": u} if checksum else {"u": u}
    return unit


def _restrict_unit(dim, checksum):
    _, res, restrict, _ = _OPS[dim]

    def unit(_r, sh, pv):
        rc = restrict(res(pv["u"], sh["f"], sh["h2"]))
        return {"checksum": float(rc.sum()), "rc": rc} if checksum else {"rc": rc}
    return unit


def _interp_unit(dim, checksum):
    interp = _OPS[dim][3]

    def unit(_r, sh, pv):
        u = pv["u"] + interp(sh["ec"])
        return {"checksum": float(u.sum()), "u": u} if checksum else {"u": u}
    return unit


class _Coarse:
    """Direct solver for the coarsest level, factored once."""

    def __init__(self, nc: int, dim: int, h2: float):
        m = nc - 2
        self.m = m
        self.dim = dim
        if m > 0:
            A = (poisson_1d(m) if dim == 1 else poisson_2d(m)).to_scipy().tocsc() / h2
            self.solve = sla.factorized(A)

    def __call__(self, f):
        e = np.zeros_like(f)
        if self.m <= 0:
            return e
        if self.dim == 1:
            e[1:-1] = self.solve(f[1:-1])
        else:
            e[1:-1, 1:-1] = self.solve(f[1:-1, 1:-1].ravel()).reshape(self.m, self.m)
        return e


def multigrid_vcycle(problem: PoissonProblem, depth: int, n_cycles: int,
                     driver: SphereDriver = None, u0=None, compare: str = "grid",
                     tol: float = 0.0) -> MultigridResult:
    """Run ``n_cycles`` V-cycles of the given depth; stop early below ``tol``.

    ``residual_history[k]`` is the residual 2-norm after k cycles.
    """
    if compare not in SPECS:
        raise ValueError(f"compare must be 'grid' or 'checksum', not {compare!r}")
    n, dim = problem.n, problem.dim
    _check_depth(n, depth)
    drv = driver or SphereDriver.standalone()
    checksum = compare == "checksum"
    specs = SPECS[compare]
    relax_pre = _relax_unit(dim, PRE_SWEEPS, checksum)
    relax_post = _relax_unit(dim, POST_SWEEPS, checksum)
    restrict = _restrict_unit(dim, checksum)
    interp = _interp_unit(dim, checksum)
    h2s = [((2 ** lvl) / (n - 1)) ** 2 for lvl in range(depth + 1)]
    coarse = _Coarse((n - 1) // 2 ** depth + 1, dim, h2s[depth])

    def vcycle(u, f, lvl):
        if lvl == depth:
            return coarse(f)
        h2 = h2s[lvl]
        u = drv(specs["relax"], relax_pre, {"u": u, "f": f, "h2": h2})["u"]
        rc = drv(specs["restrict"], restrict, {"u": u, "f": f, "h2": h2})["rc"]
        ec = vcycle(np.zeros_like(rc), rc, lvl + 1)
        u = drv(specs["interp"], interp, {"u": u, "ec": ec})["u"]
        return drv(specs["relax"], relax_post, {"u": u, "f": f, "h2": h2})["u"]

    f = problem.f
    u = np.zeros_like(f) if u0 is None else np.array(u0, dtype=np.float64)
    hist = [_residual_norm(u, f, h2s[0], dim)]
    for _ in range(n_cycles):
        if hist[-1] <= tol:
            break
        u = vcycle(u, f, 0)
        hist.append(_residual_norm(u, f, h2s[0], dim))
    if driver is None:
        drv.close()
    return MultigridResult(u, hist)
