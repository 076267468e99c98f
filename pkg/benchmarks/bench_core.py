"""Compiled kernels against the pure-Python fallback.

    python benchmarks/bench_core.py [--repeat 5] [--json out.json] [--end-to-end]

Each inner loop is timed in both backends on the same inputs (best of
``--repeat``), and the outputs are checked for bitwise agreement first.
``--end-to-end`` also times a fault-free run of every kernel through the
runtime, once per backend, in a subprocess so the import-time backend
choice is honoured.
"""

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from redthreads import _fallback

try:
    from redthreads import _core
except ImportError:  # extension not built
    _core = None


def cases(rng):
    n = 256
    a, b = rng.standard_normal(n), rng.standard_normal(n)
    A, B = rng.standard_normal((48, 48)), rng.standard_normal((48, 48))
    import scipy.sparse as sp
    S = sp.random(n, n, density=0.03, random_state=1, format="csr") + sp.identity(n, format="csr")
    rp, ci, va = S.indptr.astype(np.int64), S.indices.astype(np.int64), S.data.astype(np.float64)
    u1, f1 = rng.standard_normal(129), rng.standard_normal(129)
    u2, f2 = rng.standard_normal((65, 65)), rng.standard_normal((65, 65))
    h2 = (1.0 / 128) ** 2
    return {
        "dot(256)": ("dot", (a, b)),
        "dot_row_col(48)": ("dot_row_col", (A, B, 3, 5)),
        "gemm_row(48)": ("gemm_row", (A, B, 7)),
        "csr_row_dot": ("csr_row_dot", (rp, ci, va, a, 11)),
        "csr_matvec(256)": ("csr_matvec", (rp, ci, va, a)),
        "jacobi_1d(129)": ("jacobi_1d", (u1, f1, h2, 2.0 / 3.0)),
        "residual_1d(129)": ("residual_1d", (u1, f1, h2)),
        "restrict_1d(129)": ("restrict_1d", (u1,)),
        "interpolate_1d(65)": ("interpolate_1d", (u1[:65].copy(),)),
        "jacobi_2d(65x65)": ("jacobi_2d", (u2, f2, h2, 2.0 / 3.0)),
        "residual_2d(65x65)": ("residual_2d", (u2, f2, h2)),
        "restrict_2d(65x65)": ("restrict_2d", (u2,)),
        "interpolate_2d(33x33)": ("interpolate_2d", (u2[:33, :33].copy(),)),
    }


def best_of(fn, args, repeat):
    number = 1
    while timeit.timeit(lambda: fn(*args), number=number) < 0.05 and number < 1 << 20:
        number *= 4
    return min(timeit.repeat(lambda: fn(*args), number=number, repeat=repeat)) / number


E2E = """
import json, time
from redthreads.core import BACKEND
from redthreads.kernels import KERNELS, SphereDriver
out = {}
for name, case in KERNELS.items():
    pb = case.build(case.default_size)
    best = float("inf")
    for _ in range(3):
        d = SphereDriver.standalone()
        t0 = time.perf_counter(); case.run(pb, d); best = min(best, time.perf_counter() - t0)
    out[name] = best
print(json.dumps({"backend": BACKEND, "times": out}))
"""


def end_to_end():
    res = {}
    for pure in ("0", "1"):
        env = dict(os.environ, REDTHREADS_PURE_PYTHON=pure)
        proc = subprocess.run([sys.executable, "-c", E2E], env=env, check=True,
                              capture_output=True, text=True)
        doc = json.loads(proc.stdout)
        res[doc["backend"]] = doc["times"]
    return res


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--json", metavar="PATH")
    p.add_argument("--end-to-end", action="store_true")
    args = p.parse_args(argv)
    if _core is None:
        sys.exit("compiled extension not built; run `pip install -e . --no-build-isolation`")

    rng = np.random.default_rng(0)
    rows = []
    print(f"{'kernel':24s} {'compiled':>12s} {'fallback':>12s} {'speedup':>8s}")
    for label, (name, fargs) in cases(rng).items():
        fc, fp = getattr(_core, name), getattr(_fallback, name)
        rc, rp = fc(*fargs), fp(*fargs)
        if not np.array_equal(np.asarray(rc), np.asarray(rp)):
            sys.exit(f"{label}: backends disagree")
        tc, tp = best_of(fc, fargs, args.repeat), best_of(fp, fargs, args.repeat)
        rows.append({"kernel": label, "compiled_s": tc, "fallback_s": tp, "speedup": tp / tc})
        print(f"{label:24s} {tc * 1e6:10.2f}us {tp * 1e6:10.2f}us {tp / tc:7.1f}x")

    doc = {"inner_loops": rows}
    if args.end_to_end:
        e2e = end_to_end()
        doc["end_to_end"] = e2e
        print(f"\n{'kernel run':24s} {'compiled':>12s} {'fallback':>12s} {'speedup':>8s}")
        for k in e2e["cython"]:
            tc, tp = e2e["cython"][k], e2e["python"][k]
            print(f"{k:24s} {tc * 1e3:10.2f}ms {tp * 1e3:10.2f}ms {tp / tc:7.1f}x")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(doc, fh, indent=2)


if __name__ == "__main__":
    main()
