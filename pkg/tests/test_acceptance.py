"""Acceptance criteria, one test each.

Every test records a single ``C<n> PASS|FAIL`` line (shown in the pytest
terminal summary, or on stdout when the file is run as a script) and then
asserts the criterion at its stated tolerance. Wall-clock budgets are
asserted too. Timing criteria use :func:`redthreads.bench.time_configs`:
interleaved rounds, times normalized by the static-Off baseline, and 95%
percentile-bootstrap intervals of the mean.
"""

import json
import math
import time
from collections import Counter

import numpy as np
import pytest

from redthreads import MATCH, Runtime, RuntimeConfig, SphereSpec, Strength
from redthreads.bench import Config, disjoint_below, time_configs
from redthreads.harness import (InjectionPlan, PolicyFlags, inject_corruption, run_campaign,
                                rate_sweep, strip_timing)
from redthreads.kernels import (KERNELS, PoissonProblem, SphereDriver, cg_solve, dgemm,
                                multigrid_vcycle, poisson_2d, random_dense, random_spd, spmv,
                                sscg_solve)
from redthreads.kernels import oracles
from redthreads.monitor import replay

pytestmark = pytest.mark.acceptance

ALL = ("dgemm", "spmv", "cg", "sscg", "multigrid")
DYN = PolicyFlags(dynamic=True)
TIMED_RUNS = 300  # at least the 100 required; short runs are noisy
OFF, DET, COR = Strength.OFF, Strength.DETECT, Strength.CORRECT


def fmt(s):
    return f"{s.mean:.3f} [{s.low:.3f}, {s.high:.3f}]"


def single_hits(run):
    """Spheres that received exactly one injected bit flip."""
    c = Counter(i["sphere"] for i in run.injections)
    return {s for s, k in c.items() if k == 1}


# -- 1 ------------------------------------------------------------------------------

def test_c1_detection_completeness(criterion):
    t0 = time.perf_counter()
    parts, total, silent = [], 0, 0
    for lazy in (False, True):
        mode_total = 0
        for k in ALL:
            rep = run_campaign(k, "detect", PolicyFlags(lazy=lazy), InjectionPlan(101, 2.0), 150,
                               baseline_runs=1)
            for run in rep.runs:
                hits = single_hits(run)
                mode_total += len(hits)
                silent += len(hits - set(run.detected_spheres))
                if not run.injections:
                    silent += run.failed
        parts.append(f"{'lazy' if lazy else 'eager'} {mode_total}")
        total += mode_total
    elapsed = time.perf_counter() - t0
    ok = silent == 0 and total >= 2000 and elapsed < 120
    assert criterion(1, ok, f"single-bit corruptions {' + '.join(parts)}, silent {silent}, "
                            f"{elapsed:.1f}s")


# -- 2 ------------------------------------------------------------------------------

def test_c2_correction(criterion):
    t0 = time.perf_counter()
    total, missed, wrong, runs_checked = 0, 0, 0, 0
    for k in ALL:
        rep = run_campaign(k, "correct", PolicyFlags(), InjectionPlan(202, 2.0), 150,
                           baseline_runs=1)
        for run in rep.runs:
            hits = single_hits(run)
            if len(hits) != len({i["sphere"] for i in run.injections}):
                continue  # two flips in one sphere can hit two replicas
            runs_checked += 1
            total += len(hits)
            missed += len(hits - set(run.corrected_spheres))
            wrong += run.failed
    elapsed = time.perf_counter() - t0
    ok = total >= 1000 and missed == 0 and wrong == 0 and elapsed < 180
    assert criterion(2, ok, f"{total} single-replica corruptions in {runs_checked} runs, "
                            f"uncorrected {missed}, wrong outputs {wrong}, {elapsed:.1f}s")


# -- 3 ------------------------------------------------------------------------------

def _compress(seq):
    return [s for k, s in enumerate(seq) if k == 0 or s != seq[k - 1]]


def test_c3_adaptation_state_machine(criterion):
    t0 = time.perf_counter()
    # one short episode: quiet, two events, quiet again
    a = replay([3, 4], [0, 1, 2, 3, 3.5, 4, 5, 6, 8, 10], DET)
    ok_a = a == [OFF, OFF, OFF, DET, DET, DET, DET, OFF, OFF, OFF] and _compress(a) == [OFF, DET, OFF]
    # a sustained burst of events keeps redundancy on
    b = replay([10 + 0.5 * k for k in range(40)], [0, 5] + [10 + 0.25 * k for k in range(80)], DET)
    ok_b = _compress(b) == [OFF, DET]
    zero = replay([], list(range(200)), COR)
    ok_zero = set(zero) == {OFF}
    rmt = 0
    for k in ALL:
        rep = run_campaign(k, "correct", DYN, InjectionPlan(0, 0.0), 1, size=KERNELS[k].default_size
                           if k != "dgemm" else 8, baseline_runs=1)
        rmt += sum(r.rmt_spheres for r in rep.runs)
    elapsed = time.perf_counter() - t0
    ok = ok_a and ok_b and ok_zero and rmt == 0 and elapsed < 1.0
    assert criterion(3, ok, f"trace a {[s.name for s in _compress(a)]}, trace b "
                            f"{[s.name for s in _compress(b)]}, zero-event RMT spheres {rmt}, "
                            f"{elapsed:.2f}s")


# -- 4 ------------------------------------------------------------------------------

def test_c4_overhead_ordering(criterion):
    t0 = time.perf_counter()
    ok, parts = True, []
    for k in ("dgemm", "spmv"):
        res = time_configs(k, [Config("serial", "detect", DYN, 0.0),
                               Config("dynamic", "detect", DYN, 1.0, "notify"),
                               Config("detect", "detect")], TIMED_RUNS)
        s, d, a = res.summary("serial"), res.summary("dynamic"), res.summary("detect")
        good = s.mean <= 1.05 and disjoint_below(d, a) and a.high < 2.0
        ok &= good
        parts.append(f"{k}: serial {fmt(s)} dynamic {fmt(d)} detect {fmt(a)}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 600
    assert criterion(4, ok, "; ".join(parts) + f"; {elapsed:.0f}s")


# -- 5 ------------------------------------------------------------------------------

RATES_C5 = (0, 1, 2, 4, 8)


def test_c5_monotone_in_rate(criterion):
    t0 = time.perf_counter()
    ok, parts = True, []
    for k in ALL:
        res = time_configs(k, [Config(f"r{r}", "detect", DYN, float(r), "notify")
                               for r in RATES_C5], TIMED_RUNS)
        sums = [res.summary(f"r{r}") for r in RATES_C5]
        drops = [(x, y) for x, y in zip(sums, sums[1:]) if y.mean < x.mean]
        good = len(drops) <= 1 and all(y.high >= x.low for x, y in drops)
        ok &= good
        parts.append(f"{k} " + "<".join(f"{s.mean:.2f}" for s in sums)
                     + (f" ({len(drops)} drop)" if drops else ""))
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 900
    assert criterion(5, ok, "; ".join(parts) + f"; {elapsed:.0f}s")


# -- 6 ------------------------------------------------------------------------------

def test_c6_lazy_benefit(criterion):
    t0 = time.perf_counter()
    res = time_configs("dgemm", [Config("eager", "detect"),
                                 Config("lazy", "detect", PolicyFlags(lazy=True))], TIMED_RUNS)
    e, lz = res.summary("eager"), res.summary("lazy")
    gain = 1.0 - lz.mean / e.mean
    elapsed = time.perf_counter() - t0
    ok = disjoint_below(lz, e) and elapsed < 600
    assert criterion(6, ok, f"dgemm eager {fmt(e)} lazy {fmt(lz)}, improvement {100 * gain:+.1f}%, "
                            f"{elapsed:.0f}s")


# -- 7 ------------------------------------------------------------------------------

def _square(_r, sh, pv):
    x = sh["x"]
    return {"y": x * x, "k": int(x.size)}


SQUARE = SphereSpec("acc.square", Strength.DETECT, shared_vars=("x",), compare_vars=("y", "k"))


def _outcomes(lazy, plan, xs, dispatch):
    rt = Runtime(RuntimeConfig(max_strength=DET, lazy=lazy, dispatch=dispatch,
                               buffer_capacity=16))

    def hook(seq, r, count, rec):
        if seq in plan and plan[seq][0] == r:
            _, var, bit, elem = plan[seq]
            return inject_corruption(rec, var, bit, element=elem if var == "y" else None)
        return rec

    rt.fault_hook = hook
    eager = []
    for x in xs:
        res = rt.execute_sphere(SQUARE, _square, {"x": x})
        eager.append((res.seq, res.outcome))
    report = rt.finalize()
    return Counter(report if lazy else eager)


def test_c7_lazy_eager_equivalence(criterion):
    t0 = time.perf_counter()
    ok, spheres, flips = True, 0, 0
    for seed in range(4):
        rng = np.random.default_rng([7, seed])
        n = 1000 + int(rng.integers(0, 500))
        xs = [rng.standard_normal(int(rng.integers(1, 8))) for _ in range(n)]
        plan = {}
        for seq in rng.choice(n, size=int(rng.integers(50, 250)), replace=False):
            var = "y" if rng.random() < 0.8 else "k"
            plan[int(seq)] = (int(rng.integers(2)), var, int(rng.integers(64)),
                              int(rng.integers(xs[seq].size)))
        for dispatch in ("inline", "threads"):
            lazy, eager = _outcomes(True, plan, xs, dispatch), _outcomes(False, plan, xs, dispatch)
            bad = sum(c for (_, o), c in eager.items() if o is not MATCH)
            ok &= lazy == eager and bad == len(plan)
        spheres += n
        flips += len(plan)
    # the same comparison on a real kernel, through the campaign harness
    for lazy_run, eager_run in zip(
            run_campaign("spmv", "detect", PolicyFlags(lazy=True), InjectionPlan(5, 4.0), 20,
                         size=64, baseline_runs=1).runs,
            run_campaign("spmv", "detect", PolicyFlags(), InjectionPlan(5, 4.0), 20,
                         size=64, baseline_runs=1).runs):
        ok &= Counter(lazy_run.detected_spheres) == Counter(eager_run.detected_spheres)
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 60
    assert criterion(7, ok, f"{spheres} spheres, {flips} corruptions x 2 dispatch modes, "
                            f"plus 20 spmv runs; {elapsed:.1f}s")


# -- 8 ------------------------------------------------------------------------------

def test_c8_tmr_ceiling(criterion):
    t0 = time.perf_counter()
    ok, parts = True, []
    for k in ALL:
        res = time_configs(k, [Config("correct", "correct"),
                               Config("dynamic", "correct", DYN, 1.0, "notify")], TIMED_RUNS)
        c, d = res.summary("correct"), res.summary("dynamic")
        good = c.high < 3.0 and disjoint_below(d, c)
        ok &= good
        parts.append(f"{k} correct {fmt(c)} dynamic {fmt(d)}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 600
    assert criterion(8, ok, "; ".join(parts) + f"; {elapsed:.0f}s")


# -- 9 ------------------------------------------------------------------------------

SWEEP_RATES = (0.5, 1, 2, 4, 8, 16, 32, 64)


def _rating(x):
    return "inf" if math.isinf(x) else f"{x:.3g}"


def test_c9_robustness_ordering(criterion):
    t0 = time.perf_counter()
    ok, parts = True, []
    configs = (("off", PolicyFlags()), ("detect", PolicyFlags(recovery="reexecute")),
               ("correct", PolicyFlags(recovery="reexecute")))
    for k in ALL:
        off, det, cor = (rate_sweep(k, s, f, SWEEP_RATES, 40, seed=3, baseline_runs=1)[2]
                         for s, f in configs)
        good = cor >= det >= off and (cor > det or det > off)
        ok &= good
        parts.append(f"{k} {_rating(cor)}>={_rating(det)}>={_rating(off)}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 600
    assert criterion(9, ok, "; ".join(parts) + f"; {elapsed:.0f}s")


# -- 10 -----------------------------------------------------------------------------

def test_c10_kernel_oracles(criterion):
    t0 = time.perf_counter()
    checks = {}
    for s in ("off", "detect", "correct"):
        def drv():
            return SphereDriver.standalone(s)

        A, B = random_dense(32, 1).data, random_dense(32, 2).data
        checks[f"dgemm/{s}"] = np.array_equal(dgemm(A, B, drv()), oracles.naive_matmul(A, B))
        M = random_spd(256, 0.03, 3)
        x = np.random.default_rng(3).standard_normal(256)
        checks[f"spmv/{s}"] = np.array_equal(spmv(M, x, drv()),
                                             oracles.dense_matvec(M.to_dense(), x))
        for label, S in (("spd64", random_spd(64, 0.1, 4)), ("spd256", random_spd(256, 0.03, 5)),
                         ("poisson2d", poisson_2d(15))):
            b = np.random.default_rng(6).standard_normal(S.n_rows)
            x_star = oracles.direct_solve(S.to_dense(), b)
            for name, solver in (("cg", cg_solve), ("sscg", sscg_solve)):
                xs = solver(S, b, driver=drv()).x
                err = np.linalg.norm(xs - x_star) / np.linalg.norm(x_star)
                checks[f"{name}/{label}/{s}"] = err <= 1e-8
        ratios = multigrid_vcycle(PoissonProblem.sine(129), 5, 8, drv()).ratios
        checks[f"multigrid/{s}"] = len(ratios) == 8 and max(ratios) < 0.2
    worst = max(multigrid_vcycle(PoissonProblem.sine(129), 5, 8).ratios)
    elapsed = time.perf_counter() - t0
    failed = [k for k, v in checks.items() if not v]
    ok = not failed and elapsed < 60
    assert criterion(10, ok, f"{len(checks) - len(failed)}/{len(checks)} oracle checks, "
                             f"worst multigrid ratio {worst:.3f}, {elapsed:.1f}s"
                             + (f", failed {failed}" if failed else ""))


# -- 11 -----------------------------------------------------------------------------

def test_c11_reproducibility(criterion):
    t0 = time.perf_counter()
    ok, n = True, 0
    for k in ALL:
        for s, flags in (("detect", PolicyFlags()), ("correct", PolicyFlags()),
                         ("detect", PolicyFlags(lazy=True, recovery="reexecute")),
                         ("detect", DYN)):
            docs = [json.dumps(strip_timing(run_campaign(k, s, flags, InjectionPlan(11, 3.0), 10,
                                                         baseline_runs=1).to_json()),
                               sort_keys=True) for _ in range(2)]
            ok &= docs[0] == docs[1]
            n += 1
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 60
    assert criterion(11, ok, f"{n} campaign pairs identical modulo timing, {elapsed:.1f}s")


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-s"]))
