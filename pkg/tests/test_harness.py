import json
import math
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from redthreads import OutputRecord
from redthreads.errors import BitOutOfRange, EmptySweep, UnknownVariable
from redthreads.harness import (InjectionKind, InjectionPlan, PolicyFlags, inject_corruption,
                                payload_width, rate_sweep, robustness_rating, run_campaign,
                                strip_timing)


def rec(**vals):
    return OutputRecord("s", 0, tuple(vals.items()), 0.0)


def bits(x: float) -> int:
    return struct.unpack("<Q", struct.pack("<d", x))[0]


class TestInjectCorruption:
    def test_int_bit0(self):
        assert inject_corruption(rec(v=4), "v", 0).get("v") == 5

    def test_involution(self):
        r = rec(v=2.5, w=np.arange(4.0))
        for var, kw in (("v", {}), ("w", {"element": 2})):
            twice = inject_corruption(inject_corruption(r, var, 17, **kw), var, 17, **kw)
            assert np.asarray(twice.get(var)).tobytes() == np.asarray(r.get(var)).tobytes()

    def test_sign_bit_of_one(self):
        out = inject_corruption(rec(v=1.0), "v", 63).get("v")
        assert bits(out) == bits(1.0) ^ (1 << 63)
        assert out == -1.0

    def test_exactly_one_bit_in_array(self):
        a = np.arange(8.0)
        out = inject_corruption(rec(w=a), "w", 5, rng=np.random.default_rng(0)).get("w")
        diff = np.bitwise_xor(a.view(np.uint64), out.view(np.uint64))
        assert np.count_nonzero(diff) == 1 and int(diff[diff != 0][0]) == 1 << 5
        assert a[0] == 0.0 and a[7] == 7.0  # input untouched

    def test_numpy_scalar_and_int_array(self):
        assert inject_corruption(rec(v=np.int32(4)), "v", 1).get("v") == 6
        out = inject_corruption(rec(w=np.array([1, 2], dtype=np.int64)), "w", 0, element=1)
        assert out.get("w").tolist() == [1, 3]

    def test_errors(self):
        with pytest.raises(UnknownVariable):
            inject_corruption(rec(v=1.0), "nope", 0)
        with pytest.raises(BitOutOfRange):
            inject_corruption(rec(v=1.0), "v", 64)
        with pytest.raises(BitOutOfRange):
            inject_corruption(rec(v=np.float32(1.0)), "v", 32)

    def test_widths(self):
        assert payload_width(1.0) == 64 and payload_width(np.zeros(2, np.float32)) == 32


@given(st.floats(allow_nan=False), st.integers(0, 63))
def test_flip_matches_bit_pattern_oracle(x, bit):
    out = inject_corruption(rec(v=x), "v", bit).get("v")
    assert bits(out) == bits(x) ^ (1 << bit)


# -- plans --------------------------------------------------------------------------

def test_plan_validation():
    with pytest.raises(ValueError):
        InjectionPlan(0, -1.0)
    with pytest.raises(ValueError):
        InjectionPlan(0, math.inf)
    assert InjectionPlan(0, 1.0, "notify").kind is InjectionKind.NOTIFICATION_ONLY
    with pytest.raises(ValueError):
        InjectionPlan(0, 1.0).schedule(0)  # no run length yet


@given(st.integers(0, 2 ** 64 - 1), st.floats(0, 50), st.integers(1, 500), st.integers(0, 99))
def test_schedule_deterministic_and_in_range(seed, rate, length, run):
    p = InjectionPlan(seed, rate, run_length=length)
    s = p.schedule(run)
    assert s == InjectionPlan(seed, rate, run_length=length).schedule(run)
    assert list(s) == sorted(s) and all(0 <= k < length for k in s)
    if rate == 0:
        assert s == ()


@pytest.mark.parametrize("rate", [0.5, 2.0, 40.0])
def test_schedule_mean_count_is_rate(rate):
    p = InjectionPlan(11, rate, run_length=10)
    counts = np.array([len(p.schedule(r)) for r in range(4000)])
    # Poisson: mean and variance both equal the rate
    assert abs(counts.mean() - rate) < 4 * math.sqrt(rate / 4000)
    assert abs(counts.var() / rate - 1) < 0.15


def test_gaps_randomized_per_run():
    p = InjectionPlan(3, 5.0, run_length=1000)
    assert len({p.schedule(r) for r in range(20)}) == 20


# -- campaigns ----------------------------------------------------------------------

def test_rate_zero_dynamic_is_serial():
    rep = run_campaign("spmv", "detect", PolicyFlags(dynamic=True), InjectionPlan(0, 0.0), 20,
                       size=64, baseline_runs=1)
    assert rep.failure_rate == 0.0
    assert all(r.rmt_spheres == 0 and r.outcome == "Correct" for r in rep.runs)


@pytest.mark.parametrize("kernel", ["dgemm", "spmv", "cg", "sscg", "multigrid"])
def test_rate_one_correct_static(kernel):
    rep = run_campaign(kernel, "correct", PolicyFlags(), InjectionPlan(2, 1.0), 30,
                       baseline_runs=1)
    single = [r for r in rep.runs if len(r.injections) == 1]
    assert single
    for r in single:
        assert r.corrections >= 1 and r.outcome == "Correct"


# CG and SS-CG absorb most single flips on their own, so they need more events
@pytest.mark.parametrize("kernel,rate", [("dgemm", 1.0), ("spmv", 1.0), ("multigrid", 1.0),
                                         ("cg", 16.0), ("sscg", 32.0)])
def test_off_fails_sometimes(kernel, rate):
    rep = run_campaign(kernel, "off", PolicyFlags(), InjectionPlan(2, rate), 40, baseline_runs=1)
    assert rep.failure_rate > 0


def test_notifications_do_not_perturb_state():
    rep = run_campaign("cg", "off", PolicyFlags(), InjectionPlan(4, 8.0, "notify"), 10,
                       baseline_runs=1)
    assert rep.failure_rate == 0 and all(r.injections == [] and r.events > 0 for r in rep.runs)


def test_notifications_drive_dynamic_rmt():
    rep = run_campaign("spmv", "detect", PolicyFlags(dynamic=True), InjectionPlan(4, 2.0, "notify"),
                       20, size=128, baseline_runs=1)
    hit = [r for r in rep.runs if r.events]
    assert hit and all(r.rmt_spheres > 0 for r in hit)
    assert all(r.rmt_spheres < r.spheres for r in hit)


@settings(max_examples=10)
@given(seed=st.integers(0, 2 ** 63))
def test_detect_coverage_no_silent_corruption(seed):
    rep = run_campaign("spmv", "detect", PolicyFlags(), InjectionPlan(seed, 3.0), 10, size=32,
                       baseline_runs=1)
    for r in rep.runs:
        assert r.detections == len({i["sphere"] for i in r.injections})


def test_reexecute_recovers():
    rep = run_campaign("dgemm", "detect", PolicyFlags(recovery="reexecute"), InjectionPlan(9, 4.0),
                       20, size=12, baseline_runs=1)
    assert rep.failure_rate == 0
    assert sum(r.retries for r in rep.runs) == sum(r.detections for r in rep.runs) > 0


def test_ignore_leaves_detections_unhandled():
    rep = run_campaign("dgemm", "detect", PolicyFlags(), InjectionPlan(9, 4.0), 20, size=12,
                       baseline_runs=1)
    assert all((r.unhandled > 0) == (r.outcome == "Failed") for r in rep.runs)


def test_reports_reproducible_modulo_timing():
    a = run_campaign("cg", "correct", PolicyFlags(), InjectionPlan(77, 3.0), 8, baseline_runs=1)
    b = run_campaign("cg", "correct", PolicyFlags(), InjectionPlan(77, 3.0), 8, baseline_runs=1)
    assert strip_timing(a.to_json()) == strip_timing(b.to_json())
    assert a.dumps() != "" and json.loads(a.dumps())["kernel"] == "cg"


def test_csv_aggregates():
    rep = run_campaign("spmv", "off", PolicyFlags(), InjectionPlan(1, 1.0), 5, size=16,
                       baseline_runs=1)
    header, row = rep.to_csv().strip().split("\n")
    assert "failure_rate" in header.split(",") and row.startswith("spmv,off,1.0,corrupt")


def test_normalized_time_definition():
    rep = run_campaign("spmv", "off", PolicyFlags(), None, 5, size=16, baseline_runs=2)
    for r in rep.runs:
        assert r.normalized_time == pytest.approx(r.wall_time / rep.baseline_wall_time)


# -- ratings ------------------------------------------------------------------------

class TestRating:
    def test_lookup(self):
        assert robustness_rating([(1, 0), (2, 0), (4, 0.5)], 0.5) == pytest.approx(0.25)

    def test_unbounded(self):
        assert math.isinf(robustness_rating([(1, 0), (2, 0)], 0.5))

    def test_first_rate_fails(self):
        assert robustness_rating([(1, 1.0)], 0.5) == 1.0

    def test_interpolation(self):
        # crosses 0.5 halfway between 2 (0.25) and 4 (0.75) -> r* = 3
        assert robustness_rating([(4, 0.75), (2, 0.25)], 0.5) == pytest.approx(1 / 3)

    def test_failing_at_zero(self):
        assert robustness_rating([(0, 0.9), (1, 1.0)]) == 0.0

    def test_errors(self):
        with pytest.raises(EmptySweep):
            robustness_rating([])
        with pytest.raises(ValueError):
            robustness_rating([(1, 0.2)], 1.0)


@given(st.lists(st.tuples(st.floats(0.01, 100), st.floats(0, 1)), min_size=1, max_size=8,
                unique_by=lambda t: t[0]))
def test_rating_oracle(sweep):
    pts = sorted(sweep)
    r = robustness_rating(pts, 0.5)
    first = next((k for k, (_, f) in enumerate(pts) if f >= 0.5), None)
    if first is None:
        assert math.isinf(r)
    elif first == 0:
        assert r == pytest.approx(1 / pts[0][0])
    else:
        (r0, f0), (r1, f1) = pts[first - 1], pts[first]
        assert r0 <= 1 / r <= r1 + 1e-9


def test_sweep_returns_reports():
    reps, sweep, rating = rate_sweep("spmv", "off", PolicyFlags(), [1.0, 8.0], 10, seed=1,
                                     size=16, baseline_runs=1)
    assert len(reps) == 2 and [r for r, _ in sweep] == [1.0, 8.0]
    assert rating == robustness_rating(sweep)
