"""Deterministic fault injection, campaigns and robustness ratings.

A campaign runs one kernel ``n_runs`` times under a fixed runtime policy.
Faults are placed on the sphere-index axis of each run by a Poisson
process whose mean count per run is ``plan.rate``. Each run draws from its
own generator seeded with ``(seed, run)``, so any run can be reproduced in
isolation. Two kinds of fault exist:

``notify``
    a notification fed to the adaptive monitor; program state is untouched.
``corrupt``
    one bit flipped in one compared output of one replica's record, before
    comparison.

Schedules index the application's own sequence of spheres: a sphere that
is run again after a detected error (discard-on-detect) is the same
logical sphere, and faults are transient, so re-executions are never
targeted. The monitor's clock during a campaign is that logical index, so
adaptation decisions are a deterministic function of the schedule.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
import struct
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from redthreads.cluster import apply_plan, build_plan
from redthreads.core import BACKEND
from redthreads.errors import BitOutOfRange, EmptySweep, RedThreadsError, UnknownVariable
from redthreads.kernels import KernelCase, get_kernel
from redthreads.kernels.driver import SphereDriver
from redthreads.monitor import EventSource, FaultEvent
from redthreads.runtime import Runtime, RuntimeConfig
from redthreads.sphere import OutputRecord, Strength

__all__ = [
    "InjectionKind", "InjectionPlan", "PolicyFlags", "RunRecord", "CampaignReport",
    "inject_corruption", "payload_width", "run_campaign", "run_once", "robustness_rating",
    "rate_sweep", "strip_timing", "TIMING_FIELDS", "DEFAULT_THRESHOLD",
]

DEFAULT_THRESHOLD = 0.5
TIMING_FIELDS = frozenset({
    "wall_time", "normalized_time", "baseline_wall_time", "mean_normalized_time",
    "min_normalized_time", "max_normalized_time", "mean_wall_time",
})


class InjectionKind(enum.Enum):
    NOTIFICATION_ONLY = "notify"
    CORRUPT_COMPARE_VAR = "corrupt"

    @classmethod
    def parse(cls, v) -> "InjectionKind":
        if isinstance(v, InjectionKind):
            return v
        for k in cls:
            if v in (k.value, k.name):
                return k
        raise ValueError(f"unknown injection kind {v!r}; expected notify or corrupt")


# -- bit flips ---------------------------------------------------------------

_F64 = struct.Struct("<d")
_U64 = struct.Struct("<Q")


def payload_width(value) -> int:
    """Bits per element of a compared payload."""
    if isinstance(value, np.ndarray) or isinstance(value, np.generic):
        return value.dtype.itemsize * 8
    if isinstance(value, (float, int)) and not isinstance(value, bool):
        return 64
    raise TypeError(f"cannot corrupt a {type(value).__name__} payload")


def _flip_scalar(v, bit):
    if isinstance(v, float):
        (u,) = _U64.unpack(_F64.pack(v))
        return _F64.unpack(_U64.pack(u ^ (1 << bit)))[0]
    if isinstance(v, np.generic):
        a = np.array([v])
        _flip_array(a, 0, bit)
        return a[0]
    return v ^ (1 << bit)


def _flip_array(a: np.ndarray, index: int, bit: int):
    flat = a.reshape(-1).view(f"u{a.dtype.itemsize}")
    flat[index] ^= flat.dtype.type(1 << bit)


def inject_corruption(rec: OutputRecord, var_name: str, bit_position: int,
                      rng: Optional[np.random.Generator] = None,
                      element: Optional[int] = None) -> OutputRecord:
    """Return a copy of ``rec`` with one bit of ``var_name`` flipped.

    For array payloads the element is ``element`` if given, else drawn
    from ``rng`` (a fresh default generator if that is None too).
    """
    if var_name not in rec.names:
        raise UnknownVariable(var_name)
    v = rec.get(var_name)
    width = payload_width(v)
    if not 0 <= bit_position < width:
        raise BitOutOfRange(f"bit {bit_position} outside a {width}-bit payload")
    if isinstance(v, np.ndarray):
        if v.size == 0:
            raise BitOutOfRange("empty array payload has no bits")
        if element is None:
            element = int((rng or np.random.default_rng()).integers(v.size))
        out = np.array(v, copy=True, order="C")
        _flip_array(out, element, bit_position)
        return rec.replace_value(var_name, out)
    return rec.replace_value(var_name, _flip_scalar(v, bit_position))


# -- plans ----------------------------------------------------------------------

@dataclass(frozen=True)
class InjectionPlan:
    """Where faults land. ``run_length`` is in spheres per fault-free run.

    ``run_length=None`` lets :func:`run_campaign` fill it in from a
    calibration run of the kernel.
    """

    seed: int
    rate: float
    kind: InjectionKind = InjectionKind.CORRUPT_COMPARE_VAR
    run_length: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", InjectionKind.parse(self.kind))
        if not self.rate >= 0.0 or math.isinf(self.rate):
            raise ValueError(f"rate must be a finite nonnegative number, got {self.rate}")

    def rng(self, run: int) -> np.random.Generator:
        return np.random.default_rng([self.seed & 0xFFFFFFFFFFFFFFFF, run])

    def schedule(self, run: int) -> Tuple[int, ...]:
        """Sorted sphere indices hit in ``run``, one entry per event.

        Arrivals form a Poisson process over ``[0, run_length)`` with gaps
        of mean ``run_length / rate``; an event at time ``t`` hits sphere
        ``floor(t)``. Several events may land on the same sphere, so the
        delivered count is not capped by the number of spheres.
        """
        return self._draw(self.rng(run))[0]

    def _draw(self, rng):
        if self.run_length is None:
            raise ValueError("plan has no run_length yet")
        if self.rate == 0.0 or self.run_length <= 0:
            return (), rng
        mean_gap = self.run_length / self.rate
        out = []
        t = rng.exponential(mean_gap)
        while t < self.run_length:
            out.append(int(t))
            t += rng.exponential(mean_gap)
        return tuple(out), rng

    def to_json(self):
        return {"seed": self.seed, "rate": self.rate, "kind": self.kind.value,
                "run_length": self.run_length}


@dataclass(frozen=True)
class PolicyFlags:
    """Runtime policy for a campaign.

    ``recovery`` is ``"ignore"`` or ``"reexecute"`` (discard-on-detect).
    ``island_size`` only matters with ``cluster=True``.
    """

    dynamic: bool = False
    lazy: bool = False
    recovery: str = "ignore"
    cluster: bool = False
    island_size: Optional[int] = None
    dispatch: str = "auto"

    def to_json(self):
        return asdict(self)


# -- per-run injector -------------------------------------------------------------

class _Injector:
    """Entry and fault hooks for one run."""

    def __init__(self, plan: InjectionPlan, run: int):
        self.rt: Optional[Runtime] = None
        self.driver = None
        self._logical = 0
        self.kind = plan.kind
        sched, rng = plan._draw(plan.rng(run))
        self.schedule = sched
        self.now = 0
        self._k = 0
        self._targets: Dict[int, List[Tuple[int, float, float, float, int]]] = {}
        self._rng = rng
        self.injections: List[Dict[str, Any]] = []
        self.events = 0

    def clock(self) -> float:
        return float(self.now)

    def entry_hook(self, seq: int):
        if self.driver is not None and self.driver.retrying:
            return
        idx = self._logical
        self._logical += 1
        self.now = idx
        sched = self.schedule
        while self._k < len(sched) and sched[self._k] <= idx:
            hit = sched[self._k]
            self._k += 1
            if hit != idx:
                continue
            self.events += 1
            if self.kind is InjectionKind.NOTIFICATION_ONLY:
                self.rt.monitor.ingest_event(FaultEvent(float(idx), EventSource.INJECTED))
            else:
                r = self._rng
                self._targets.setdefault(seq, []).append(
                    (idx, r.random(), r.random(), r.random(), int(r.integers(0, 2 ** 63))))

    def fault_hook(self, seq: int, replica: int, count: int, rec: OutputRecord):
        targets = self._targets.get(seq)
        if targets is None:
            return rec
        # lazy replicas call this from the detector side, after the primary
        # has moved on, so everything logged comes from the target itself
        for idx, u_rep, u_var, u_bit, elem_seed in targets:
            if replica != int(u_rep * count):
                continue
            names = rec.names
            var = names[int(u_var * len(names))]
            payload = rec.get(var)
            bit = int(u_bit * payload_width(payload))
            element = None
            if isinstance(payload, np.ndarray):
                element = int(np.random.default_rng(elem_seed).integers(payload.size))
            self.injections.append({"sphere": seq, "index": idx, "replica": replica,
                                    "replicas": count, "var": var, "bit": bit,
                                    "element": element})
            rec = inject_corruption(rec, var, bit, element=element)
        return rec


# -- reports ----------------------------------------------------------------------------

@dataclass
class RunRecord:
    run: int
    wall_time: float
    normalized_time: float
    detections: int
    corrections: int
    uncorrectable: int
    unhandled: int
    retries: int
    spheres: int
    rmt_spheres: int
    events: int
    injections: List[Dict[str, Any]]
    detected_spheres: List[int]
    corrected_spheres: List[int]
    outcome: str  # "Correct" or "Failed"
    cluster_status: Optional[str] = None
    error: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.outcome == "Failed"


@dataclass
class CampaignReport:
    kernel: str
    size: int
    strength: str
    flags: Dict[str, Any]
    plan: Dict[str, Any]
    n_runs: int
    baseline_wall_time: float
    threshold: float = DEFAULT_THRESHOLD
    backend: str = BACKEND
    runs: List[RunRecord] = field(default_factory=list)
    tolerance: str = ""
    note: str = "desk-scale problem size"

    @property
    def failure_rate(self) -> float:
        return sum(r.failed for r in self.runs) / len(self.runs) if self.runs else 0.0

    def normalized_times(self) -> np.ndarray:
        return np.array([r.normalized_time for r in self.runs])

    @property
    def robustness_rating(self) -> float:
        """Single-point estimate at this campaign's rate (inf means Unbounded)."""
        return robustness_rating([(self.plan["rate"], self.failure_rate)], self.threshold)

    def aggregates(self) -> Dict[str, Any]:
        nt = self.normalized_times()
        spheres = sum(r.spheres for r in self.runs)
        rating = self.robustness_rating
        return {
            "kernel": self.kernel,
            "strength": self.strength,
            "rate": self.plan["rate"],
            "kind": self.plan["kind"],
            "n_runs": self.n_runs,
            "mean_normalized_time": float(nt.mean()) if nt.size else math.nan,
            "min_normalized_time": float(nt.min()) if nt.size else math.nan,
            "max_normalized_time": float(nt.max()) if nt.size else math.nan,
            "failure_rate": self.failure_rate,
            "detections": sum(r.detections for r in self.runs),
            "corrections": sum(r.corrections for r in self.runs),
            "uncorrectable": sum(r.uncorrectable for r in self.runs),
            "injections": sum(len(r.injections) for r in self.runs),
            "events": sum(r.events for r in self.runs),
            "rmt_fraction": (sum(r.rmt_spheres for r in self.runs) / spheres) if spheres else 0.0,
            "robustness_rating": "Unbounded" if math.isinf(rating) else rating,
        }

    def to_json(self) -> Dict[str, Any]:
        return {
            "kernel": self.kernel,
            "size": self.size,
            "strength": self.strength,
            "flags": self.flags,
            "plan": self.plan,
            "n_runs": self.n_runs,
            "threshold": self.threshold,
            "backend": self.backend,
            "tolerance": self.tolerance,
            "note": self.note,
            "baseline_wall_time": self.baseline_wall_time,
            "aggregates": self.aggregates(),
            "runs": [asdict(r) for r in self.runs],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        return aggregates_csv([self.aggregates()])


def aggregates_csv(rows: Sequence[Dict[str, Any]]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def strip_timing(obj):
    """Drop every timing field, recursively, from a JSON-ready structure."""
    if isinstance(obj, dict):
        return {k: strip_timing(v) for k, v in obj.items() if k not in TIMING_FIELDS}
    if isinstance(obj, list):
        return [strip_timing(v) for v in obj]
    return obj


# -- runs -------------------------------------------------------------------------

def _runtime(strength: Strength, flags: PolicyFlags, clock=None) -> Runtime:
    cfg = RuntimeConfig(max_strength=strength, dynamic=flags.dynamic, lazy=flags.lazy,
                        dispatch=flags.dispatch)
    if clock is not None:
        cfg.clock = clock
    return Runtime(cfg)


def _cluster(rt: Runtime, flags: PolicyFlags) -> Optional[str]:
    if not flags.cluster:
        return None
    size = flags.island_size or rt.config.num_cores
    # a host with fewer cores than one island gets a logical plan; pinning
    # then fails softly and the run proceeds unpinned
    plan = build_plan(max(rt.config.num_cores, size, 2), max(size, 2), True)
    return apply_plan(rt, plan).value


def _injection_key(i):
    return i["sphere"], i["index"], i["replica"]


def run_once(case: KernelCase, problem, strength, flags: PolicyFlags = PolicyFlags(),
             plan: Optional[InjectionPlan] = None, run: int = 0, reference=None,
             baseline: float = 1.0, options: Optional[dict] = None) -> RunRecord:
    """One run of a kernel under a policy and (optionally) a fault plan."""
    strength = Strength.parse(strength)
    inj = None
    if plan is not None and plan.rate > 0:
        inj = _Injector(plan, run)
    rt = _runtime(strength, flags, inj.clock if inj is not None else None)
    if inj is not None:
        inj.rt = rt
        if inj.schedule:
            rt.entry_hook = inj.entry_hook
            if plan.kind is InjectionKind.CORRUPT_COMPARE_VAR:
                rt.fault_hook = inj.fault_hook
    status = _cluster(rt, flags)
    drv = SphereDriver(rt, recovery=flags.recovery)
    if inj is not None:
        inj.driver = drv
    error = None
    t0 = time.perf_counter()
    if inj is None:
        out = case.run(problem, drv, **(options or {}))
        report = rt.drain()
    else:
        # a corrupted value may overflow or break the solver; that is a
        # failed run, not a harness error
        with np.errstate(all="ignore"):
            try:
                out = case.run(problem, drv, **(options or {}))
            except (ArithmeticError, ValueError, RedThreadsError) as exc:
                out, error = None, type(exc).__name__
            report = rt.drain()
    wall = time.perf_counter() - t0
    rt.finalize()
    lazy_bad = sorted(s for s, o in report if not o.matched)
    detected = lazy_bad + drv.detected_seqs
    detections = drv.detections + len(lazy_bad)
    unhandled = drv.unhandled + len(lazy_bad)
    ok = error is None and unhandled == 0 and (reference is None or case.matches(out, reference))
    return RunRecord(
        run=run, wall_time=wall, normalized_time=wall / baseline,
        detections=detections, corrections=drv.corrections, uncorrectable=drv.uncorrectable,
        unhandled=unhandled, retries=drv.retries, spheres=rt.spheres_entered,
        rmt_spheres=rt.rmt_spheres, events=inj.events if inj else 0,
        injections=sorted(inj.injections, key=_injection_key) if inj else [],
        detected_spheres=sorted(detected),
        corrected_spheres=list(drv.corrected_seqs),
        outcome="Correct" if ok else "Failed", cluster_status=status, error=error,
    )


def run_campaign(kernel, strength, flags: PolicyFlags = PolicyFlags(),
                 plan: Optional[InjectionPlan] = None, n_runs: int = 1000, *,
                 size: Optional[int] = None, problem_seed: int = 0, matrix=None,
                 baseline_runs: int = 5, options: Optional[dict] = None,
                 threshold: float = DEFAULT_THRESHOLD) -> CampaignReport:
    """Run ``n_runs`` independent runs and collect a :class:`CampaignReport`.

    The fault-free serial baseline is the same kernel through a static-Off
    runtime, timed ``baseline_runs`` times before the campaign; the first of
    those runs also calibrates the plan's ``run_length`` if it is unset.
    """
    case = get_kernel(kernel)
    strength = Strength.parse(strength)
    size = case.default_size if size is None else size
    problem = case.build(size, problem_seed, matrix)
    reference = case.reference(problem)
    plan = plan or InjectionPlan(0, 0.0, InjectionKind.NOTIFICATION_ONLY)
    off = PolicyFlags(dispatch=flags.dispatch)
    times = []
    length = None
    for _ in range(max(1, baseline_runs)):
        rec = run_once(case, problem, Strength.OFF, off, options=options)
        times.append(rec.wall_time)
        length = rec.spheres
    baseline = float(np.mean(times))
    if plan.run_length is None:
        plan = replace(plan, run_length=length)
    report = CampaignReport(case.name, size, str(strength), flags.to_json(), plan.to_json(),
                            n_runs, baseline, threshold, tolerance=case.tolerance)
    for run in range(n_runs):
        report.runs.append(run_once(case, problem, strength, flags, plan, run, reference,
                                    baseline, options))
    return report


# -- robustness rating -----------------------------------------------------------

def robustness_rating(sweep: Sequence[Tuple[float, float]],
                      threshold: float = DEFAULT_THRESHOLD) -> float:
    """``1 / r*`` for the first rate whose failure rate reaches ``threshold``.

    Between the last passing and first failing swept rates ``r*`` is found
    by linear interpolation. Returns ``math.inf`` (Unbounded) when no swept
    rate reaches the threshold, and ``0.0`` if the application already fails
    at rate zero.
    """
    if not sweep:
        raise EmptySweep("robustness rating needs at least one (rate, failure_rate) point")
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    pts = sorted(sweep)
    prev = None
    for rate, fail in pts:
        if fail >= threshold:
            if prev is None:
                r_star = rate
            else:
                r0, f0 = prev
                r_star = r0 + (threshold - f0) * (rate - r0) / (fail - f0)
            return math.inf if r_star < 0 else (1.0 / r_star if r_star > 0 else 0.0)
        prev = (rate, fail)
    return math.inf


def rate_sweep(kernel, strength, flags: PolicyFlags, rates: Sequence[float], n_runs: int,
               seed: int = 0, kind=InjectionKind.CORRUPT_COMPARE_VAR,
               threshold: float = DEFAULT_THRESHOLD, **kw):
    """Campaign per rate; returns (reports, [(rate, failure_rate)], rating)."""
    reports = [run_campaign(kernel, strength, flags, InjectionPlan(seed, r, kind), n_runs, **kw)
               for r in rates]
    sweep = [(r, rep.failure_rate) for r, rep in zip(rates, reports)]
    return reports, sweep, robustness_rating(sweep, threshold)
