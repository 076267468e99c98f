"""Timing comparisons between runtime configurations.

Configurations of one kernel are timed in interleaved rounds (every round
runs each configuration once, in a shuffled order) so slow drifts in machine
speed hit all of them alike. Times are normalized by the mean wall time of
the static-Off baseline measured in the same rounds, and summarized with a
bootstrap confidence interval of the mean.
"""

from __future__ import annotations

import gc
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from redthreads.harness import InjectionKind, InjectionPlan, PolicyFlags, run_once
from redthreads.kernels import get_kernel
from redthreads.sphere import Strength

__all__ = ["Config", "Summary", "TimingResult", "BASELINE", "time_configs", "mean_ci",
           "disjoint_below"]

BASELINE = "baseline"


@dataclass(frozen=True)
class Config:
    """One timed configuration. ``rate`` is in events per run."""

    label: str
    strength: str = "off"
    flags: PolicyFlags = PolicyFlags()
    rate: float = 0.0
    kind: str = "notify"


@dataclass
class Summary:
    mean: float
    low: float
    high: float
    n: int

    def to_json(self):
        return {"mean": self.mean, "ci_low": self.low, "ci_high": self.high, "n": self.n}


def mean_ci(x, confidence: float = 0.95, n_resamples: int = 2000, seed: int = 0) -> Summary:
    """Mean and percentile-bootstrap interval of the mean."""
    x = np.asarray(x, dtype=np.float64)
    if x.size < 2 or np.all(x == x[0]):
        m = float(x.mean()) if x.size else float("nan")
        return Summary(m, m, m, int(x.size))
    res = stats.bootstrap((x,), np.mean, confidence_level=confidence, n_resamples=n_resamples,
                          method="percentile", random_state=np.random.default_rng(seed))
    ci = res.confidence_interval
    return Summary(float(x.mean()), float(ci.low), float(ci.high), int(x.size))


def disjoint_below(a: Summary, b: Summary) -> bool:
    """True when ``a``'s interval lies entirely below ``b``'s."""
    return a.high < b.low


@dataclass
class TimingResult:
    kernel: str
    size: int
    n_runs: int
    baseline_mean: float
    walls: Dict[str, np.ndarray]
    failures: Dict[str, int] = field(default_factory=dict)
    rmt_fraction: Dict[str, float] = field(default_factory=dict)

    def normalized(self, label: str) -> np.ndarray:
        return self.walls[label] / self.baseline_mean

    def summary(self, label: str, seed: int = 0) -> Summary:
        return mean_ci(self.normalized(label), seed=seed)

    def to_json(self):
        return {
            "kernel": self.kernel, "size": self.size, "n_runs": self.n_runs,
            "baseline_mean": self.baseline_mean,
            "configs": {k: {"normalized": self.summary(k).to_json(),
                            "failures": self.failures.get(k, 0),
                            "rmt_fraction": self.rmt_fraction.get(k, 0.0)}
                        for k in self.walls},
        }


def time_configs(kernel, configs: Sequence[Config], n_runs: int, *, size: Optional[int] = None,
                 seed: int = 0, warmup: int = 3, options: Optional[dict] = None) -> TimingResult:
    """Time ``configs`` of ``kernel`` over ``n_runs`` interleaved rounds.

    A static-Off configuration labelled :data:`BASELINE` is always added.
    Fault plans use ``seed`` and the round number, so runs are reproducible
    apart from their timings.
    """
    case = get_kernel(kernel)
    size = case.default_size if size is None else size
    problem = case.build(size, 0, None)
    reference = case.reference(problem)
    cfgs: List[Config] = [Config(BASELINE)] + [c for c in configs if c.label != BASELINE]
    labels = [c.label for c in cfgs]
    if len(set(labels)) != len(labels):
        raise ValueError(f"duplicate configuration labels in {labels}")

    calib = run_once(case, problem, Strength.OFF, options=options)
    plans: Dict[str, Optional[InjectionPlan]] = {}
    for c in cfgs:
        plans[c.label] = (InjectionPlan(seed, c.rate, InjectionKind.parse(c.kind), calib.spheres)
                          if c.rate > 0 else None)

    def one(c: Config, run: int):
        return run_once(case, problem, c.strength, c.flags, plans[c.label], run, reference,
                        options=options)

    for _ in range(warmup):
        for c in cfgs:
            one(c, 0)

    walls = {c.label: np.empty(n_runs) for c in cfgs}
    fails = {c.label: 0 for c in cfgs}
    rmt = {c.label: 0.0 for c in cfgs}
    order_rng = np.random.default_rng([seed, 0x5EED])
    enabled = gc.isenabled()
    gc.disable()
    try:
        for run in range(n_runs):
            for i in order_rng.permutation(len(cfgs)):
                c = cfgs[i]
                rec = one(c, run)
                walls[c.label][run] = rec.wall_time
                fails[c.label] += rec.failed
                rmt[c.label] += rec.rmt_spheres / max(rec.spheres, 1)
            gc.collect()
    finally:
        if enabled:
            gc.enable()
    return TimingResult(case.name, size, n_runs, float(walls[BASELINE].mean()), walls, fails,
                        {k: v / n_runs for k, v in rmt.items()})
