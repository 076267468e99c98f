"""Thread clustering: pin duplicate work onto one core per island.

Within each island of ``island_size`` cores the last core hosts every
duplicate replica thread and the lazy detector at lowered priority; the
remaining cores run primary (application) threads at normal priority.
"""

from __future__ import annotations

import enum
import os
import warnings
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Tuple

from redthreads.errors import InvalidIsland, UnsupportedPlatformWarning

__all__ = ["Role", "Priority", "AffinityPlan", "PlanStatus", "build_plan", "apply_plan"]

LOWERED_NICE = 10


class Role(enum.Enum):
    PRIMARY = "primary"
    DUPLICATE = "duplicate"
    DETECTOR = "detector"


class Priority(enum.Enum):
    ELEVATED = "elevated"
    LOWERED = "lowered"


class PlanStatus(enum.Enum):
    OK = "ok"
    UNSUPPORTED_PLATFORM = "unsupported_platform"


@dataclass(frozen=True)
class AffinityPlan:
    n_cores: int
    island_size: int
    clustering: bool
    assignments: Dict[Role, FrozenSet[int]]
    priorities: Dict[Role, Priority]
    # (primary cores, duplicate core) per island; empty when clustering is off
    islands: Tuple[Tuple[Tuple[int, ...], int], ...] = field(default=())

    def to_json(self):
        return {
            "n_cores": self.n_cores,
            "island_size": self.island_size,
            "clustering": self.clustering,
            "assignments": {r.value: sorted(c) for r, c in self.assignments.items()},
            "priorities": {r.value: p.value for r, p in self.priorities.items()},
        }


def build_plan(n_cores: int, island_size: int, clustering_enabled: bool = True) -> AffinityPlan:
    """Pure function of its arguments.

    A trailing group smaller than ``island_size`` forms its own island if it
    has at least two cores; a single leftover core joins the previous
    island as an extra primary core.
    """
    if n_cores < 1:
        raise InvalidIsland("n_cores must be positive")
    if island_size < 2 or island_size > n_cores:
        raise InvalidIsland(f"island_size={island_size} with n_cores={n_cores}")
    every = frozenset(range(n_cores))
    if not clustering_enabled:
        return AffinityPlan(
            n_cores, island_size, False,
            {r: every for r in Role},
            {r: Priority.ELEVATED for r in Role},
        )
    groups = [list(range(s, min(s + island_size, n_cores))) for s in range(0, n_cores, island_size)]
    if len(groups) > 1 and len(groups[-1]) == 1:
        groups[-2].insert(len(groups[-2]) - 1, groups.pop()[0])
    islands = tuple((tuple(g[:-1]), g[-1]) for g in groups)
    primaries = frozenset(c for prim, _ in islands for c in prim)
    dups = frozenset(d for _, d in islands)
    return AffinityPlan(
        n_cores, island_size, True,
        {Role.PRIMARY: primaries, Role.DUPLICATE: dups, Role.DETECTOR: dups},
        {Role.PRIMARY: Priority.ELEVATED, Role.DUPLICATE: Priority.LOWERED,
         Role.DETECTOR: Priority.LOWERED},
        islands,
    )


def _pin(tid: int, cores, nice: int) -> None:
    os.sched_setaffinity(tid, cores)
    if nice:
        os.setpriority(os.PRIO_PROCESS, tid, nice)


def apply_plan(runtime, plan: AffinityPlan, lowered_nice: int = LOWERED_NICE) -> PlanStatus:
    """Best-effort pinning of the runtime's threads.

    Primary work runs on the calling (application) thread, so that thread
    is pinned to the primary cores. Duplicate replica workers are spread
    round-robin over the islands' duplicate cores; the detector follows
    the first duplicate core. Failures degrade to a warning.
    """
    runtime.affinity_plan = plan
    if not plan.clustering:
        return PlanStatus.OK
    if not hasattr(os, "sched_setaffinity"):
        warnings.warn("CPU affinity control unavailable", UnsupportedPlatformWarning, stacklevel=2)
        return PlanStatus.UNSUPPORTED_PLATFORM
    roster = runtime.thread_roster()
    dup_cores = [d for _, d in plan.islands]
    nice = {Priority.ELEVATED: 0, Priority.LOWERED: lowered_nice}
    calls = [(tid, plan.assignments[Role.PRIMARY], nice[plan.priorities[Role.PRIMARY]])
             for tid in roster[Role.PRIMARY]]
    for k, tid in enumerate(roster[Role.DUPLICATE]):
        calls.append((tid, {dup_cores[k % len(dup_cores)]}, nice[plan.priorities[Role.DUPLICATE]]))
    for tid in roster[Role.DETECTOR]:
        calls.append((tid, {dup_cores[0]}, nice[plan.priorities[Role.DETECTOR]]))
    failed = []
    for tid, cores, n in calls:
        try:
            _pin(tid, cores, n)
        except (OSError, ValueError) as exc:
            failed.append((tid, exc))
    if failed:
        warnings.warn(f"could not apply affinity plan to {len(failed)} thread(s): {failed[0][1]}",
                      UnsupportedPlatformWarning, stacklevel=2)
        return PlanStatus.UNSUPPORTED_PLATFORM
    return PlanStatus.OK
