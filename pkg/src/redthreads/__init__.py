"""Adaptive redundant multithreading for Python.

Scope a computation as a *sphere of replication*, and the runtime runs it
once, twice (detect) or three times (correct), comparing or voting on the
declared outputs. An event-driven policy switches redundancy on when fault
notifications arrive and off again once they stop.
"""

from redthreads.core import BACKEND
from redthreads.errors import *  # noqa: F401,F403
from redthreads.monitor import AdaptiveMonitor, EventSource, EventStatistics, FaultEvent, decide_mode
from redthreads.runtime import (RedLock, Runtime, RuntimeConfig, SphereResult, Status, declare,
                                execute_sphere, redthreads_compare, redthreads_destroy_lock,
                                redthreads_finalize, redthreads_fork, redthreads_get_dynamic,
                                redthreads_get_strength, redthreads_init_lock,
                                redthreads_initialize, redthreads_join, redthreads_private_copy,
                                redthreads_set_dynamic, redthreads_set_lock,
                                redthreads_set_strength, redthreads_thread_num,
                                redthreads_unset_lock)
from redthreads.sphere import (BITWISE, MATCH, ComparePolicy, MajorityCorrected, Match, Mismatch,
                               NoMajority, OutputRecord, SphereSpec, Strength, Unanimous,
                               compare_outputs, majority_vote, validate_spec)

__version__ = "0.1.0"
