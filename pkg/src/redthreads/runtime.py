"""Fork-join execution of spheres of replication.

A :class:`Runtime` owns the internal control variables (ICVs), a pool of
replica worker threads, the fault-event monitor and, in lazy mode, the
output buffer with its duplicate and detector threads. Application code
calls :meth:`Runtime.execute_sphere` with a :class:`~redthreads.sphere.SphereSpec`
and a *unit*: a deterministic callable ``unit(replica_index, shared, private)``
returning either a tuple of the compared values (in ``compare_vars`` order)
or a mapping that contains them. Extra mapping keys are carried back to the
caller from the canonical replica without being compared.

The effective strength of a sphere is ``min(spec.strength_requested,
current ICV strength)``, read once at entry.
"""

from __future__ import annotations

import copy
import enum
import itertools
import os
import queue
import threading
import time
from time import monotonic, perf_counter
from collections import abc, deque
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from redthreads.cluster import Role
from redthreads.errors import (AlreadyInitialized, DestroyWhileHeld, NotInSphere, PendingSpheres,
                               ResourceError, SpecError, UnsetNotOwner)
from redthreads.lazy import DEFAULT_CAPACITY, PANICKED, CyclicBuffer, LazyDetector
from redthreads.monitor import DEFAULT_WINDOW, AdaptiveMonitor
from redthreads.sphere import (MATCH, ComparePolicy, MajorityCorrected, Mismatch, NoMajority,
                               OutputRecord, SphereSpec, Strength, Unanimous, compare_outputs,
                               majority_vote, payloads_match, validate_spec)

__all__ = [
    "RuntimeConfig", "InternalControlVariables", "Status", "SphereResult", "Runtime", "RedLock",
    "redthreads_initialize", "redthreads_finalize", "execute_sphere",
    "redthreads_get_strength", "redthreads_set_strength",
    "redthreads_get_dynamic", "redthreads_set_dynamic", "redthreads_thread_num",
    "redthreads_init_lock", "redthreads_destroy_lock", "redthreads_set_lock",
    "redthreads_unset_lock", "redthreads_private_copy",
    "redthreads_fork", "redthreads_join", "redthreads_compare",
    "active_runtime", "declare",
]

_TRUE = ("1", "true", "yes", "on")


def _env_strength():
    v = os.environ.get("REDTHREADS_STRENGTH")
    return Strength.parse(v) if v else None


def _env_dynamic():
    v = os.environ.get("REDTHREADS_DYNAMIC")
    return None if v is None else v.strip().lower() in _TRUE


def _env_cores():
    v = os.environ.get("REDTHREADS_NUM_CORES")
    return int(v) if v else None


def detected_cores() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:  # pragma: no cover - non-Linux
        return os.cpu_count() or 1


@dataclass
class RuntimeConfig:
    """Runtime settings. ``None`` fields are seeded from the environment.

    ``dispatch`` chooses how replicas are scheduled: ``"threads"`` forks
    replicas 1..k-1 onto pooled worker threads while the calling thread
    runs replica 0; ``"inline"`` runs all replicas on the calling thread;
    ``"auto"`` picks threads when more than one core is available.
    """

    max_strength: Optional[Strength] = None
    dynamic: Optional[bool] = None
    num_cores: Optional[int] = None
    lazy: bool = False
    buffer_capacity: int = DEFAULT_CAPACITY
    block_on_full: bool = True
    tbe_window: int = DEFAULT_WINDOW
    dispatch: str = "auto"
    clock: Callable[[], float] = time.monotonic
    poll_interval: Optional[float] = None
    install_signal_handler: bool = False
    on_deferred_error: Optional[Callable[[int, Mismatch], None]] = None

    def resolved(self) -> "RuntimeConfig":
        cfg = copy.copy(self)
        if cfg.max_strength is None:
            cfg.max_strength = _env_strength() or Strength.DETECT
        cfg.max_strength = Strength.parse(cfg.max_strength)
        if cfg.dynamic is None:
            env = _env_dynamic()
            cfg.dynamic = False if env is None else env
        if cfg.num_cores is None:
            cfg.num_cores = _env_cores() or detected_cores()
        if cfg.dispatch not in ("auto", "threads", "inline"):
            raise ValueError(f"dispatch must be auto, threads or inline, not {cfg.dispatch!r}")
        return cfg

    @property
    def threaded(self) -> bool:
        if self.dispatch == "auto":
            return (self.num_cores or 1) > 1
        return self.dispatch == "threads"


class InternalControlVariables:
    """Runtime-owned knobs read at sphere entry. Attribute stores are indivisible."""

    __slots__ = ("current", "dynamic", "max")

    def __init__(self, current: Strength, dynamic: bool, max_strength: Strength):
        self.current = current
        self.dynamic = dynamic
        self.max = max_strength

    def __repr__(self):
        return f"ICV(current={self.current!s}, dynamic={self.dynamic}, max={self.max!s})"


class Status(enum.Enum):
    SERIAL_DONE = "serial_done"
    VERIFIED = "verified"
    CORRECTED = "corrected"
    DETECTED_ERROR = "detected_error"
    UNCORRECTABLE_ERROR = "uncorrectable_error"
    DEFERRED = "deferred"


_OK = frozenset((Status.SERIAL_DONE, Status.VERIFIED, Status.CORRECTED, Status.DEFERRED))


class SphereResult:
    """Outcome of one sphere.

    ``record`` is the canonical OutputRecord for SERIAL_DONE, VERIFIED,
    CORRECTED and DEFERRED (in lazy mode, the primary's unchecked record).
    ``outputs`` maps every name the unit returned to the value the caller
    should continue with. On errors it holds replica 0's values so the
    application can decide what to do.
    """

    __slots__ = ("status", "strength", "seq", "duration", "record", "outputs", "outcome",
                 "outvoted", "records")

    def __init__(self, status: Status, strength: Strength, seq: int, duration: float,
                 record: Optional[OutputRecord] = None, outputs: Mapping[str, Any] = None,
                 outcome: Any = MATCH, outvoted: Optional[int] = None, records: Tuple = ()):
        self.status = status
        self.strength = strength
        self.seq = seq
        self.duration = duration
        self.record = record
        self.outputs = {} if outputs is None else outputs
        self.outcome = outcome
        self.outvoted = outvoted
        self.records = records

    @property
    def ok(self) -> bool:
        return self.status in _OK

    def __getitem__(self, name):
        return self.outputs[name]

    def __repr__(self):
        return (f"SphereResult({self.status.name}, strength={self.strength!s}, seq={self.seq}, "
                f"outcome={self.outcome!r})")


# -- replica plumbing ---------------------------------------------------------

_IMMUTABLE = (int, float, complex, str, bytes, bool, type(None), frozenset)
_IMMUTABLE_TYPES = frozenset(_IMMUTABLE)


def redthreads_private_copy(value):
    """Per-replica copy of a private binding."""
    if type(value) in _IMMUTABLE_TYPES or isinstance(value, _IMMUTABLE):
        return value
    if isinstance(value, np.ndarray):
        return value.copy()
    return copy.deepcopy(value)


class _ReplicaPanic:
    __slots__ = ("error",)

    def __init__(self, error):
        self.error = error


class _Job:
    __slots__ = ("fn", "args", "result", "_done")

    def __init__(self, fn, args):
        self.fn = fn
        self.args = args
        self.result = None
        self._done = threading.Lock()
        self._done.acquire()

    def run(self):
        try:
            self.result = self.fn(*self.args)
        finally:
            self._done.release()

    def wait(self):
        self._done.acquire()
        self._done.release()
        return self.result


class _WorkerPool:
    """Fixed set of named threads pulling jobs from one queue."""

    def __init__(self, n: int, name: str):
        self._q = queue.SimpleQueue()
        self.threads = []
        try:
            for k in range(n):
                t = threading.Thread(target=self._loop, name=f"{name}-{k}", daemon=True)
                t.start()
                self.threads.append(t)
        except RuntimeError as exc:
            self.shutdown()
            raise ResourceError(f"could not start worker threads: {exc}") from exc

    def _loop(self):
        q = self._q
        while True:
            job = q.get()
            if job is None:
                return
            job.run()

    def submit(self, fn, *args) -> _Job:
        job = _Job(fn, args)
        self._q.put(job)
        return job

    def shutdown(self):
        for _ in self.threads:
            self._q.put(None)
        for t in self.threads:
            t.join()
        self.threads = []


class _BatchWorker:
    """One thread draining a FIFO of calls; it is only signalled when idle.

    Cheaper than a queue hand-off per job when jobs are small, because a
    busy worker picks up new work without a wake-up.
    """

    def __init__(self, name: str):
        self._jobs = deque()
        self._idle = True
        self._wake = threading.Event()
        self._stop = False
        self._lock = threading.Lock()
        try:
            self.thread = threading.Thread(target=self._loop, name=name, daemon=True)
            self.thread.start()
        except RuntimeError as exc:
            raise ResourceError(f"could not start worker thread: {exc}") from exc
        self.threads = [self.thread]

    def _loop(self):
        jobs = self._jobs
        while True:
            while jobs:
                fn, args = jobs.popleft()
                fn(*args)
            with self._lock:
                if self._stop and not jobs:
                    return
                self._idle = True
                self._wake.clear()
                # a submit that saw _idle False has already appended
                if jobs:
                    self._idle = False
                    continue
            self._wake.wait()

    def submit(self, fn, *args) -> None:
        self._jobs.append((fn, args))
        if self._idle:
            with self._lock:
                self._idle = False
                self._wake.set()

    def flush(self) -> None:
        done = threading.Event()
        self.submit(done.set)
        done.wait()

    def shutdown(self):
        with self._lock:
            self._stop = True
            self._idle = False
            self._wake.set()
        self.thread.join()
        self.threads = []


class RedLock:
    """Mutual exclusion between replicas that share a binding.

    Ownership is per (thread, replica index), so replicas that happen to
    run on the same thread still count as distinct owners.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._owner = None
        self._destroyed = False

    @staticmethod
    def _me():
        return threading.get_ident(), getattr(_tls, "replica", None)

    def set(self):
        if self._destroyed:
            raise RuntimeError("lock destroyed")
        self._lock.acquire()
        self._owner = self._me()

    def unset(self):
        if self._owner != self._me():
            raise UnsetNotOwner(f"lock owned by {self._owner}, released by {self._me()}")
        self._owner = None
        self._lock.release()

    def destroy(self):
        if self._owner is not None:
            raise DestroyWhileHeld(f"lock held by {self._owner}")
        self._destroyed = True

    @property
    def held(self) -> bool:
        return self._owner is not None

    def __enter__(self):
        self.set()
        return self

    def __exit__(self, *exc):
        self.unset()


_tls = threading.local()
_active_lock = threading.Lock()
_active: Optional["Runtime"] = None


_OFF = Strength.OFF


def _normalise(out, spec: SphereSpec):
    names = spec.compare_vars
    t = type(out)
    if t is tuple:
        if len(out) != len(names):
            raise ValueError(f"unit returned {len(out)} values for compare list {names}")
        return out, dict(zip(names, out))
    if t is dict or isinstance(out, abc.Mapping):
        return tuple(out[n] for n in names), out
    out = tuple(out)
    if len(out) != len(names):
        raise ValueError(f"unit returned {len(out)} values for compare list {names}")
    return out, dict(zip(names, out))


class Runtime:
    """Handle returned by :func:`redthreads_initialize`."""

    def __init__(self, config: Optional[RuntimeConfig] = None):
        cfg = (config or RuntimeConfig()).resolved()
        self.config = cfg
        start = Strength.OFF if cfg.dynamic else cfg.max_strength
        self.icv = InternalControlVariables(start, cfg.dynamic, cfg.max_strength)
        self.monitor = AdaptiveMonitor(self.icv, window=cfg.tbe_window, clock=cfg.clock)
        self._seq = itertools.count()
        self._inflight = deque()
        self._threaded = cfg.threaded
        self._pool = None
        self._dup_pool = None
        self._buffer = None
        self._detector = None
        self.entry_hook: Optional[Callable[[int], None]] = None
        # fault_hook(seq, replica_index, replica_count, record) -> record; sees every
        # replica's record before comparison (the harness corrupts through it)
        self.fault_hook: Optional[Callable[[int, int, int, OutputRecord], OutputRecord]] = None
        self.affinity_plan = None
        self.counts = {s: 0 for s in Strength}
        self._finalized = False
        self._primary_tids = {threading.get_native_id()}
        if self._threaded:
            self._pool = _WorkerPool(Strength.CORRECT.replica_count - 1, "redthreads-replica")
        if cfg.lazy:
            self._buffer = CyclicBuffer(cfg.buffer_capacity, block=cfg.block_on_full)
            self._dup_pool = _BatchWorker("redthreads-duplicate")
            self._detector = LazyDetector(self._buffer, on_mismatch=cfg.on_deferred_error).start()
        if cfg.install_signal_handler:
            self.monitor.install_signal_handler()
        if cfg.poll_interval:
            self.monitor.start_periodic(cfg.poll_interval)

    # -- ICV access ------------------------------------------------------------

    def get_strength(self) -> Strength:
        return self.icv.current

    def set_strength(self, s) -> None:
        s = Strength.parse(s)
        self.icv.current = s if s <= self.icv.max else self.icv.max

    def get_dynamic(self) -> bool:
        return self.icv.dynamic

    def set_dynamic(self, flag: bool) -> None:
        self.icv.dynamic = bool(flag)

    @property
    def lazy(self) -> bool:
        return self._buffer is not None

    @property
    def spheres_entered(self) -> int:
        return sum(self.counts.values())

    @property
    def rmt_spheres(self) -> int:
        return self.counts[Strength.DETECT] + self.counts[Strength.CORRECT]

    # -- fork / join / compare (the outlined-call building blocks) ------------

    def _replica(self, unit, r, shared, private):
        _tls.replica = r
        try:
            return unit(r, shared, private)
        except Exception as exc:  # a crashing replica is a divergent replica
            return _ReplicaPanic(exc)
        finally:
            _tls.replica = None

    def fork(self, spec: SphereSpec, unit, inputs: Mapping[str, Any], strength: Strength):
        """Start ``strength.replica_count`` replicas; returns join handles."""
        shared = {n: inputs[n] for n in spec.shared_vars}
        k = strength.replica_count
        privs = [{n: redthreads_private_copy(inputs[n]) for n in spec.private_vars}
                 for _ in range(k)]
        handles = []
        if self._threaded and k > 1:
            for r in range(1, k):
                handles.append(self._pool.submit(self._replica, unit, r, shared, privs[r]))
            return [self._replica(unit, 0, shared, privs[0])] + handles
        return [self._replica(unit, r, shared, privs[r]) for r in range(k)]

    def join(self, spec: SphereSpec, handles, seq: int):
        """Barrier: wait for every replica, then build (possibly hooked) records."""
        raws = [h.wait() if isinstance(h, _Job) else h for h in handles]
        recs, carries = [], []
        hook = self.fault_hook
        k = len(raws)
        for r, raw in enumerate(raws):
            if isinstance(raw, _ReplicaPanic):
                recs.append(PANICKED)
                carries.append({})
                continue
            payloads, carry = _normalise(raw, spec)
            rec = OutputRecord(spec.id, r, tuple(zip(spec.compare_vars, payloads)), monotonic())
            if hook is not None:
                rec = hook(seq, r, k, rec)
            recs.append(rec)
            carries.append(carry)
        return recs, carries

    # -- main entry point --------------------------------------------------------

    def execute_sphere(self, spec: SphereSpec, unit, inputs: Mapping[str, Any]) -> SphereResult:
        if not spec._validated:
            validate_spec(spec)
        if _tls.__dict__.get("replica") is not None:
            raise SpecError("NestedSphere", f"sphere {spec.id!r} opened inside a replica")
        if not spec._required <= inputs.keys():
            raise SpecError("MissingBinding", ", ".join(sorted(spec._required - inputs.keys())))
        seq = next(self._seq)
        if self.entry_hook is not None:
            self.entry_hook(seq)
        icv = self.icv
        mon = self.monitor
        cur = icv.current
        if mon._pending:
            cur = mon.poll_and_apply()
        elif icv.dynamic:
            # with no events on record the policy answer is Off
            if mon._stats.event_count:
                cur = mon.poll_and_apply()
            elif cur is not _OFF:
                icv.current = cur = _OFF
        s = spec.strength_requested
        if cur < s:
            s = cur
        self.counts[s] += 1
        inflight = self._inflight
        inflight.append(seq)
        try:
            t0 = perf_counter()
            if s == Strength.OFF:
                res = self._serial(spec, unit, inputs, seq)
            elif s == Strength.DETECT and self._buffer is not None:
                res = self._lazy_detect(spec, unit, inputs, seq)
            elif not self._threaded:
                res = self._inline(spec, unit, inputs, seq, s)
            else:
                handles = self.fork(spec, unit, inputs, s)
                recs, carries = self.join(spec, handles, seq)
                res = self._resolve(spec, s, seq, recs, carries)
            res.duration = perf_counter() - t0
            return res
        finally:
            inflight.pop()

    def _serial(self, spec, unit, inputs, seq):
        shared = {n: inputs[n] for n in spec.shared_vars}
        private = {n: inputs[n] for n in spec.private_vars}
        tls = _tls
        tls.replica = 0
        try:
            raw = unit(0, shared, private)
        finally:
            tls.replica = None
        payloads, carry = _normalise(raw, spec)
        rec = OutputRecord(spec.id, 0, tuple(zip(spec.compare_vars, payloads)), monotonic())
        if self.fault_hook is not None:
            hooked = self.fault_hook(seq, 0, 1, rec)
            if hooked is not rec:
                carry = dict(carry)
                carry.update(hooked.values)
                rec = hooked
        return SphereResult(Status.SERIAL_DONE, Strength.OFF, seq, 0.0, rec, carry)

    def _inline(self, spec, unit, inputs, seq, s):
        # same semantics as fork + join + _resolve, minus the handle plumbing
        shared = {n: inputs[n] for n in spec.shared_vars}
        pv = spec.private_vars
        names = spec.compare_vars
        hook = self.fault_hook
        tls = _tls
        k = s.replica_count
        raws, pays = [], []
        for r in range(k):
            private = {n: redthreads_private_copy(inputs[n]) for n in pv} if pv else {}
            tls.replica = r
            try:
                raw = unit(r, shared, private)
            except Exception:
                raws.append(None)
                pays.append(None)
                continue
            finally:
                tls.replica = None
            raws.append(raw)
            pays.append(raw if type(raw) is tuple and len(raw) == len(names)
                        else _normalise(raw, spec)[0])
        p0 = pays[0]
        if hook is None and None not in pays:
            # fast path: no record is built for a replica that agrees with 0
            policy = spec.compare_policy
            for py in pays[1:]:
                for x, y in zip(p0, py):
                    if not ((type(x) is float and type(y) is float and x == y and x != 0.0)
                            or payloads_match(x, y, policy)):
                        break
                else:
                    continue
                break
            else:
                rec = OutputRecord(spec.id, 0, tuple(zip(names, p0)), monotonic())
                return SphereResult(Status.VERIFIED, s, seq, 0.0, rec, _normalise(raws[0], spec)[1])
        carries = [{} if raw is None else _normalise(raw, spec)[1] for raw in raws]
        recs = []
        for r, payloads in enumerate(pays):
            if payloads is None:
                recs.append(PANICKED)
                continue
            rec = OutputRecord(spec.id, r, tuple(zip(names, payloads)), monotonic())
            if hook is not None:
                rec = hook(seq, r, k, rec)
            recs.append(rec)
        a = recs[0]
        if not any(r is PANICKED for r in recs):
            policy = spec.compare_policy
            for other in recs[1:]:
                if compare_outputs(a, other, policy) is not MATCH:
                    break
            else:
                return SphereResult(Status.VERIFIED, s, seq, 0.0, a, _merged(carries[0], a))
        return self._resolve(spec, s, seq, recs, carries)

    def _resolve(self, spec, s, seq, recs, carries):
        policy = spec.compare_policy
        if s == Strength.DETECT:
            a, b = recs
            if a is PANICKED or b is PANICKED:
                outcome = Mismatch(spec.compare_vars[0], (0, 1), reason="replica-panic")
            else:
                outcome = compare_outputs(a, b, policy)
            if outcome is MATCH:
                return SphereResult(Status.VERIFIED, s, seq, 0.0, a, _merged(carries[0], a))
            return SphereResult(Status.DETECTED_ERROR, s, seq, 0.0, None,
                                _merged(carries[0], a), outcome, records=tuple(recs))
        live = [r for r in recs if r is not PANICKED]
        if len(live) == 3:
            vote = majority_vote(*recs, policy=policy)
        elif len(live) == 2:
            x, y = live
            if compare_outputs(x, y, policy) is MATCH:
                dead = next(k for k, r in enumerate(recs) if r is PANICKED)
                vote = MajorityCorrected(x.values, dead)
            else:
                vote = NoMajority(spec.compare_vars[0])
        else:
            vote = NoMajority(spec.compare_vars[0])
        if isinstance(vote, Unanimous):
            return SphereResult(Status.VERIFIED, s, seq, 0.0, recs[0], _merged(carries[0], recs[0]))
        if isinstance(vote, MajorityCorrected):
            keep = next(k for k, r in enumerate(recs)
                        if k != vote.outvoted and r is not PANICKED)
            rec = OutputRecord(spec.id, keep, vote.values, monotonic())
            return SphereResult(Status.CORRECTED, s, seq, 0.0, rec, _merged(carries[keep], rec),
                                vote, vote.outvoted, tuple(recs))
        first = recs[0] if recs[0] is not PANICKED else None
        return SphereResult(Status.UNCORRECTABLE_ERROR, s, seq, 0.0, None,
                            _merged(carries[0], first) if first else {}, vote, records=tuple(recs))

    def _lazy_detect(self, spec, unit, inputs, seq):
        shared = {n: inputs[n] for n in spec.shared_vars}
        p0 = {n: redthreads_private_copy(inputs[n]) for n in spec.private_vars}
        p1 = {n: redthreads_private_copy(inputs[n]) for n in spec.private_vars}
        if self._threaded:
            self._dup_pool.submit(self._lazy_replica, spec, unit, 1, shared, p1, seq)
            rec, carry = self._lazy_replica(spec, unit, 0, shared, p0, seq)
        else:
            # inline dispatch: both replicas run here and only the comparison
            # is left to the detector thread
            rec, carry = self._lazy_replica(spec, unit, 0, shared, p0, seq)
            self._lazy_replica(spec, unit, 1, shared, p1, seq)
        if rec is PANICKED:
            return SphereResult(Status.DETECTED_ERROR, Strength.DETECT, seq, 0.0, None, {},
                                Mismatch(spec.compare_vars[0], (0,), reason="replica-panic"))
        return SphereResult(Status.DEFERRED, Strength.DETECT, seq, 0.0, rec, _merged(carry, rec))

    def _lazy_replica(self, spec, unit, r, shared, private, seq):
        raw = self._replica(unit, r, shared, private)
        carry = None
        if isinstance(raw, _ReplicaPanic):
            rec = PANICKED
        else:
            payloads, carry = _normalise(raw, spec)
            rec = OutputRecord(spec.id, r, tuple(zip(spec.compare_vars, payloads)), monotonic())
            if self.fault_hook is not None:
                rec = self.fault_hook(seq, r, 2, rec)
        self._buffer.deposit(seq, r, rec, spec.compare_policy)
        return rec, carry

    # -- lazy-mode reporting -------------------------------------------------------

    def wait_duplicates(self):
        """Block until every queued duplicate replica has deposited its record."""
        if self._dup_pool is not None:
            self._dup_pool.flush()

    def drain(self) -> List[Tuple[int, Any]]:
        """Finish all deferred comparisons; returns the full ordered report."""
        if self._detector is None:
            return []
        self.wait_duplicates()
        return self._detector.drain()

    def deferred_report(self) -> List[Tuple[int, Any]]:
        return [] if self._detector is None else self._detector.report()

    def deferred_errors(self) -> List[Tuple[int, Any]]:
        return [] if self._detector is None else self._detector.mismatches()

    @property
    def buffer(self) -> Optional[CyclicBuffer]:
        return self._buffer

    # -- threads ----------------------------------------------------------------------

    def register_primary_thread(self) -> None:
        self._primary_tids.add(threading.get_native_id())

    def thread_roster(self) -> Dict[Role, List[int]]:
        dups = []
        if self._pool is not None:
            dups += [t.native_id for t in self._pool.threads]
        if self._dup_pool is not None:
            dups += [t.native_id for t in self._dup_pool.threads]
        det = [self._detector.thread.native_id] if self._detector is not None else []
        return {Role.PRIMARY: sorted(self._primary_tids), Role.DUPLICATE: dups, Role.DETECTOR: det}

    def threads(self) -> List[threading.Thread]:
        out = []
        for pool in (self._pool, self._dup_pool):
            if pool is not None:
                out += pool.threads
        if self._detector is not None:
            out.append(self._detector.thread)
        if self.monitor.thread is not None:
            out.append(self.monitor.thread)
        return out

    # -- teardown ---------------------------------------------------------------------

    def finalize(self) -> List[Tuple[int, Any]]:
        global _active
        if self._finalized:
            return self.deferred_report()
        if self._inflight:
            raise PendingSpheres(f"{len(self._inflight)} sphere(s) still executing")
        report = self.drain()
        if self._detector is not None:
            self._detector.stop()
        for pool in (self._dup_pool, self._pool):
            if pool is not None:
                pool.shutdown()
        self.monitor.stop()
        self._finalized = True
        with _active_lock:
            if _active is self:
                _active = None
        return report

    @property
    def finalized(self) -> bool:
        return self._finalized

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.finalize()


def _merged(carry, rec):
    if rec is None or rec is PANICKED:
        return carry
    vals = rec.values
    for n, v in vals:
        if carry.get(n, carry) is not v:
            break
    else:
        return carry
    out = dict(carry)
    out.update(vals)
    return out


# -- module-level routines, one per runtime library call ------------------------------

def redthreads_initialize(config: Optional[RuntimeConfig] = None) -> Runtime:
    """Create the process-wide runtime. Raises AlreadyInitialized if one is live."""
    global _active
    with _active_lock:
        if _active is not None and not _active.finalized:
            raise AlreadyInitialized("a runtime is already live in this process")
        rt = Runtime(config)
        _active = rt
    return rt


def redthreads_finalize(handle: Runtime):
    return handle.finalize()


def active_runtime() -> Optional[Runtime]:
    return _active


def execute_sphere(handle: Runtime, spec: SphereSpec, unit, inputs) -> SphereResult:
    return handle.execute_sphere(spec, unit, inputs)


def redthreads_get_strength(handle: Runtime) -> Strength:
    return handle.get_strength()


def redthreads_set_strength(handle: Runtime, s) -> None:
    handle.set_strength(s)


def redthreads_get_dynamic(handle: Runtime) -> bool:
    return handle.get_dynamic()


def redthreads_set_dynamic(handle: Runtime, flag: bool) -> None:
    handle.set_dynamic(flag)


def redthreads_thread_num() -> int:
    r = getattr(_tls, "replica", None)
    if r is None:
        raise NotInSphere("redthreads_thread_num() called outside a sphere")
    return r


def redthreads_init_lock() -> RedLock:
    return RedLock()


def redthreads_destroy_lock(lock: RedLock) -> None:
    lock.destroy()


def redthreads_set_lock(lock: RedLock) -> None:
    lock.set()


def redthreads_unset_lock(lock: RedLock) -> None:
    lock.unset()


def redthreads_fork(handle: Runtime, spec: SphereSpec, unit, inputs, strength) -> list:
    return handle.fork(spec, unit, inputs, Strength.parse(strength))


def redthreads_join(handle: Runtime, spec: SphereSpec, handles, seq: int = -1):
    recs, _ = handle.join(spec, handles, seq)
    return recs


def redthreads_compare(records: Sequence[OutputRecord], policy: ComparePolicy):
    """compare_outputs for two records, majority_vote for three."""
    if len(records) == 2:
        return compare_outputs(records[0], records[1], policy)
    if len(records) == 3:
        return majority_vote(*records, policy=policy)
    raise ValueError("need two or three records")


def declare(strength="detect", compare: Sequence[str] = ("result",), shared: Sequence[str] = (),
            private: Sequence[str] = (), policy: ComparePolicy = ComparePolicy(),
            runtime: Optional[Runtime] = None):
    """Decorator form: every call of the function body is one sphere.

    The wrapped function takes its scoped variables as keyword arguments
    and returns the compared values. Calls return the SphereResult.
    """
    def wrap(fn):
        spec = SphereSpec(fn.__qualname__, strength, shared, private, compare, policy)

        def unit(_r, sh, pv):
            return fn(**sh, **pv)

        def call(**inputs):
            rt = runtime or _active
            if rt is None:
                raise NotInSphere("no live runtime; call redthreads_initialize() first")
            return rt.execute_sphere(spec, unit, inputs)

        call.spec = spec
        call.__wrapped__ = fn
        call.__name__ = fn.__name__
        return call

    return wrap
