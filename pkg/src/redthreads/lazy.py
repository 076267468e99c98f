"""Deferred (lazy) output comparison for dual-redundant spheres.

Replicas deposit their OutputRecords into a cyclic FIFO keyed by the
sphere sequence number; a detector thread compares complete pairs off the
critical path and reclaims their slots. Mismatches land in a report the
application can query and, optionally, trigger a callback.
"""

from __future__ import annotations

import threading
from typing import Callable, List, Optional, Tuple

from redthreads.errors import BufferFull
from redthreads.sphere import BITWISE, ComparePolicy, Mismatch, compare_outputs

__all__ = [
    "PANICKED", "OutputBufferEntry", "CyclicBuffer", "LazyDetector", "detector_scan", "drain",
]

DEFAULT_CAPACITY = 64


class _Panicked:
    """Placeholder deposited by a replica whose unit raised."""

    def __repr__(self):
        return "PANICKED"


PANICKED = _Panicked()


class OutputBufferEntry:
    __slots__ = ("seq", "elements", "valid", "active", "policy", "lock")

    def __init__(self):
        self.seq = -1
        self.elements = [None, None]
        self.valid = [False, False]
        self.active = False
        self.policy = BITWISE
        self.lock = threading.Lock()

    def _reclaim(self):
        self.elements[0] = self.elements[1] = None
        self.valid[0] = self.valid[1] = False
        self.active = False


def _pair_outcome(a, b, policy):
    if a is PANICKED or b is PANICKED:
        live = b if a is PANICKED else a
        name = live.values[0][0] if live is not PANICKED and live.values else ""
        return Mismatch(name, (0, 1), reason="replica-panic")
    return compare_outputs(a, b, policy)


class CyclicBuffer:
    """Fixed-capacity ring of :class:`OutputBufferEntry`, slot = seq % capacity."""

    def __init__(self, capacity: int = DEFAULT_CAPACITY, block: bool = True):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.block = block
        self.slots = [OutputBufferEntry() for _ in range(capacity)]
        self.ready = threading.Event()
        self._space = threading.Condition()
        self.deposits = 0
        self.compared = 0
        self._complete = 0
        # wake the detector once this many pairs are waiting
        self.wake_at = max(1, capacity // 2)

    def occupancy(self) -> int:
        return sum(1 for s in self.slots if s.active)

    def deposit(self, seq: int, replica_index: int, rec, policy: ComparePolicy = BITWISE,
                timeout: Optional[float] = None) -> None:
        """Store one replica's record; blocks (or raises BufferFull) if the slot is busy."""
        slot = self.slots[seq % self.capacity]
        while True:
            with slot.lock:
                if not slot.active or slot.seq == seq:
                    if not slot.active:
                        slot.seq = seq
                        slot.active = True
                        slot.policy = policy
                    slot.elements[replica_index] = rec
                    slot.valid[replica_index] = True
                    complete = slot.valid[0] and slot.valid[1]
                    break
            if not self.block:
                raise BufferFull(f"slot {seq % self.capacity} busy with sphere #{slot.seq}")
            self.ready.set()
            with self._space:
                # re-check under the condition lock so a reclaim cannot slip between
                with slot.lock:
                    busy = slot.active and slot.seq != seq
                if busy and not self._space.wait(timeout if timeout is not None else 1.0):
                    if timeout is not None:
                        raise BufferFull(f"timed out waiting for slot {seq % self.capacity}")
        self.deposits += 1
        if complete:
            self._complete += 1
            if self._complete >= self.wake_at:
                self.ready.set()

    def scan(self, policy: Optional[ComparePolicy] = None) -> List[Tuple[int, object]]:
        """Compare and reclaim every entry whose two elements are both valid."""
        taken = []
        for slot in self.slots:
            if not (slot.valid[0] and slot.valid[1]):
                continue
            with slot.lock:
                if not (slot.active and slot.valid[0] and slot.valid[1]):
                    continue
                taken.append((slot.seq, slot.elements[0], slot.elements[1], slot.policy))
                slot._reclaim()
        self._complete = 0
        if taken:
            with self._space:
                self._space.notify_all()
        taken.sort(key=lambda t: t[0])
        out = [(seq, _pair_outcome(a, b, policy or pol)) for seq, a, b, pol in taken]
        self.compared += len(out)
        return out

    def orphans(self) -> List[Tuple[int, object]]:
        """Reclaim half-filled entries, reporting each as a missing-replica mismatch."""
        out = []
        for slot in self.slots:
            with slot.lock:
                if not slot.active:
                    continue
                present = slot.elements[0] if slot.valid[0] else slot.elements[1]
                name = present.values[0][0] if present not in (None, PANICKED) and present.values else ""
                missing = 1 if slot.valid[0] else 0
                out.append((slot.seq, Mismatch(name, (missing,), reason="replica-missing")))
                slot._reclaim()
        with self._space:
            self._space.notify_all()
        out.sort(key=lambda t: t[0])
        return out


def detector_scan(buf: CyclicBuffer, policy: Optional[ComparePolicy] = None):
    return buf.scan(policy)


class LazyDetector:
    """Background thread that keeps scanning a :class:`CyclicBuffer`."""

    def __init__(self, buffer: CyclicBuffer,
                 on_mismatch: Optional[Callable[[int, Mismatch], None]] = None,
                 interval: float = 0.05):
        self.buffer = buffer
        self.on_mismatch = on_mismatch
        self.interval = interval
        self._report: List[Tuple[int, object]] = []
        self._report_lock = threading.Lock()
        self._stop = False
        self._scan_lock = threading.Lock()
        self.thread = threading.Thread(target=self._loop, name="redthreads-detector", daemon=True)

    def start(self):
        self.thread.start()
        return self

    def _record(self, outcomes):
        if not outcomes:
            return
        with self._report_lock:
            self._report.extend(outcomes)
        if self.on_mismatch is not None:
            for seq, outcome in outcomes:
                if not outcome.matched:
                    self.on_mismatch(seq, outcome)

    def scan_once(self):
        with self._scan_lock:
            outcomes = self.buffer.scan()
        self._record(outcomes)
        return outcomes

    def _loop(self):
        ready = self.buffer.ready
        while not self._stop:
            ready.wait(self.interval)
            ready.clear()
            self.scan_once()

    def report(self) -> List[Tuple[int, object]]:
        with self._report_lock:
            return sorted(self._report, key=lambda t: t[0])

    def mismatches(self):
        return [(s, o) for s, o in self.report() if not o.matched]

    def drain(self, include_orphans: bool = True) -> List[Tuple[int, object]]:
        """Compare everything still buffered. Producers must be quiescent."""
        self.scan_once()
        if include_orphans:
            self._record(self.buffer.orphans())
        return self.report()

    def stop(self):
        self._stop = True
        self.buffer.ready.set()
        if self.thread.is_alive():
            self.thread.join()


def drain(buf: CyclicBuffer, policy: Optional[ComparePolicy] = None):
    """Compare every buffered entry on the calling thread; orphans become mismatches."""
    out = buf.scan(policy) + buf.orphans()
    out.sort(key=lambda t: t[0])
    return out
