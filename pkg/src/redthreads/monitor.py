"""Fault-event monitor and the opportunistic redundancy policy.

The monitor keeps a log of fault notifications, a windowed mean of the
time between events (TBE) and the time of the last event. Redundancy is
switched on at the first event and switched off again once the time since
the last event (TSLE) exceeds the mean TBE.

Notifications may arrive from a signal handler. :meth:`AdaptiveMonitor.notify`
only appends to a queue; statistics and the strength ICV are updated when
the queue is drained, which happens on every :meth:`poll_and_apply` (the
runtime polls at every sphere entry) and on explicit :meth:`ingest_event`.
"""

from __future__ import annotations

import enum
import signal
import threading
import time
from collections import deque
from dataclasses import dataclass
from typing import Any, Callable, List, Optional

from redthreads.errors import TimestampRegression
from redthreads.sphere import Strength

__all__ = [
    "EventSource", "FaultEvent", "EventStatistics", "AdaptiveMonitor", "decide_mode",
    "replay",
]

DEFAULT_WINDOW = 32


class EventSource(enum.Enum):
    EXTERNAL = "external"
    INJECTED = "injected"


@dataclass(frozen=True)
class FaultEvent:
    timestamp: float
    source: EventSource = EventSource.INJECTED
    payload: Any = None


@dataclass(frozen=True)
class EventStatistics:
    event_count: int = 0
    mean_tbe: Optional[float] = None
    last_event_time: Optional[float] = None

    def tsle(self, now: float) -> Optional[float]:
        if self.last_event_time is None:
            return None
        return now - self.last_event_time


def decide_mode(stats: EventStatistics, now: float,
                max_strength: Strength = Strength.DETECT) -> Strength:
    """Strength the policy wants at time ``now``.

    Off with no events; Off when a mean TBE exists and TSLE exceeds it;
    ``max_strength`` otherwise (a single event keeps redundancy on).
    """
    if stats.event_count == 0:
        return Strength.OFF
    if stats.mean_tbe is not None and now - stats.last_event_time > stats.mean_tbe:
        return Strength.OFF
    return max_strength


class AdaptiveMonitor:
    """Event log plus the ICV rewrite rule.

    ``icv`` is any object with ``current``, ``dynamic`` and ``max``
    attributes; the runtime passes its :class:`InternalControlVariables`.
    """

    def __init__(self, icv, window: int = DEFAULT_WINDOW,
                 clock: Callable[[], float] = time.monotonic):
        if window < 1:
            raise ValueError("TBE window must be >= 1")
        self._icv = icv
        self._clock = clock
        self._gaps = deque(maxlen=window)
        self._log: List[FaultEvent] = []
        self._stats = EventStatistics()
        self._pending = deque()
        self._lock = threading.Lock()
        self._prev_handler = None
        self._signum = None
        self._timer = None
        self._timer_stop = threading.Event()

    @property
    def window(self) -> int:
        return self._gaps.maxlen

    @property
    def statistics(self) -> EventStatistics:
        return self._stats

    @property
    def log(self) -> List[FaultEvent]:
        return list(self._log)

    def reset(self) -> None:
        """Forget every event; the ICV drops to Off if dynamic."""
        with self._lock:
            self._pending.clear()
            self._gaps.clear()
            self._log.clear()
            self._stats = EventStatistics()
            if self._icv.dynamic:
                self._icv.current = Strength.OFF

    # -- ingestion ---------------------------------------------------------

    def notify(self, payload=None, source: EventSource = EventSource.EXTERNAL,
               timestamp: Optional[float] = None) -> None:
        """Queue one event; safe to call from a signal handler."""
        ts = self._clock() if timestamp is None else timestamp
        self._pending.append(FaultEvent(ts, source, payload))

    def ingest_event(self, event: FaultEvent) -> EventStatistics:
        with self._lock:
            self._drain_pending_locked()
            stats = self._ingest_locked(event)
        return stats

    def _ingest_locked(self, event: FaultEvent) -> EventStatistics:
        last = self._stats.last_event_time
        if last is not None:
            if event.timestamp < last:
                raise TimestampRegression(f"event at {event.timestamp} after {last}")
            self._gaps.append(event.timestamp - last)
        self._log.append(event)
        mean = sum(self._gaps) / len(self._gaps) if self._gaps else None
        self._stats = EventStatistics(len(self._log), mean, event.timestamp)
        icv = self._icv
        if icv.dynamic:
            # TSLE is zero at the event itself, so the policy always says "on"
            icv.current = icv.max
        return self._stats

    def _drain_pending_locked(self):
        pending = self._pending
        while pending:
            ev = pending.popleft()
            try:
                self._ingest_locked(ev)
            except TimestampRegression:
                # signal-path events are stamped by our own clock; a regression
                # means a synthetic stamp raced a real one, so clamp it
                self._ingest_locked(FaultEvent(self._stats.last_event_time, ev.source, ev.payload))

    # -- policy --------------------------------------------------------------

    def poll_and_apply(self, now: Optional[float] = None) -> Strength:
        icv = self._icv
        if self._pending:
            with self._lock:
                self._drain_pending_locked()
        if not icv.dynamic:
            return icv.current
        stats = self._stats
        if stats.event_count == 0:
            s = Strength.OFF
        else:
            s = decide_mode(stats, self._clock() if now is None else now, icv.max)
        icv.current = s
        return s

    # -- OS signal hook ------------------------------------------------------

    def install_signal_handler(self, signum: int = signal.SIGUSR1) -> None:
        """Log one external event per delivery of ``signum`` (main thread only)."""
        def _handler(_signum, _frame):
            self.notify(payload=_signum, source=EventSource.EXTERNAL)

        self._prev_handler = signal.signal(signum, _handler)
        self._signum = signum

    def uninstall_signal_handler(self) -> None:
        if self._signum is None:
            return
        if threading.current_thread() is threading.main_thread():
            signal.signal(self._signum, self._prev_handler or signal.SIG_DFL)
        self._signum = None

    # -- optional periodic evaluation -----------------------------------------

    def start_periodic(self, interval: float) -> threading.Thread:
        def _loop():
            while not self._timer_stop.wait(interval):
                self.poll_and_apply()

        self._timer_stop.clear()
        self._timer = threading.Thread(target=_loop, name="redthreads-monitor", daemon=True)
        self._timer.start()
        return self._timer

    def stop(self) -> None:
        self._timer_stop.set()
        if self._timer is not None:
            self._timer.join()
            self._timer = None
        self.uninstall_signal_handler()

    @property
    def thread(self) -> Optional[threading.Thread]:
        return self._timer


class _ReplayICV:
    __slots__ = ("current", "dynamic", "max")

    def __init__(self, max_strength):
        self.current = Strength.OFF
        self.dynamic = True
        self.max = max_strength


def replay(event_times, poll_times, max_strength: Strength = Strength.DETECT,
           window: int = DEFAULT_WINDOW) -> List[Strength]:
    """Strength applied at each poll for a synthetic event trace.

    Events with ``timestamp <= poll`` are ingested before that poll.
    Pure function of its arguments.
    """
    icv = _ReplayICV(max_strength)
    mon = AdaptiveMonitor(icv, window=window, clock=lambda: 0.0)
    events = sorted(event_times)
    out = []
    k = 0
    for t in poll_times:
        while k < len(events) and events[k] <= t:
            mon.ingest_event(FaultEvent(events[k]))
            k += 1
        out.append(mon.poll_and_apply(t))
    return out
