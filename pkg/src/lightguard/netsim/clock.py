"""Discrete-event clock with deterministic tie-breaking."""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass
from typing import Callable, Iterable


class SchedulingError(ValueError):
    pass


class InvariantViolation(RuntimeError):
    """A global invariant hook failed; carries hook, event and timestamp."""

    def __init__(self, hook: str, event: str, time_ms: float, detail: str = ""):
        msg = f"invariant {hook!r} violated after event {event!r} at t={time_ms:.3f} ms"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
        self.hook = hook
        self.event = event
        self.time_ms = time_ms
        self.detail = detail


@dataclass(frozen=True)
class SimReport:
    start_ms: float
    end_ms: float
    events_processed: int


@dataclass(frozen=True)
class Hook:
    name: str
    check: Callable[[], bool | str | None]
    """Return True/None when satisfied; False or a diagnostic string on violation."""


class SimClock:
    def __init__(self, now_ms: float = 0.0):
        self.now_ms = float(now_ms)
        self._queue: list[tuple[float, int]] = []
        self._events: dict[int, tuple[str, Callable, tuple]] = {}
        self._ids = itertools.count()
        self.events_processed = 0

    def schedule(self, at_ms: float, callback: Callable, *args, label: str = "") -> int:
        if at_ms < self.now_ms:
            raise SchedulingError(f"cannot schedule at {at_ms} < now {self.now_ms}")
        event_id = next(self._ids)
        # ids are monotone, so (time, id) gives insertion order on ties
        heapq.heappush(self._queue, (at_ms, event_id))
        self._events[event_id] = (label or getattr(callback, "__name__", "event"), callback, args)
        return event_id

    def call_later(self, delay_ms: float, callback: Callable, *args, label: str = "") -> int:
        return self.schedule(self.now_ms + delay_ms, callback, *args, label=label)

    def cancel(self, event_id: int) -> bool:
        return self._events.pop(event_id, None) is not None

    def pending(self) -> int:
        return len(self._events)

    def next_time(self) -> float | None:
        while self._queue and self._queue[0][1] not in self._events:
            heapq.heappop(self._queue)
        return self._queue[0][0] if self._queue else None

    def step(self) -> str | None:
        """Fire the next event; return its label, or None if the queue is empty."""
        while self._queue:
            at_ms, event_id = heapq.heappop(self._queue)
            entry = self._events.pop(event_id, None)
            if entry is None:
                continue
            label, callback, args = entry
            self.now_ms = at_ms
            callback(*args)
            self.events_processed += 1
            return label
        return None

    def run_until(self, t_end_ms: float, hooks: Iterable[Hook] = (),
                  stop: Callable[[], bool] | None = None) -> SimReport:
        if t_end_ms < self.now_ms:
            raise SchedulingError(f"t_end {t_end_ms} < now {self.now_ms}")
        hooks = tuple(hooks)
        start, processed = self.now_ms, self.events_processed
        while True:
            t = self.next_time()
            if t is None or t > t_end_ms:
                break
            label = self.step()
            for hook in hooks:
                verdict = hook.check()
                if verdict is False or isinstance(verdict, str):
                    raise InvariantViolation(hook.name, label, self.now_ms,
                                             verdict if isinstance(verdict, str) else "")
            if stop is not None and stop():
                return SimReport(start, self.now_ms, self.events_processed - processed)
        self.now_ms = t_end_ms
        return SimReport(start, t_end_ms, self.events_processed - processed)
