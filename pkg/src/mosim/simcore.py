"""Deterministic discrete-event engine.

Time is an unsigned 64-bit count of picoseconds carried around as a plain
int.  1 ps resolution lets DDR4 sub-ns burst beats and 100 us flash
programs share one clock without fractional-cycle rounding.

Dispatch order is the lexicographic order of (fire_at, sequence); the
sequence number is assigned at schedule time, so two events scheduled for
the same instant fire in schedule order.  Everything is single-threaded
within one Simulator instance; independent instances share no state.
"""

import heapq

from .errors import SchedulingInPast, TimeOverflow

MAX_TIME = (1 << 64) - 1


class Event:
    """A scheduled callback.  Returned by schedule() as a cancellation handle."""

    __slots__ = ("fire_at", "seq", "target", "fn", "args", "cancelled")

    def __init__(self, fire_at, seq, target, fn, args):
        self.fire_at = fire_at
        self.seq = seq
        self.target = target
        self.fn = fn
        self.args = args
        self.cancelled = False

    def cancel(self):
        self.cancelled = True


class Simulator:
    def __init__(self, record_log=False):
        self.now = 0
        self._heap = []
        self._next_seq = 0
        self.dispatched = 0
        # (fire_at, seq, target) tuples, only kept when asked for
        self.record_log = record_log
        self.event_log = []

    def schedule(self, fire_at, target, fn, *args):
        """Enqueue fn(*args) to run at fire_at.  Returns a cancellable handle."""
        if fire_at < self.now:
            raise SchedulingInPast("fire_at %d < now %d" % (fire_at, self.now))
        if fire_at > MAX_TIME:
            raise TimeOverflow("fire_at %d exceeds 64-bit tick range" % fire_at)
        ev = Event(fire_at, self._next_seq, target, fn, args)
        self._next_seq += 1
        heapq.heappush(self._heap, (fire_at, ev.seq, ev))
        return ev

    def schedule_in(self, delay, target, fn, *args):
        return self.schedule(self.now + delay, target, fn, *args)

    def _pop_next(self):
        while self._heap:
            fire_at, seq, ev = heapq.heappop(self._heap)
            if ev.cancelled:
                continue
            return ev
        return None

    def peek_time(self):
        """fire_at of the next live event, or None if the queue is drained."""
        while self._heap:
            fire_at, seq, ev = self._heap[0]
            if ev.cancelled:
                heapq.heappop(self._heap)
                continue
            return fire_at
        return None

    def step(self):
        """Dispatch exactly one event.  Returns it, or None when drained."""
        ev = self._pop_next()
        if ev is None:
            return None
        self.now = ev.fire_at
        self.dispatched += 1
        if self.record_log:
            self.event_log.append((ev.fire_at, ev.seq, ev.target))
        ev.fn(*ev.args)
        return ev

    def run_until(self, limit):
        """Dispatch every event with fire_at <= limit; clock ends at limit."""
        while True:
            nxt = self.peek_time()
            if nxt is None or nxt > limit:
                break
            self.step()
        if limit > self.now:
            self.now = limit
        return self.now

    def run_all(self):
        """Drain the queue completely; returns the final clock value."""
        while self.step() is not None:
            pass
        return self.now
