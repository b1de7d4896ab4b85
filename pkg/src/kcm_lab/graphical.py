"""Graphical construction: per-site Poisson clocks with Bernoulli marks.

``EventStream`` is the reference (pure Python, heap-merged) realisation used
by :mod:`kcm_lab.dynamics`. The compiled kernels draw from exactly the same
per-site streams, so the two can be compared event for event.
"""

from __future__ import annotations

import csv
import heapq
import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .rng import fast_forward, ring_gap, ring_mark, site_key


@dataclass(frozen=True)
class StreamKey:
    seed: int
    site: int

    @property
    def key(self) -> np.uint64:
        return np.uint64(site_key(np.uint64(self.seed), np.int64(self.site)))


@dataclass(frozen=True, order=True)
class Event:
    time: float
    site: int
    mark: int
    index: int = -1  # position in the site's stream; -1 for scripted events


class EventStream:
    """Seeded stream over an active window ``[lo, hi]`` of sites.

    The key site of ``x`` is ``m_off + m_sign * x``, which lets a run be
    replayed on the mirror image of the lattice.
    """

    def __init__(self, seed: int, q: float, lo: int, hi: int, m_off: int = 0, m_sign: int = 1):
        if hi < lo:
            raise ValueError("active window is empty")
        self.seed = np.uint64(seed)
        self.q = float(q)
        self.p = 1.0 - self.q
        self.m_off = int(m_off)
        self.m_sign = int(m_sign)
        self.clock = 0.0
        self.lo = lo
        self.hi = hi
        self._keys: dict[int, np.uint64] = {}
        self._heap: list = []
        for x in range(lo, hi + 1):
            self._activate(x, 0.0)

    def _activate(self, x, t):
        key = np.uint64(site_key(self.seed, np.int64(self.m_off + self.m_sign * x)))
        self._keys[x] = key
        if t <= 0.0:
            tt, j = float(ring_gap(key, 0)), 0
        else:
            tt, j = fast_forward(key, t)
        heapq.heappush(self._heap, (float(tt), x, int(j)))

    def peek_time(self) -> float:
        return self._heap[0][0]

    def next_event(self) -> Event:
        t, x, j = heapq.heappop(self._heap)
        key = self._keys[x]
        mark = int(ring_mark(key, np.int64(j), self.p))
        heapq.heappush(self._heap, (t + float(ring_gap(key, np.int64(j + 1))), x, j + 1))
        self.clock = t
        return Event(t, x, mark, j)

    def extend_window(self, new_lo: int | None = None, new_hi: int | None = None):
        """Activate sites down to ``new_lo`` (and up to ``new_hi``).

        New sites only deliver rings after the current clock.
        """
        if new_lo is not None and new_lo < self.lo:
            for x in range(new_lo, self.lo):
                self._activate(x, self.clock)
            self.lo = new_lo
        if new_hi is not None and new_hi > self.hi:
            for x in range(self.hi + 1, new_hi + 1):
                self._activate(x, self.clock)
            self.hi = new_hi

    def __iter__(self):
        while True:
            yield self.next_event()


class EventScript:
    """A finite, explicit list of events delivered in ``(time, site)`` order."""

    def __init__(self, events: Iterable):
        evs = [e if isinstance(e, Event) else Event(float(e[1]), int(e[0]), int(e[2]))
               for e in events]
        evs.sort(key=lambda e: (e.time, e.site))
        last: dict[int, float] = {}
        for e in evs:
            if e.time < 0:
                raise ValueError("event times must be nonnegative")
            if e.mark not in (0, 1):
                raise ValueError("marks are bits")
            if e.site in last and e.time <= last[e.site]:
                raise ValueError(f"times at site {e.site} are not strictly increasing")
            last[e.site] = e.time
        self.events = evs
        self._k = 0
        self.clock = 0.0

    def peek_time(self) -> float:
        return self.events[self._k].time if self._k < len(self.events) else math.inf

    def next_event(self) -> Event:
        if self._k >= len(self.events):
            raise StopIteration("script exhausted")
        e = self.events[self._k]
        self._k += 1
        self.clock = e.time
        return e

    def extend_window(self, new_lo=None, new_hi=None):
        pass

    def __len__(self):
        return len(self.events)


@dataclass
class EventLog:
    """Every ring on ``[lo, hi]`` during ``[t_start, t_end]``."""
    events: list
    lo: int
    hi: int
    t_start: float
    t_end: float

    @classmethod
    def record(cls, seed, q, lo, hi, t_end) -> "EventLog":
        st = EventStream(seed, q, lo, hi)
        evs = []
        while st.peek_time() <= t_end:
            evs.append(st.next_event())
        return cls(evs, lo, hi, 0.0, t_end)

    def times_by_site(self) -> dict:
        out: dict[int, list] = {}
        for e in self.events:
            out.setdefault(e.site, []).append(e.time)
        return {k: np.asarray(sorted(v)) for k, v in out.items()}


def ring_path_exists(log: EventLog, x: int, y: int, t0: float, t1: float) -> bool:
    """Is there a chain of rings at ``x + 1, ..., y`` at increasing times in
    ``[t0, t1]``?

    Earliest-arrival relaxation from left to right. Paths that step back can
    never arrive earlier, so scanning monotonically is exact.
    """
    if x > y:
        raise ValueError("need x <= y")
    if x < log.lo or y > log.hi or t0 < log.t_start or t1 > log.t_end:
        raise ValueError("log does not cover the requested span")
    if x == y:
        return True
    by_site = log.times_by_site()
    arrive = t0
    first = True
    for z in range(x + 1, y + 1):
        ts = by_site.get(z)
        if ts is None or ts.size == 0:
            return False
        k = np.searchsorted(ts, arrive, side="left" if first else "right")
        if k == ts.size or ts[k] > t1:
            return False
        arrive = ts[k]
        first = False
    return True


# ---------------------------------------------------------------------- CSV

def write_events_csv(path, events: Iterable[Event]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["site", "time", "mark"])
        for e in events:
            w.writerow([e.site, f"{e.time:.17g}", e.mark])


def read_events_csv(path) -> EventScript:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return EventScript(Event(float(r["time"]), int(r["site"]), int(r["mark"])) for r in rows)
