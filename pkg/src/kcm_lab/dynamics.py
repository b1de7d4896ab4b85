"""Reference event-by-event dynamics.

This is the readable implementation of the update rules; the batch kernels in
:mod:`kcm_lab._kernels` are checked against it event for event.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np

from .graphical import Event
from .lattice import Kind, SimParams, SpinConfig, format_config


class ProcessKind(str, Enum):
    FA1F = "fa1f"
    CONTACT = "contact"


class WindowCapError(RuntimeError):
    """The stored window would exceed the hard cap. Carries the partial trajectory."""

    def __init__(self, msg, trajectory=None):
        super().__init__(msg)
        self.trajectory = trajectory


class StaleEventError(RuntimeError):
    pass


class SimState:
    """Mutable configuration plus clock. Single owner while evolving."""

    def __init__(self, config: SpinConfig, params: SimParams, kind=ProcessKind.FA1F):
        self.boundary = config.boundary
        self.lo = config.lo
        self.bits = config.bits.copy()
        self.params = params
        self.kind = ProcessKind(kind)
        self.clock = 0.0
        self.observers: list[Callable] = []

    @property
    def hi(self):
        return self.lo + self.bits.size - 1

    @property
    def config(self) -> SpinConfig:
        return SpinConfig(self.boundary, self.lo, self.hi, _pack(self.bits))

    def value(self, x):
        i = x - self.lo
        if 0 <= i < self.bits.size:
            return int(self.bits[i])
        return self.boundary.outside_value(x)

    def dynamic(self, x) -> bool:
        k = self.boundary.kind
        if k is Kind.INTERVAL:
            return 1 <= x <= self.boundary.L
        if k is Kind.HALFLINE:
            return self.lo <= x <= -1
        if k is Kind.LINE:
            return self.lo <= x <= self.hi
        return False

    def zeros_near_edge(self, x, margin=2):
        return x - self.lo < margin, self.hi - x < margin

    def grow(self, new_lo=None, new_hi=None):
        if new_lo is not None and new_lo < self.lo:
            self.bits = np.concatenate((np.ones(self.lo - new_lo, np.uint8), self.bits))
            self.lo = new_lo
        if new_hi is not None and new_hi > self.hi and self.boundary.kind is Kind.LINE:
            self.bits = np.concatenate((self.bits, np.ones(new_hi - self.hi, np.uint8)))

    def leftmost_zero(self):
        z = np.flatnonzero(self.bits == 0)
        return int(self.lo + z[0]) if z.size else None

    def rightmost_zero(self):
        z = np.flatnonzero(self.bits == 0)
        return int(self.lo + z[-1]) if z.size else None


def _pack(bits):
    from .lattice import pack_bits
    return pack_bits(bits)


def _resolve(obj, x):
    return obj.value(x) if isinstance(obj, SimState) else obj[x]


def _is_dynamic(obj, x):
    if isinstance(obj, SimState):
        return obj.dynamic(x)
    b = obj.boundary
    if b.kind is Kind.INTERVAL:
        return 1 <= x <= b.L
    return obj.lo <= x <= obj.hi and not b.frozen(x)


def constraint(config, x: int) -> int:
    """``1 - s(x - 1) s(x + 1)`` with neighbours read through the boundary."""
    if not _is_dynamic(config, x):
        raise ValueError(f"site {x} is frozen or a ghost")
    return 1 - _resolve(config, x - 1) * _resolve(config, x + 1)


def local_rate(config, x: int, params: SimParams, kind=ProcessKind.FA1F) -> float:
    c = constraint(config, x)
    s = _resolve(config, x)
    q = params.q
    if ProcessKind(kind) is ProcessKind.FA1F:
        return c * (q * s + (1.0 - q) * (1 - s))
    return c * q * s + (1.0 - q) * (1 - s)


def update_value(kind, cur, left, right, mark):
    """New value of a ringing site."""
    if left * right == 0:
        return mark
    if kind is ProcessKind.CONTACT and cur == 0 and mark == 1:
        return 1
    return cur


def apply_event(state: SimState, e: Event) -> int:
    """Apply one ring; returns the previous value of the site."""
    if e.time < state.clock:
        raise StaleEventError(f"event at {e.time} is before clock {state.clock}")
    x = e.site
    if not state.dynamic(x):
        raise ValueError(f"site {x} is frozen or a ghost")
    i = x - state.lo
    old = int(state.bits[i])
    state.bits[i] = update_value(state.kind, old, state.value(x - 1), state.value(x + 1), e.mark)
    state.clock = e.time
    return old


@dataclass
class Trajectory:
    initial: SpinConfig
    times: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    front_times: list = field(default_factory=list)
    front: list = field(default_factory=list)
    n_events: int = 0
    final: SpinConfig | None = None
    events: list | None = None

    def write_snapshots_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time", "lo", "bits"])
            for t, c in zip(self.times, self.snapshots):
                w.writerow([f"{t:.17g}", c.lo, format_config(c).split(":", 1)[1].split("@")[0].strip(".")])

    def write_front_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time", "X"])
            for t, x in zip(self.front_times, self.front):
                w.writerow([f"{t:.17g}", x])


def _front_of(state):
    k = state.boundary.kind
    if k is Kind.HALFLINE:
        z = state.leftmost_zero()
        return 0 if z is None else z
    if k is Kind.LINE:
        return state.leftmost_zero()
    return 0


def _pad(state, guard):
    """Initial window: ``guard`` sites beyond the outermost zeros."""
    k = state.boundary.kind
    if k is Kind.HALFLINE:
        f = _front_of(state)
        state.grow(new_lo=min(state.lo, f - guard))
    elif k is Kind.LINE:
        a, b = state.leftmost_zero(), state.rightmost_zero()
        if a is not None:
            state.grow(new_lo=min(state.lo, a - guard), new_hi=max(state.hi, b + guard))


def evolve(state: SimState, stream, horizon: float, snapshot_times=(), record_front=False,
           guard: int = 64, cap: int = 10**7, keep_events=False) -> Trajectory:
    """Run ``state`` on the rings of ``stream`` up to ``horizon``.

    Rings at times ``<= horizon`` are applied. A snapshot at time ``s`` shows
    the configuration after every ring at time ``<= s``. On open boundaries the
    window grows by ``guard`` sites whenever a site within 2 of an edge turns
    empty; the stream is extended in lockstep.
    """
    if horizon < state.clock:
        raise ValueError("horizon is before the current clock")
    traj = Trajectory(initial=state.config)
    return _run([state], stream, horizon, snapshot_times, record_front, guard, cap, [traj],
                keep_events)[0]


def couple_evolve(states, stream, horizon, snapshot_times=(), record_front=False,
                  guard=64, cap=10**7, check: Callable | None = None):
    """Drive several states with the same rings.

    Each ring is applied to every state for which its site is dynamic. When
    ``check`` is given it is called as ``check(states, event)`` after every
    ring (e.g. to assert an order between the states).
    """
    qs = {s.params.q for s in states}
    if len(qs) != 1:
        raise ValueError("coupled states must share q")
    trajs = [Trajectory(initial=s.config) for s in states]
    obs = [check] if check else []
    return _run(states, stream, horizon, snapshot_times, record_front, guard, cap, trajs,
                False, obs)


def _run(states, stream, horizon, snapshot_times, record_front, guard, cap, trajs,
         keep_events, extra_obs=()):
    open_kinds = (Kind.HALFLINE, Kind.LINE)
    opened = [s for s in states if s.boundary.kind in open_kinds]
    for s in opened:
        _pad(s, guard)
    if opened:
        stream.extend_window(min(s.lo for s in opened), max(s.hi for s in opened))
        for s in opened:
            s.grow(stream.lo, stream.hi)
    snaps = sorted(float(t) for t in snapshot_times)
    k = 0

    def record(t):
        for s, tr in zip(states, trajs):
            tr.times.append(t)
            tr.snapshots.append(s.config)

    def record_fronts(t):
        for s, tr in zip(states, trajs):
            tr.front_times.append(t)
            tr.front.append(_front_of(s))

    if record_front:
        record_fronts(states[0].clock)
    events = []
    while stream.peek_time() <= horizon:
        t = stream.peek_time()
        while k < len(snaps) and snaps[k] < t:
            record(snaps[k])
            k += 1
        e = stream.next_event()
        if keep_events:
            events.append(e)
        grow_lo = grow_hi = False
        for s, tr in zip(states, trajs):
            if not s.dynamic(e.site):
                s.clock = e.time
                continue
            old = apply_event(s, e)
            tr.n_events += 1
            new = s.value(e.site)
            if s.boundary.kind in open_kinds and new == 0 and old == 1:
                gl = e.site - stream.lo < 2
                gh = s.boundary.kind is Kind.LINE and stream.hi - e.site < 2
                grow_lo |= gl
                grow_hi |= gh
            for ob in s.observers:
                ob(s, e)
        for ob in extra_obs:
            ob(states, e)
        if record_front:
            record_fronts(e.time)
        if grow_lo or grow_hi:
            new_lo = stream.lo - guard if grow_lo else stream.lo
            new_hi = stream.hi + guard if grow_hi else stream.hi
            if new_hi - new_lo + 1 > cap:
                for s, tr in zip(states, trajs):
                    tr.final = s.config
                raise WindowCapError(f"window would exceed {cap} sites", trajs)
            stream.extend_window(new_lo, new_hi)
            for s in opened:
                s.grow(new_lo, new_hi)
    while k < len(snaps) and snaps[k] <= horizon:
        record(snaps[k])
        k += 1
    for s, tr in zip(states, trajs):
        s.clock = max(s.clock, horizon)
        tr.final = s.config
        if keep_events:
            tr.events = events
    return trajs
