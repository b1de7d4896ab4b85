"""Slow pure-Python counterparts of the compiled kernels, built on the
reference dynamics. Used only to cross-check kernel output."""

import numpy as np

from kcm_lab.dynamics import ProcessKind, SimState, couple_evolve, evolve
from kcm_lab.graphical import EventStream
from kcm_lab.lattice import BoundarySpec, SimParams, SpinConfig, front


def interval_snapshots(seed, q, bits, times, kind=ProcessKind.FA1F, m_off=0, m_sign=1):
    L = len(bits)
    st = SimState(SpinConfig.interval(bits), SimParams(q), kind)
    tr = evolve(st, EventStream(seed, q, 1, L, m_off, m_sign), float(times[-1]), times)
    return np.array([s.bits for s in tr.snapshots]), tr.n_events


def halfline_fronts(seed, q, bits, lo, times, guard=16, kind=ProcessKind.FA1F):
    st = SimState(SpinConfig.halfline(bits, lo), SimParams(q), kind)
    hi = -1
    tr = evolve(st, EventStream(seed, q, min(lo, -1) if len(bits) else -1, hi), float(times[-1]),
                times, guard=guard)
    return [front(s) for s in tr.snapshots], tr.snapshots, tr.n_events


def two_front(seed, q, bits, x0, y0, d, horizon, m_off=0, m_sign=1):
    """First time the inward fronts of the cluster (x0, y0) are within d."""
    L = len(bits)
    st = SimState(SpinConfig.interval(bits), SimParams(q))
    M2 = x0 + y0

    def fronts():
        vals = [st.value(x) for x in range(L + 2)]
        X = max(x for x in range(L + 2) if 2 * x <= M2 and vals[x] == 0)
        Y = min(x for x in range(L + 2) if 2 * x >= M2 and vals[x] == 0)
        return X, Y

    X, Y = fronts()
    if Y - X <= d:
        return 0.0, X, Y
    stream = EventStream(seed, q, 1, L, m_off, m_sign)
    while stream.peek_time() <= horizon:
        e = stream.next_event()
        from kcm_lab.dynamics import apply_event
        apply_event(st, e)
        X, Y = fronts()
        if Y - X <= d:
            return e.time, X, Y
    return horizon, X, Y


def domination(seed, q, bits, lo, guard, horizon):
    eta = SimState(SpinConfig.halfline(bits, lo), SimParams(q))
    x0 = front(SpinConfig.halfline(bits, lo))
    zb = np.ones(guard - x0 + 1, np.uint8)
    zb[0] = 0
    zeta = SimState(SpinConfig.from_bits(BoundarySpec.line(), zb, x0), SimParams(q), ProcessKind.CONTACT)
    viol = [0]

    def check(states, e):
        a, b = states
        viol[0] += sum(a.value(x) > b.value(x) for x in range(a.lo, 1))

    couple_evolve([eta, zeta], EventStream(seed, q, lo, -1), horizon, guard=guard, check=check)
    return viol[0], eta.leftmost_zero(), zeta.leftmost_zero()
