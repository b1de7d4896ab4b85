import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kcm_lab import _kernels as K
from kcm_lab.dynamics import (
    ProcessKind, SimState, StaleEventError, WindowCapError, apply_event, constraint, couple_evolve,
    evolve, local_rate, update_value,
)
from kcm_lab.graphical import Event, EventScript, EventStream
from kcm_lab.lattice import SimParams, SpinConfig, front, parse_config

import reference as R

FA, TC = ProcessKind.FA1F, ProcessKind.CONTACT


def test_constraint_examples():
    c = SpinConfig.interval([1, 1, 1, 0])
    assert constraint(c, 2) == 0
    assert constraint(c, 1) == 1
    assert constraint(c, 3) == 1
    with pytest.raises(ValueError):
        constraint(c, 0)
    with pytest.raises(ValueError):
        constraint(SpinConfig.halfline([1]), 0)


def test_local_rate_examples():
    p = SimParams(0.9)
    c = SpinConfig.interval([1, 1, 1])
    assert local_rate(c, 2, p, FA) == 0
    c = SpinConfig.interval([0, 0, 1])
    assert local_rate(c, 2, p, FA) == pytest.approx(0.1)
    c = SpinConfig.interval([1, 0, 1])
    assert local_rate(c, 2, p, TC) == pytest.approx(0.1)
    c = SpinConfig.interval([0, 1, 1])
    assert local_rate(c, 2, p, TC) == pytest.approx(0.9)


@pytest.mark.parametrize("kind", [FA, TC])
def test_update_table(kind):
    for cur, l, r, m in np.ndindex(2, 2, 2, 2):
        new = update_value(kind, cur, l, r, m)
        if l * r == 0:
            assert new == m
        elif kind is TC and cur == 0 and m == 1:
            assert new == 1
        else:
            assert new == cur
        assert new == K._update(K.K_FA if kind is FA else K.K_TC, cur, l, r, m)


def test_apply_event_examples():
    st_ = SimState(SpinConfig.interval([1, 1, 1]), SimParams(0.5))
    apply_event(st_, Event(1.0, 2, 0))
    assert list(st_.bits) == [1, 1, 1]
    apply_event(st_, Event(2.0, 1, 0))
    assert list(st_.bits) == [0, 1, 1]
    with pytest.raises(StaleEventError):
        apply_event(st_, Event(1.5, 1, 0))
    z = SimState(SpinConfig.interval([1, 0, 1]), SimParams(0.5), TC)
    apply_event(z, Event(1.0, 2, 1))
    assert list(z.bits) == [1, 1, 1]


def test_non_monotone_witness():
    lo = SimState(parse_config("interval:001"), SimParams(0.9))
    hi = SimState(parse_config("interval:101"), SimParams(0.9))
    assert np.all(lo.bits <= hi.bits)
    couple_evolve([lo, hi], EventScript([(2, 1.0, 1)]), 2.0)
    assert list(lo.bits) == [0, 1, 1] and list(hi.bits) == [1, 0, 1]
    assert not np.all(lo.bits <= hi.bits)


def test_horizon_equals_clock():
    c = SpinConfig.interval([1, 0, 1])
    tr = evolve(SimState(c, SimParams(0.5)), EventStream(1, 0.5, 1, 3), 0.0, [0.0])
    assert tr.n_events == 0 and tr.final == c and tr.snapshots == [c]


def test_identical_states_identical_paths():
    c = SpinConfig.interval([1, 0, 1, 1, 0, 1, 1, 1])
    a, b = SimState(c, SimParams(0.7)), SimState(c, SimParams(0.7))
    ta, tb = couple_evolve([a, b], EventStream(5, 0.7, 1, 8), 30.0, [5.0, 10.0, 30.0])
    assert ta.snapshots == tb.snapshots


def test_single_site_law():
    q, t = 0.3, 0.7
    N = 100_000
    ones = 0
    for seed in range(N):
        codes, _, _, _ = K.run_interval(np.uint64(seed), 1 - q, K.K_FA, np.ones(1, np.uint8),
                                        np.array([t]), t, 1, 1, 1, 0, False, 0, 1)
        ones += int(codes[0])
    p1 = (1 - q) + q * np.exp(-t)
    assert abs(ones / N - p1) < 3 * np.sqrt(p1 * (1 - p1) / N)


def test_single_site_reference_agrees():
    # the reference engine on a handful of seeds gives the same bits as the kernel
    for seed in range(20):
        snaps, _ = R.interval_snapshots(seed, 0.3, [1], [0.7])
        codes, _, _, _ = K.run_interval(np.uint64(seed), 0.7, K.K_FA, np.ones(1, np.uint8),
                                        np.array([0.7]), 0.7, 1, 1, 1, 0, False, 0, 1)
        assert snaps[0, 0] == codes[0]


def test_window_cap():
    st_ = SimState(SpinConfig.halfline([]), SimParams(0.9))
    with pytest.raises(WindowCapError) as ei:
        evolve(st_, EventStream(1, 0.9, -1, -1), 500.0, guard=8, cap=40)
    assert ei.value.trajectory is not None


def test_guard_invariance():
    for seed in range(3):
        f1, s1, _ = R.halfline_fronts(seed, 0.9, [1, 0, 1], -3, [10.0, 60.0], guard=8)
        f2, s2, _ = R.halfline_fronts(seed, 0.9, [1, 0, 1], -3, [10.0, 60.0], guard=16)
        assert f1 == f2
        for a, b in zip(s1, s2):
            lo = max(a.lo, b.lo)
            assert np.array_equal(a.values(lo, -1), b.values(lo, -1))
    for seed in range(10):
        args = (np.uint64(seed), 0.1, K.K_FA, K.B_HALFLINE, np.zeros(0, np.uint8), 0)
        rest = (10**7, np.array([50.0, 200.0]), 200.0, 10, 0, 0, 1)
        a = K.run_open(*args, 8, *rest)
        b = K.run_open(*args, 64, *rest)
        # more stored sites means more (inert) rings, but identical observables
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1]) and np.array_equal(a[2], b[2])


@pytest.mark.parametrize("kind", [FA, TC])
def test_kernel_matches_reference_interval(kind):
    rng = np.random.default_rng(0)
    for seed in range(6):
        bits = (rng.random(25) < 0.6).astype(np.uint8)
        times = [0.5, 3.0, 10.0, 40.0]
        ref, n_ref = R.interval_snapshots(seed, 0.8, bits, times, kind)
        _, _, snaps, n = K.run_interval(np.uint64(seed), 0.2, K.K_FA if kind is FA else K.K_TC, bits,
                                        np.array(times), 40.0, 1, 0, 1, 0, True, 0, 1)
        assert np.array_equal(ref, snaps)
        assert n == n_ref


def test_kernel_matches_reference_halfline():
    for seed in range(5):
        bits = np.array([1, 0, 1, 1, 0, 1], np.uint8)
        times = [5.0, 40.0, 120.0]
        fr, snaps, n_ref = R.halfline_fronts(seed, 0.9, bits, -6, times, guard=16)
        out = K.run_open(np.uint64(seed), 0.1, K.K_FA, K.B_HALFLINE, bits, -6, 16, 10**7,
                         np.array(times), 120.0, 8, 0, 0, 1)
        assert list(out[0]) == fr
        assert out[3] == n_ref
        for k, s in enumerate(snaps):
            X = fr[k]
            code = int("".join(str(s[X + y]) for y in range(1, 9)), 2)
            assert out[1][k] == code
            vals = s.values(X, 0)
            runs = max((len(r) for r in "".join(map(str, vals)).split("0")), default=0)
            assert out[2][k] == runs


def test_kernel_matches_reference_contact_line():
    from kcm_lab.dynamics import SimState
    from kcm_lab.lattice import BoundarySpec
    for seed in range(4):
        zb = np.ones(33, np.uint8)
        zb[16] = 0
        st_ = SimState(SpinConfig.from_bits(BoundarySpec.line(), zb, -16), SimParams(0.9), TC)
        tr = evolve(st_, EventStream(seed, 0.9, -16, 16), 30.0, [30.0], guard=16)
        out = K.run_open(np.uint64(seed), 0.1, K.K_TC, K.B_LINE, np.zeros(1, np.uint8), 0, 16, 10**7,
                         np.array([30.0]), 30.0, 0, 0, 0, 1)
        z = tr.snapshots[0].bits
        ref_front = tr.snapshots[0].lo + int(np.flatnonzero(z == 0)[0]) if np.any(z == 0) else K.NO_SITE
        assert out[0][0] == ref_front


def test_kernel_matches_reference_two_front():
    for seed in range(4):
        bits = np.ones(40, np.uint8)
        ref = R.two_front(seed, 0.9, bits, 0, 41, 8.0, 200.0)
        out = K.run_two_front(np.uint64(seed), 0.1, bits, 0, 41, 8.0, 200.0, 0.0, 0, 1)
        assert (out[0], out[6][-1], out[7][-1]) == ref


def test_kernel_matches_reference_domination():
    for seed in range(4):
        bits = np.array([1, 0, 1], np.uint8)
        v_ref, ef_ref, zf_ref = R.domination(seed, 0.9, bits, -3, 16, 60.0)
        v, _, ef, zf = K.run_domination(np.uint64(seed), 0.1, bits, -3, 16, 60.0)
        assert v == v_ref == 0
        assert ef == ef_ref
        assert zf == (zf_ref if zf_ref is not None else K.NO_SITE)


def test_mirror_two_front():
    from kcm_lab.front_lab import two_front_trace
    bits = np.ones(60, np.uint8)
    bits[[5, 50]] = 0
    c = SpinConfig.interval(bits)
    for seed in range(5):
        a = two_front_trace(c, 0.9, seed, 6.0, 300.0, 1.0, strict=False)
        b = two_front_trace(c, 0.9, seed, 6.0, 300.0, 1.0, mirror=True, strict=False)
        L1 = 61
        assert a.tau == b.tau
        assert np.array_equal(a.trace_x, L1 - b.trace_y)
        assert np.array_equal(a.trace_y, L1 - b.trace_x)


def test_front_speed_bounds():
    # maximal speed: moving 2 v t to the left by t = 100 is very rare
    from kcm_lab.front_lab import front_positions
    fr, _, _ = front_positions(0.9, SpinConfig.halfline([]), [100.0, 200.0], 2000, 3)
    v = -fr[:, 1].mean() / 200.0
    assert np.mean(fr[:, 0] < -2 * v * 100) < 1e-3
    assert np.mean(fr[:, 1] > -(v / 2) * 200) < 1e-2


@given(st.lists(st.integers(0, 1), min_size=1, max_size=20), st.integers(0, 2**32),
       st.floats(0.05, 0.95), st.sampled_from([FA, TC]))
@settings(max_examples=40, deadline=None)
def test_kernel_reference_property(bits, seed, q, kind):
    bits = np.array(bits, np.uint8)
    times = [1.0, 4.0, 9.0]
    ref, n_ref = R.interval_snapshots(seed, q, bits, times, kind)
    _, _, snaps, n = K.run_interval(np.uint64(seed), 1 - q, K.K_FA if kind is FA else K.K_TC, bits,
                                    np.array(times), 9.0, 1, 0, 1, 0, True, 0, 1)
    assert np.array_equal(ref, snaps) and n == n_ref


@given(st.lists(st.integers(0, 1), min_size=1, max_size=12), st.integers(0, 2**32))
@settings(max_examples=30, deadline=None)
def test_domination_property(bits, seed):
    bits = np.array(bits, np.uint8)
    v, _, _, _ = K.run_domination(np.uint64(seed), 0.1, bits, -bits.size, 16, 40.0)
    assert v == 0
