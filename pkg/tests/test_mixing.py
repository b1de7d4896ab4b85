import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kcm_lab import mixing as M
from kcm_lab.lattice import SpinConfig


def test_generator_L1():
    q = 0.3
    Q = M.build_generator(1, q).dense()
    assert Q == pytest.approx(np.array([[-(1 - q), 1 - q], [q, -q]]))


def test_generator_L2_product_chain():
    q = 0.4
    Q = M.build_generator(2, q).dense()
    one = np.array([[-(1 - q), 1 - q], [q, -q]])
    prod = np.kron(np.eye(2), one) + np.kron(one, np.eye(2))
    assert Q == pytest.approx(prod)


def test_row_sums():
    Q = M.build_generator(6, 0.7).dense()
    assert np.abs(Q.sum(axis=1)).max() < 1e-12


def test_generator_guards():
    for L in (0, 15):
        with pytest.raises(M.ResourceError):
            M.build_generator(L, 0.5)


@pytest.mark.parametrize("L", [1, 3, 6])
@pytest.mark.parametrize("q", [0.0, 0.3, 0.5, 0.9, 1.0])
def test_detailed_balance(L, q):
    assert M.stationary_check(M.build_generator(L, q)) <= 1e-12


def test_tv_exact_two_state():
    q = 0.9
    G = M.build_generator(1, q)
    ts = np.linspace(0, 10, 41)
    assert np.abs(M.tv_exact(G, [1], ts) - q * np.exp(-ts)).max() < 1e-9
    for t in (0, 0.5, 1, 5):
        assert M.tv_exact(G, [1], t) == pytest.approx(q * math.exp(-t), abs=1e-9)


def test_tv_exact_examples():
    assert M.tv_exact(M.build_generator(2, 0.5), [1, 1], 0.0) == pytest.approx(0.75)
    assert M.tv_exact(M.build_generator(4, 0.9), [1] * 4, 40.0) < 1e-8


def test_tv_exact_matches_expm():
    from scipy.linalg import expm
    G = M.build_generator(4, 0.5)
    P = expm(40.0 * G.dense())[15]
    ref = 0.5 * np.abs(P - G.stationary()).sum()
    assert M.tv_exact(G, [1] * 4, 40.0) == pytest.approx(ref, rel=1e-6)


@given(st.integers(1, 6), st.floats(0.05, 0.95), st.integers(0, 63))
@settings(max_examples=25, deadline=None)
def test_tv_exact_monotone(L, q, s):
    G = M.build_generator(L, q)
    tv = M.tv_exact(G, s % (1 << L), np.linspace(0, 3 * L, 25))
    assert np.all(np.diff(tv) <= 1e-10)


def test_worst_start_recorded():
    # diagnostic only: at L <= 8 the maximiser near the mixing time is reported, not asserted
    G = M.build_generator(8, 0.9)
    ones = (1 << 8) - 1
    t = M.crossing_time(np.linspace(0, 40, 401), M.tv_exact(G, ones, np.linspace(0, 40, 401)), 0.5)
    k, tv = M.worst_start(G, t)
    assert 0 <= k < 256 and tv >= M.tv_exact(G, ones, t) - 1e-12
    print(f"worst start at t={t:.2f}: index {k} (all-ones={k == ones}), tv={tv:.4f}")


def test_window_t0():
    q, w = 0.9, 5
    e = M.tv_window_estimate(q, 20, M.all_ones(20), 0.0, w, 10 << w, 1)
    assert e.tv == pytest.approx(1 - (1 - q) ** w)
    prof = M.mixing_profile(q, 20, M.all_ones(20), [0.0], w, 10 << w, 1)
    assert prof.tv[0] == pytest.approx(e.tv)


def test_window_sample_size_guard():
    with pytest.raises(ValueError):
        M.tv_window_estimate(0.9, 20, M.all_ones(20), 1.0, 5, 319, 1)
    with pytest.raises(ValueError):
        M.tv_window_estimate(0.9, 20, M.all_ones(20), 1.0, 13, 10 << 13, 1)


def test_window_vs_exact_small_L():
    q, L = 0.5, 6
    G = M.build_generator(L, q)
    for t in (1.0, 2.5):
        ex = M.tv_exact(G, [1] * L, t)
        est = M.tv_window_estimate(q, L, M.all_ones(L), t, L, 20000, 3)
        assert est.ci[0] - 0.01 <= ex <= est.ci[1] + 0.01


def test_projection_bound():
    q, L = 0.5, 8
    G = M.build_generator(L, q)
    ex = M.tv_exact(G, [1] * L, 2.0)
    est = M.tv_window_estimate(q, L, M.all_ones(L), 2.0, 4, 8000, 5)
    assert est.tv <= ex + 3 * (est.ci[1] - est.ci[0])


def test_window_late_time():
    L = 16
    e = M.tv_window_estimate(0.9, L, M.all_ones(L), 50.0 * L, 4, 2000, 6)
    assert e.tv < 0.05


def test_crossing_time():
    t = np.array([0.0, 1.0, 2.0, 3.0])
    assert M.crossing_time(t, [1.0, 0.8, 0.4, 0.1], 0.6) == pytest.approx(1.5)
    assert M.crossing_time(t, [1.0, 0.5, 0.5, 0.1], 0.5) == pytest.approx(1.0)
    with pytest.raises(M.HorizonError):
        M.crossing_time(t, [1.0, 0.9, 0.8, 0.7], 0.5)


def test_cutoff_needs_three_sizes():
    with pytest.raises(ValueError):
        M.cutoff_experiment(0.9, [16, 32], 640, 1, 0.8)


def test_cutoff_horizon_error():
    grids = {L: np.linspace(0, 1, 3) for L in (8, 16, 32)}
    with pytest.raises(M.HorizonError):
        M.cutoff_experiment(0.9, [8, 16, 32], 320, 1, 0.8, w=5, grids=grids)


def test_cutoff_times():
    th = M.cutoff_times(100, 100, 0.8, 0.5, 1.0, 0.1)
    assert th["t1_core"] == pytest.approx(200)
    assert th["t1"] == pytest.approx(math.log(100) ** 9 / 0.5)
    assert th["t2"] == pytest.approx(62.5 + 200)
    assert th["t3"] == pytest.approx(62.5 - 12.5)


def test_witness_degenerate_and_mass():
    r = M.lower_bound_witness(0.9, 50, 0.0, 1, 20, 0.8)
    assert (r.p_hat, r.mu_mass, r.certificate, r.width) == (1.0, 1.0, 0.0, 0)
    r = M.lower_bound_witness(0.9, 400, 1.0, 1, 10, 0.8, t=0.0)
    assert r.width == 40 and r.mu_mass == pytest.approx(0.1 ** 40, rel=1e-12)
    assert r.p_hat == 1.0
    with pytest.raises(ValueError):
        M.lower_bound_witness(0.9, 16, 5.0, 1, 10, 0.8)


def test_zeros_monotone_in_ell():
    tab = M.zeros_experiment(0.9, [5, 10, 20, 40], [100.0], SpinConfig.halfline([]), 400, 2)
    p = tab.prob[0]
    for a, b in zip(p, p[1:]):
        assert b <= a + 2 * math.sqrt(a * (1 - a) / 400 + 1e-12)


def test_zeros_wider_than_window():
    c = SpinConfig.halfline(np.ones(5, np.uint8), lo=-5)
    tab = M.zeros_experiment(0.9, [7], [0.0], c, 50, 1, y=0)
    assert tab.prob[0, 0] == 0.0


def test_zeros_time_direction():
    c = SpinConfig.halfline([])
    tab = M.zeros_experiment(0.9, [10], [20.0, 200.0], c, 600, 3)
    assert tab.prob[1, 0] <= tab.prob[0, 0] + 2 * tab.se[0, 0] + 1e-12


def test_relaxation_stationary():
    r = M.relaxation_experiment(0.9, 64, 8, 0.25, "site", 2000, 4, 0.8, t=3.0)
    assert abs(r.estimate) < 3 * r.se + 1e-9


def test_relaxation_domain():
    with pytest.raises(ValueError):
        M.relaxation_experiment(0.9, 64, 8, 0.25, "site", 10, 1, 0.8, start=M.all_ones(64))
    with pytest.raises(ValueError):
        M.relaxation_experiment(0.9, 64, 8, 0.25, "bogus", 10, 1, 0.8)


def test_spaced_zeros():
    c = M.spaced_zeros(20, 5)
    assert list(np.flatnonzero(c.bits == 0) + 1) == [5, 10, 15, 20]


V_MIN = 0.8  # contact spreading speed at q = 0.9, measured ~0.80


def test_spread_start_mixes_before_t1():
    L, q = 256, 0.9
    start = M.spaced_zeros(L, 26)  # delta = 0.1: clusters of 25 ones
    B = 25
    th = M.cutoff_times(B, L, 0.8, V_MIN, 1.4, 0.1)
    prof = M.mixing_profile(q, L, start, np.linspace(0, th["t1_core"], 16), 6, 640, 8)
    assert prof.t_mix(0.25) < th["t1_core"] <= th["t1"]


def test_ci_width_scaling():
    L, q, t = 64, 0.9, 30.0
    w1 = np.diff(M.tv_window_estimate(q, L, M.all_ones(L), t, 4, 2000, 9).ci)[0]
    w2 = np.diff(M.tv_window_estimate(q, L, M.all_ones(L), t, 4, 4000, 9).ci)[0]
    assert w2 / w1 == pytest.approx(1 / math.sqrt(2), rel=0.2)


def test_relaxation_spaced_start():
    start = M.spaced_zeros(512, 64)
    r = M.relaxation_experiment(0.9, 512, 64, 0.25, "zeros10", 2000, 10, V_MIN, start=start)
    assert r.passed, r
    early = M.relaxation_experiment(0.9, 512, 64, 0.25, "zeros10", 2000, 10, V_MIN, start=start,
                                    t=64 / (8 * V_MIN))
    assert abs(early.estimate) > 0.05
