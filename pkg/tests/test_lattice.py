import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kcm_lab.lattice import (
    BoundarySpec, Kind, SimParams, SpinConfig, cluster_decomposition, format_config, front, in_H,
    largest_cluster, omega_delta_member, pack_bits, parse_config, product_cylinder_prob,
    seen_from_front, unpack_bits,
)

bitlists = st.lists(st.integers(0, 1), min_size=1, max_size=200)


def brute_in_H(vals, a, ell):
    # vals[i] is site a + i; literal quantifiers of the definition
    b = a + len(vals) - 1
    for x in range(a, b - ell + 2):
        if not any(vals[y - a] == 0 for y in range(x, x + ell)):
            return False
    return True


@given(bitlists)
def test_pack_roundtrip(bits):
    b = np.array(bits, np.uint8)
    assert np.array_equal(unpack_bits(pack_bits(b), b.size), b)


@given(bitlists, st.sampled_from(["interval", "halfline", "front"]))
def test_literal_roundtrip(bits, tag):
    s = "".join(map(str, bits))
    lit = {"interval": f"interval:{s}", "halfline": f"halfline:...{s}@{-len(s)}", "front": f"front:{s}"}[tag]
    c = parse_config(lit)
    assert format_config(c) == lit
    assert parse_config(format_config(c)) == c


def test_line_literal():
    c = parse_config("line:...0110...@-3")
    assert (c.lo, c.hi) == (-3, 0)
    assert c[-10] == 1 and c[5] == 1 and c[-3] == 0
    assert parse_config(format_config(c)) == c


@pytest.mark.parametrize("bad", ["interval:", "interval:012", "halfline:11@-5", "nope:01", "front:01@3"])
def test_bad_literals(bad):
    with pytest.raises(ValueError):
        parse_config(bad)


def test_boundaries():
    with pytest.raises(ValueError):
        BoundarySpec.interval(0)
    c = SpinConfig.interval([1, 1, 1])
    assert c[0] == 0 and c[4] == 0
    with pytest.raises(IndexError):
        c[5]
    h = SpinConfig.halfline([1, 0], -2)
    assert h[0] == 0 and h[1] == 1 and h[-50] == 1
    with pytest.raises(ValueError):
        SpinConfig.halfline([1, 0], -5)
    with pytest.raises(ValueError):
        SimParams(1.5)
    assert SimParams(0.9).supercritical and not SimParams(0.5).supercritical
    assert SimParams(0.9).p == pytest.approx(0.1)


def test_front_examples():
    assert front(SpinConfig.halfline([])) == 0
    assert front(SpinConfig.halfline([1, 0, 1, 1], -4)) == -3
    assert front(SpinConfig.interval([1] * 5)) == 0
    assert front(SpinConfig.halfline([1, 1, 1])) == 0
    with pytest.raises(ValueError):
        front(parse_config("line:...111...@0"))


def test_largest_cluster_examples():
    assert largest_cluster(SpinConfig.interval([0] * 5)) == 0
    assert largest_cluster(SpinConfig.interval([0, 1, 1, 1, 0, 1, 0])) == 3
    assert largest_cluster(SpinConfig.interval([1] * 9)) == 9
    with pytest.raises(ValueError):
        largest_cluster(SpinConfig.halfline([1]))


def test_in_H_examples():
    c = SpinConfig.interval([0] * 6)
    assert all(in_H(c, 1, 6, ell) for ell in range(1, 8))
    c = SpinConfig.interval([1] * 6)
    assert not in_H(c, 2, 5, 4)
    c = SpinConfig.interval([0, 1, 1, 0, 1, 1, 1, 0])
    assert in_H(c, 1, 8, 4)
    assert in_H(c, 1, 3, 5)  # vacuous


@given(st.lists(st.integers(0, 1), min_size=1, max_size=14), st.integers(1, 16), st.data())
def test_in_H_matches_definition(bits, ell, data):
    c = SpinConfig.interval(bits)
    L = len(bits)
    a = data.draw(st.integers(0, L + 1))
    b = data.draw(st.integers(a, L + 1))
    assert in_H(c, a, b, ell) == brute_in_H(list(c.values(a, b)), a, ell)


@given(st.lists(st.integers(0, 1), min_size=1, max_size=12), st.integers(1, 13), st.integers(0, 5))
def test_in_H_monotone_in_ell(bits, ell, extra):
    c = SpinConfig.interval(bits)
    if in_H(c, 0, len(bits) + 1, ell):
        assert in_H(c, 0, len(bits) + 1, ell + extra)
        assert largest_cluster(c) <= ell - 1


def test_in_H_exhaustive_small():
    for L in range(1, 11):
        for s in range(1 << L):
            bits = [(s >> i) & 1 for i in range(L)]
            c = SpinConfig.interval(bits)
            for ell in (1, 2, 3, 5):
                assert in_H(c, 0, L + 1, ell) == (largest_cluster(c) <= ell - 1)


def test_seen_from_front_examples():
    c = SpinConfig.halfline([1, 0, 1, 0], -4)
    s = seen_from_front(c)
    assert s.boundary.kind is Kind.FRONT
    assert list(s.bits[:2]) == [1, 0]
    assert s[0] == 0
    assert seen_from_front(s) == s
    c = SpinConfig.halfline([0] + [1, 0, 1, 1, 0, 1], -7)
    s = seen_from_front(c)
    assert [s[y] for y in range(1, 7)] == [c[-7 + y] for y in range(1, 7)]


@given(st.lists(st.integers(0, 1), max_size=60))
def test_seen_from_front_properties(bits):
    c = SpinConfig.halfline(bits)
    s = seen_from_front(c)
    X = front(c)
    assert front(s) == 0
    assert seen_from_front(s) == s
    for y in range(1, s.n + 1):
        assert s[y] == c[X + y]


def test_cluster_examples():
    info = cluster_decomposition(SpinConfig.interval([0] * 6), 3)
    assert info.intervals == [] and info.p == 0 and info.t == 0
    info = cluster_decomposition(SpinConfig.interval([0, 1, 1, 1, 1, 0, 0, 1, 1, 0]), 3)
    assert info.intervals == [(1, 6)] and info.p == 1 and info.ell == 5
    info = cluster_decomposition(SpinConfig.interval([1] * 10), 3, v=0.8, a=1.0)
    assert info.intervals == [(0, 11)]
    assert info.t == pytest.approx(11 / 1.6 - 2.5 * math.sqrt(11))
    with pytest.raises(ValueError):
        cluster_decomposition(SpinConfig.interval([1]), 0)


@given(st.lists(st.integers(0, 1), min_size=1, max_size=12), st.integers(1, 6))
def test_cluster_tiling(bits, thr):
    c = SpinConfig.interval(bits)
    iv = cluster_decomposition(c, thr).intervals
    covered = set()
    for k, (a, b) in enumerate(iv):
        assert c[a] == 0 and c[b] == 0 and all(c[x] == 1 for x in range(a + 1, b))
        assert b - a - 1 >= thr
        if k:
            assert a >= iv[k - 1][1]
        covered |= set(range(a + 1, b))
    # every one lying in a run of length >= thr is covered, and nothing else
    L = len(bits)
    for x in range(1, L + 1):
        if c[x] == 1:
            lft = x
            while c[lft - 1] == 1:
                lft -= 1
            rgt = x
            while c[rgt + 1] == 1:
                rgt += 1
            assert (x in covered) == (rgt - lft + 1 >= thr)


def test_product_cylinder():
    assert product_cylinder_prob("", 0.3) == 1.0
    assert product_cylinder_prob("11", 0.5) == 0.25
    assert product_cylinder_prob("101", 0.1) == pytest.approx(0.009)
    with pytest.raises(ValueError):
        product_cylinder_prob("1", 1.2)


def test_omega_delta_rounding():
    c = SpinConfig.interval([1, 1, 0, 1, 1, 1, 0, 1, 1, 0])
    # delta L = 3.5 rounds up to 4; the longest run is 3
    assert omega_delta_member(c, 0.35)
    assert not omega_delta_member(c, 0.3)
