"""Counter-based random draws for the graphical construction.

Every ring of every site is a pure function of ``(seed, site, event index)``.
Streams are random-access: growing the simulated window, replaying a run or
splitting trials across workers can never perturb another site's events.

The mixer is the SplitMix64 finalizer. A site gets its own 64-bit key, and the
``j``-th event at that site owns the counters ``16j .. 16j + 15``: the first
drives the Bernoulli mark, the rest feed a ziggurat sampler for the
exponential gap that precedes the event.
"""

from __future__ import annotations

import hashlib

import numba as nb
import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_SEED_SALT = np.uint64(0xD1B54A32D192ED03)
_SITE_SALT = np.uint64(0x8CB92BA72F3D8DD7)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_ONE = np.uint64(1)
_TWO = np.uint64(2)
_INV53 = 1.0 / 9007199254740992.0

MASK64 = (1 << 64) - 1


@nb.njit(cache=True, inline="always")
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@nb.njit(cache=True)
def site_key(seed, site):
    """64-bit key of one site's stream. ``seed`` is uint64, ``site`` int64."""
    k = mix64(np.uint64(seed) ^ _SEED_SALT)
    return mix64(k + mix64(np.uint64(site) ^ _SITE_SALT))


def _ziggurat_tables():
    # Marsaglia-Tsang ziggurat for Exp(1), 256 layers, 53-bit abscissae
    m2 = 2.0 ** 53
    de = 7.697117470131487
    te = de
    ve = 3.949659822581572e-3
    q = ve / np.exp(-de)
    ke = np.zeros(256, dtype=np.uint64)
    we = np.zeros(256)
    fe = np.zeros(256)
    ke[0] = np.uint64(int(de / q * m2))
    we[0] = q / m2
    we[255] = de / m2
    fe[0] = 1.0
    fe[255] = np.exp(-de)
    for i in range(254, 0, -1):
        de = -np.log(ve / de + np.exp(-de))
        ke[i + 1] = np.uint64(int(de / te * m2))
        te = de
        fe[i] = np.exp(-de)
        we[i] = de / m2
    return ke, we, fe


_ZKE, _ZWE, _ZFE = _ziggurat_tables()
_ZR = 7.697117470131487
_S3 = np.uint64(3)
_S8 = np.uint64(8)
_BYTE = np.uint64(0xFF)
_SLOTS = np.uint64(16)  # counters reserved per event: mark + up to 7 gap attempts


@nb.njit(cache=True, inline="always")
def _raw(key, counter):
    return mix64(key + (counter + _ONE) * GOLDEN)


@nb.njit(cache=True, inline="always")
def _unit(key, counter):
    # 53-bit float in [0, 1)
    return np.float64(_raw(key, counter) >> _S11) * _INV53


@nb.njit(cache=True, inline="always")
def ring_gap(key, j):
    """Exp(1) gap preceding event ``j`` of the stream with ``key``."""
    c = np.uint64(j) * _SLOTS + _ONE
    for a in range(7):
        ri = _raw(key, c) >> _S3
        idx = ri & _BYTE
        ri = ri >> _S8
        x = np.float64(ri) * _ZWE[idx]
        if ri < _ZKE[idx]:
            return x
        u = _unit(key, c + _ONE)
        if idx == 0:
            return _ZR - np.log1p(-u)
        if (_ZFE[idx - 1] - _ZFE[idx]) * u + _ZFE[idx] < np.exp(-x):
            return x
        c += _TWO
    # seven rejections in a row: exact inversion on a fresh counter
    return -np.log1p(-_unit(key, c))


@nb.njit(cache=True, inline="always")
def ring_mark(key, j, p):
    """Bernoulli(p) mark of event ``j``; ``p`` is the occupation density 1 - q."""
    u = _unit(key, np.uint64(j) * _SLOTS)
    return np.uint8(1) if u < p else np.uint8(0)


@nb.njit(cache=True)
def fast_forward(key, t):
    """First event strictly after ``t``: returns (time, index)."""
    time = 0.0
    j = 0
    while True:
        time += ring_gap(key, j)
        if time > t:
            return time, j
        j += 1


@nb.njit(cache=True)
def site_events(seed, site, p, n):
    """First ``n`` events of a site as (times, marks) arrays."""
    key = site_key(np.uint64(seed), np.int64(site))
    times = np.empty(n)
    marks = np.empty(n, dtype=np.uint8)
    t = 0.0
    for j in range(n):
        t += ring_gap(key, j)
        times[j] = t
        marks[j] = ring_mark(key, j, p)
    return times, marks


def derive_seed(master: int, label: str, index: int = 0) -> int:
    """Stable 64-bit seed for ``(master seed, label, trial index)``.

    Uses BLAKE2b so the mapping is identical across platforms and versions.
    """
    h = hashlib.blake2b(digest_size=8)
    h.update(int(master & MASK64).to_bytes(8, "little"))
    h.update(label.encode())
    h.update(int(index).to_bytes(8, "little", signed=True))
    return int.from_bytes(h.digest(), "little")


def trial_seeds(master: int, label: str, n: int, start: int = 0) -> np.ndarray:
    return np.array([derive_seed(master, label, i) for i in range(start, start + n)], dtype=np.uint64)
