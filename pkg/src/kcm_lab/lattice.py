"""Configurations on finite windows of Z and their static observables.

A configuration stores the sites of a window ``[lo, hi]`` bit-packed in 64-bit
words (site ``lo`` is bit 0 of word 0). Everything outside the window is
resolved by the boundary convention:

* ``interval``  sites ``1..L``; ``0`` and ``L + 1`` are frozen zeros.
* ``halfline``  window ends at ``-1``; site 0 is a frozen zero, everything
  left of the window and right of 0 is an occupied ghost.
* ``front``     seen from the front: site 0 is the (empty) front, sites ``< 0``
  are occupied ghosts and so are sites right of the stored window.
* ``line``      the whole of Z with occupied ghosts on both sides of the window
  (used for the threshold contact process started from finitely many zeros).

1 means occupied, 0 empty.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class Kind(str, Enum):
    INTERVAL = "interval"
    HALFLINE = "halfline"
    FRONT = "front"
    LINE = "line"


@dataclass(frozen=True)
class BoundarySpec:
    kind: Kind
    L: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        if self.kind is Kind.INTERVAL:
            if self.L is None or int(self.L) < 1:
                raise ValueError("interval boundary needs L >= 1")
            object.__setattr__(self, "L", int(self.L))
        elif self.L is not None:
            raise ValueError(f"{self.kind.value} boundary takes no L")

    @classmethod
    def interval(cls, L):
        return cls(Kind.INTERVAL, L)

    @classmethod
    def halfline(cls):
        return cls(Kind.HALFLINE)

    @classmethod
    def seen_from_front(cls):
        return cls(Kind.FRONT)

    @classmethod
    def line(cls):
        return cls(Kind.LINE)

    def frozen(self, x: int) -> bool:
        if self.kind is Kind.INTERVAL:
            return x == 0 or x == self.L + 1
        if self.kind is Kind.LINE:
            return False
        return x == 0

    def outside_value(self, x: int) -> int:
        """Value of a site that is not stored."""
        if self.kind is Kind.INTERVAL:
            if x == 0 or x == self.L + 1:
                return 0
            raise IndexError(f"site {x} is outside [0, {self.L + 1}]")
        if x == 0 and self.kind is not Kind.LINE:
            return 0
        return 1


@dataclass(frozen=True)
class SimParams:
    q: float
    q_bar: float = 0.76

    def __post_init__(self):
        if not 0.0 <= self.q <= 1.0:
            raise ValueError(f"q={self.q} outside [0, 1]")

    @property
    def p(self) -> float:
        return 1.0 - self.q

    @property
    def supercritical(self) -> bool:
        return self.q > self.q_bar


def pack_bits(bits) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.uint8)
    nw = (bits.size + 63) // 64
    buf = np.zeros(nw * 8, dtype=np.uint8)
    packed = np.packbits(bits, bitorder="little")
    buf[:packed.size] = packed
    return buf.view("<u8").copy()


def unpack_bits(words, n) -> np.ndarray:
    raw = np.asarray(words, dtype="<u8").view(np.uint8)
    return np.unpackbits(raw, bitorder="little", count=n).astype(np.uint8)


@dataclass(frozen=True, eq=False)
class SpinConfig:
    boundary: BoundarySpec
    lo: int
    hi: int
    words: np.ndarray = field(repr=False)

    @classmethod
    def from_bits(cls, boundary: BoundarySpec, bits, lo: int | None = None) -> "SpinConfig":
        bits = np.asarray(bits, dtype=np.uint8).ravel()
        if np.any(bits > 1):
            raise ValueError("bits must be 0/1")
        n = bits.size
        kind = boundary.kind
        if kind is Kind.INTERVAL:
            if lo not in (None, 1) or n != boundary.L:
                raise ValueError(f"interval config must store sites 1..{boundary.L}")
            lo = 1
        elif kind is Kind.HALFLINE:
            if lo is None:
                lo = -n
            if lo + n - 1 != -1:
                raise ValueError("half-line window must end at site -1")
        elif kind is Kind.FRONT:
            if lo not in (None, 1):
                raise ValueError("seen-from-front window starts at site 1")
            lo = 1
        elif lo is None:
            raise ValueError("a line config needs an explicit lo")
        return cls(boundary, int(lo), int(lo + n - 1), pack_bits(bits))

    @classmethod
    def interval(cls, bits):
        bits = np.asarray(bits, dtype=np.uint8)
        return cls.from_bits(BoundarySpec.interval(bits.size), bits)

    @classmethod
    def halfline(cls, bits=(), lo=None):
        return cls.from_bits(BoundarySpec.halfline(), bits, lo)

    @property
    def n(self) -> int:
        return self.hi - self.lo + 1

    @property
    def bits(self) -> np.ndarray:
        return unpack_bits(self.words, self.n)

    def __getitem__(self, x: int) -> int:
        if self.lo <= x <= self.hi:
            i = x - self.lo
            return int((int(self.words[i >> 6]) >> (i & 63)) & 1)
        return self.boundary.outside_value(x)

    def values(self, a: int, b: int) -> np.ndarray:
        """Values of sites ``a..b`` under the boundary convention."""
        if b < a:
            return np.zeros(0, dtype=np.uint8)
        out = np.empty(b - a + 1, dtype=np.uint8)
        bits = self.bits
        s0, s1 = max(a, self.lo), min(b, self.hi)
        if s0 <= s1:
            out[s0 - a:s1 - a + 1] = bits[s0 - self.lo:s1 - self.lo + 1]
        for x in list(range(a, min(b, self.lo - 1) + 1)) + list(range(max(a, self.hi + 1), b + 1)):
            out[x - a] = self.boundary.outside_value(x)
        return out

    def with_bits(self, bits) -> "SpinConfig":
        return SpinConfig(self.boundary, self.lo, self.hi, pack_bits(bits))

    def __eq__(self, other):
        if not isinstance(other, SpinConfig):
            return NotImplemented
        return (self.boundary == other.boundary and self.lo == other.lo
                and self.hi == other.hi and np.array_equal(self.words, other.words))

    def __hash__(self):
        return hash((self.boundary, self.lo, self.hi, self.words.tobytes()))

    def __repr__(self):
        return f"SpinConfig({format_config(self)!r})"


# ---------------------------------------------------------------- literals

_LIT = re.compile(r"^(interval|halfline|front|line):(\.\.\.)?([01]*)(\.\.\.)?(?:@(-?\d+))?$")


def format_config(c: SpinConfig) -> str:
    s = "".join("1" if b else "0" for b in c.bits)
    if c.boundary.kind is Kind.HALFLINE:
        return f"halfline:...{s}@{c.lo}"
    if c.boundary.kind is Kind.LINE:
        return f"line:...{s}...@{c.lo}"
    return f"{c.boundary.kind.value}:{s}"


def parse_config(text: str) -> SpinConfig:
    m = _LIT.match(text.strip())
    if not m:
        raise ValueError(f"bad configuration literal {text!r}")
    tag, dots, s, tail, at = m.groups()
    bits = np.frombuffer(s.encode(), dtype=np.uint8) - ord("0") if s else np.zeros(0, np.uint8)
    if tag == "line":
        if at is None:
            raise ValueError("line literal needs '@lo'")
        return SpinConfig.from_bits(BoundarySpec.line(), bits, int(at))
    if tail:
        raise ValueError(f"trailing '...' only applies to line literals: {text!r}")
    if tag == "halfline":
        lo = int(at) if at is not None else -len(s)
        return SpinConfig.halfline(bits, lo)
    if dots or at is not None:
        raise ValueError(f"'...' and '@lo' only apply to half-line literals: {text!r}")
    if tag == "interval":
        if not s:
            raise ValueError("interval literal needs at least one site")
        return SpinConfig.interval(bits)
    return SpinConfig.from_bits(BoundarySpec.seen_from_front(), bits)


# ------------------------------------------------------------- observables

def front(c: SpinConfig) -> int:
    """Leftmost empty site."""
    kind = c.boundary.kind
    if kind is Kind.INTERVAL or kind is Kind.FRONT:
        return 0
    z = np.flatnonzero(c.bits == 0)
    if z.size:
        return int(c.lo + z[0])
    if kind is Kind.LINE:
        raise ValueError("line configuration without zeros has no front")
    return 0


def _runs(bits):
    """(start, length) of every maximal run of ones, as index arrays."""
    b = np.concatenate(([0], np.asarray(bits, dtype=np.int8), [0]))
    d = np.diff(b)
    starts = np.flatnonzero(d == 1)
    ends = np.flatnonzero(d == -1)
    return starts, ends - starts


def _need_interval(c, what):
    if c.boundary.kind is not Kind.INTERVAL:
        raise ValueError(f"{what} needs an interval configuration")


def largest_cluster(c: SpinConfig) -> int:
    _need_interval(c, "largest_cluster")
    _, lens = _runs(c.bits)
    return int(lens.max()) if lens.size else 0


def in_H(c: SpinConfig, a: int, b: int, ell: int) -> bool:
    """Every ``x`` in ``[a, b - ell + 1]`` sees a zero in ``[x, x + ell - 1]``.

    Equivalently no run of ones of length ``>= ell`` fits inside ``[a, b]``.
    """
    if a > b:
        raise ValueError("need a <= b")
    if ell < 1:
        raise ValueError("need ell >= 1")
    if b - a + 1 < ell:
        return True
    _, lens = _runs(c.values(a, b))
    return not (lens.size and lens.max() >= ell)


def seen_from_front(c: SpinConfig) -> SpinConfig:
    """The configuration shifted so that its front sits at 0.

    Stores every site from the front up to the last site the input knows
    about (``-1`` for a half-line, which makes the old origin a stored zero;
    ``L + 1`` for an interval).
    """
    kind = c.boundary.kind
    if kind is Kind.FRONT:
        return c
    X = front(c)
    last = {Kind.HALFLINE: 0, Kind.LINE: c.hi}.get(kind) if kind is not Kind.INTERVAL else c.boundary.L + 1
    vals = c.values(X + 1, last)
    return SpinConfig.from_bits(BoundarySpec.seen_from_front(), vals)


@dataclass(frozen=True)
class ClusterInfo:
    intervals: list  # [(a_k, b_k)], flanking zeros included
    p: int
    ell: int | None  # shortest b_k - a_k, None without clusters
    t: float


def cluster_time(ell, v, a) -> float:
    return ell / (2.0 * v) - (2.0 * a / v) * math.sqrt(ell)


def cluster_decomposition(c: SpinConfig, threshold: int, v: float | None = None,
                          a: float | None = None) -> ClusterInfo:
    """Maximal runs of ones of length ``>= threshold`` with their flanking zeros.

    ``t`` is ``ell / (2v) - (2a / v) sqrt(ell)`` when ``v`` and ``a`` are given
    (NaN otherwise), and 0 when there is no cluster.
    """
    _need_interval(c, "cluster_decomposition")
    if threshold < 1:
        raise ValueError("threshold must be >= 1")
    starts, lens = _runs(c.bits)
    keep = lens >= threshold
    # bits index 0 is site 1, so a run starting at index s is flanked by sites s and s + len + 1
    iv = [(int(s), int(s + n + 1)) for s, n in zip(starts[keep], lens[keep])]
    if not iv:
        return ClusterInfo([], 0, None, 0.0)
    ell = min(b - a_ for a_, b in iv)
    t = cluster_time(ell, v, a) if v is not None and a is not None else float("nan")
    return ClusterInfo(iv, len(iv), ell, t)


def product_cylinder_prob(pattern, p: float) -> float:
    """Probability of a bit pattern under the Bernoulli(p) product law."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    if isinstance(pattern, str):
        pattern = [int(ch) for ch in pattern]
    k = int(np.sum(pattern))
    n = len(pattern)
    return float(p ** k * (1.0 - p) ** (n - k))


def omega_delta_member(c: SpinConfig, delta: float) -> bool:
    """Whether an interval config lies in H(1, L, ceil(delta L))."""
    _need_interval(c, "omega_delta_member")
    L = c.boundary.L
    return in_H(c, 1, L, max(1, math.ceil(delta * L)))
