"""Relaxation to equilibrium on the interval ``[1, L]`` with frozen zeros at 0 and L + 1.

Exact small-L analysis (sparse generator, uniformization) and Monte Carlo
estimates of windowed total-variation distance, mixing profiles and the
cutoff experiment, plus the lower-bound witness, the zeros experiment and
the relaxation experiment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import partial

import numpy as np
from scipy import sparse, stats
from scipy.optimize import isotonic_regression

from . import _kernels as K
from .front_lab import _halfline_args, _open_trial, tv_bootstrap_ci, EmpiricalLaw, initial_front
from .lattice import Kind, SpinConfig, in_H, largest_cluster
from .rng import derive_seed
from .trials import run_trials

MAX_EXACT_L = 14
TAIL_MASS = 1e-12
MAX_WINDOW = 12


class ResourceError(ValueError):
    pass


class HorizonError(RuntimeError):
    pass


# ----------------------------------------------------------------- exact

@dataclass
class GeneratorMatrix:
    """Rates on ``2^L`` states; bit ``x - 1`` of a state index is site ``x``.

    Stored sparse: each row has at most ``L`` off-diagonal entries.
    """
    L: int
    q: float
    Q: sparse.csr_matrix = field(repr=False)

    @property
    def n_states(self):
        return 1 << self.L

    def dense(self):
        return self.Q.toarray()

    def exit_rates(self):
        return -self.Q.diagonal()

    def stationary(self):
        return product_law(self.L, self.q)


def product_law(L, q):
    """Bernoulli(1 - q) product over state indices (bit x-1 = site x)."""
    s = np.arange(1 << L)
    ones = np.zeros(s.size, dtype=np.int64)
    for x in range(L):
        ones += (s >> x) & 1
    return (1.0 - q) ** ones * q ** (L - ones)


def _flip_rates(L, q):
    s = np.arange(1 << L, dtype=np.int64)
    for x in range(1, L + 1):
        left = (s >> (x - 2)) & 1 if x > 1 else np.zeros_like(s)
        right = (s >> x) & 1 if x < L else np.zeros_like(s)
        cur = (s >> (x - 1)) & 1
        c = 1 - left * right
        yield s, s ^ (1 << (x - 1)), c * np.where(cur == 1, q, 1.0 - q)


def build_generator(L: int, q: float) -> GeneratorMatrix:
    if not 1 <= L <= MAX_EXACT_L:
        raise ResourceError(f"exact generator needs 1 <= L <= {MAX_EXACT_L}, got {L}")
    if not 0.0 <= q <= 1.0:
        raise ValueError("q must lie in [0, 1]")
    n = 1 << L
    rows, cols, vals = [], [], []
    diag = np.zeros(n)
    for s, t, r in _flip_rates(L, q):
        keep = r > 0
        rows.append(s[keep])
        cols.append(t[keep])
        vals.append(r[keep])
        diag -= r
    rows.append(np.arange(n))
    cols.append(np.arange(n))
    vals.append(diag)
    Q = sparse.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(n, n)).tocsr()
    return GeneratorMatrix(L, float(q), Q)


def stationary_check(G: GeneratorMatrix) -> float:
    """Largest detailed-balance residual against the product law."""
    mu = G.stationary()
    worst = 0.0
    for s, t, r in _flip_rates(G.L, G.q):
        # the reverse move t -> s has the rate of flipping back, from t's side
        back = np.asarray(G.Q[t, s]).ravel()
        worst = max(worst, float(np.max(np.abs(mu[s] * r - mu[t] * back))))
    return worst


def config_index(config) -> int:
    bits = config.bits if isinstance(config, SpinConfig) else np.asarray(config, dtype=np.int64)
    return int(sum(int(b) << i for i, b in enumerate(bits)))


def _poisson_cutoff(lam_t):
    if lam_t == 0:
        return 0
    return int(stats.poisson.isf(TAIL_MASS, lam_t)) + 1


def transient_laws(G: GeneratorMatrix, starts, times) -> np.ndarray:
    """Laws at ``times`` from each start, shape ``(len(times), n_states, n_starts)``.

    Uniformization with rate ``max exit rate``; the Poisson series is cut once
    the remaining mass is below ``1e-12``.
    """
    times = np.atleast_1d(np.asarray(times, float))
    if np.any(times < 0):
        raise ValueError("times must be >= 0")
    idx = [config_index(s) if not isinstance(s, (int, np.integer)) else int(s) for s in starts]
    n = G.n_states
    v = np.zeros((n, len(idx)))
    v[idx, range(len(idx))] = 1.0
    lam = float(G.exit_rates().max())
    out = np.zeros((times.size, n, len(idx)))
    if lam == 0.0:
        out[:] = v
        return out
    PT = (sparse.identity(n, format="csr") + G.Q / lam).T.tocsr()
    kmax = [_poisson_cutoff(lam * t) for t in times]
    for k in range(max(kmax) + 1):
        for i, t in enumerate(times):
            if k <= kmax[i]:
                out[i] += stats.poisson.pmf(k, lam * t) * v
        v = PT @ v
    return out


def tv_exact(G: GeneratorMatrix, start, t):
    """``1/2 |delta_start e^{tQ} - mu|_1``; vectorized over ``t``."""
    laws = transient_laws(G, [start], t)[:, :, 0]
    tv = 0.5 * np.abs(laws - G.stationary()[None, :]).sum(axis=1)
    return float(tv[0]) if np.ndim(t) == 0 else tv


def worst_start(G: GeneratorMatrix, t: float):
    """Start maximising the exact TV at time ``t``: ``(index, tv)``."""
    n = G.n_states
    laws = transient_laws(G, list(range(n)), [t])[0]
    tv = 0.5 * np.abs(laws - G.stationary()[:, None]).sum(axis=0)
    k = int(np.argmax(tv))
    return k, float(tv[k])


# ----------------------------------------------------------- Monte Carlo

def _interval_bits(config):
    if isinstance(config, SpinConfig):
        if config.boundary.kind is not Kind.INTERVAL:
            raise ValueError("need an interval configuration")
        return config.bits.astype(np.uint8)
    return np.asarray(config, dtype=np.uint8)


def all_ones(L):
    return SpinConfig.interval(np.ones(L, np.uint8))


def spaced_zeros(L, spacing):
    """Zeros at ``spacing, 2 spacing, ...`` inside ``[1, L]``."""
    b = np.ones(L, np.uint8)
    b[spacing - 1::spacing] = 0
    return SpinConfig.interval(b)


def window_product_probs(w, q):
    """Product-law probabilities of ``w``-bit codes (first site = top bit)."""
    c = np.arange(1 << w)
    ones = np.zeros(c.size, dtype=np.int64)
    for k in range(w):
        ones += (c >> k) & 1
    return (1.0 - q) ** ones * q ** (w - ones)


def _window_trial(seed, p, bits, times, win_lo, w):
    codes, _, _, ne = K.run_interval(np.uint64(seed), p, K.K_FA, bits, times, float(times[-1]),
                                     win_lo, w, 1, 0, False, 0, 1)
    return codes, ne


def window_codes(q, config, times, w, N, seed, offset=None, jobs=None, label="window"):
    """Codes of the ``w``-site window at each time, shape ``(N, len(times))``.

    The window starts at ``offset`` (default: centred in ``[1, L]``).
    """
    bits = _interval_bits(config)
    L = bits.size
    if not 1 <= w <= min(L, 62):
        raise ValueError("window width out of range")
    win_lo = 1 + (L - w) // 2 if offset is None else int(offset)
    if win_lo < 1 or win_lo + w - 1 > L:
        raise ValueError("window leaves [1, L]")
    times = np.asarray(times, float)
    if np.any(np.diff(times) < 0):
        raise ValueError("time grid must be sorted")
    fn = partial(_window_trial, p=1.0 - q, bits=bits, times=times, win_lo=win_lo, w=w)
    res = run_trials(fn, seed, label, N, jobs)
    return np.array([r[0] for r in res]), int(sum(r[1] for r in res))


@dataclass
class TVEstimate:
    t: float
    tv: float
    ci: tuple
    w: int
    N: int


def _tv_from_codes(codes, w, q, seed, tag):
    law = EmpiricalLaw.from_codes(codes, w)
    ref = window_product_probs(w, q)
    tv = law.tv_to(ref)
    lo, hi = tv_bootstrap_ci(law, ref, derive_seed(seed, "tv-ci", tag))
    # reverse-percentile interval: removes the first-order plug-in bias
    ci = (max(0.0, 2 * tv - hi), min(1.0, 2 * tv - lo))
    return tv, ci


def check_sample_size(N, w, factor=10):
    if w > MAX_WINDOW:
        raise ValueError(f"w must be <= {MAX_WINDOW}")
    if N < factor * (1 << w):
        raise ValueError(f"N={N} is below {factor} * 2^w = {factor << w}")


def tv_window_estimate(q, L, start, t, w, N, seed, offset=None, jobs=None) -> TVEstimate:
    """Windowed TV against the product marginal.

    Marginalizing contracts TV, so this bounds the full distance from below
    (up to the upward plug-in bias, which the interval corrects for).
    """
    check_sample_size(N, w)
    bits = _interval_bits(start)
    if bits.size != L:
        raise ValueError("start length differs from L")
    codes, _ = window_codes(q, bits, [float(t)], w, N, seed, offset, jobs)
    tv, ci = _tv_from_codes(codes[:, 0], w, q, seed, 0)
    return TVEstimate(float(t), tv, ci, w, N)


@dataclass
class TVProfile:
    times: np.ndarray
    tv: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    mode: str  # "exact" or "mc"
    L: int
    q: float
    w: int | None = None
    N: int | None = None
    start: str = ""
    n_events: int = 0

    @property
    def iso(self):
        """Nonincreasing fit of ``tv`` (isotonic regression)."""
        if self.mode == "exact":
            return self.tv
        return isotonic_regression(self.tv, increasing=False).x

    def t_mix(self, eps):
        return crossing_time(self.times, self.iso, eps)

    def value_at(self, t):
        return float(np.interp(t, self.times, self.iso))

    def rows(self):
        for k in range(self.times.size):
            yield {"L": self.L, "q": self.q, "t": float(self.times[k]), "tv": float(self.tv[k]),
                   "ci_lo": float(self.ci_lo[k]), "ci_hi": float(self.ci_hi[k]), "mode": self.mode}


def crossing_time(times, values, eps):
    """First time a nonincreasing profile reaches ``eps`` (linear inverse
    interpolation between grid points)."""
    values = np.asarray(values)
    below = np.flatnonzero(values <= eps)
    if below.size == 0:
        raise HorizonError(f"profile stays above eps={eps} up to t={times[-1]}")
    k = int(below[0])
    if k == 0:
        if values[0] < eps:
            raise HorizonError(f"profile is already below eps={eps} at t={times[0]}")
        return float(times[0])
    t0, t1, v0, v1 = times[k - 1], times[k], values[k - 1], values[k]
    return float(t0 + (v0 - eps) * (t1 - t0) / (v0 - v1))


def mixing_profile(q, L, start, times, w, N, seed, offset=None, jobs=None,
                   label="profile", min_factor=10) -> TVProfile:
    times = np.asarray(times, float)
    if np.any(np.diff(times) < 0):
        raise ValueError("time grid must be sorted")
    check_sample_size(N, w, min_factor)
    codes, ne = window_codes(q, start, times, w, N, seed, offset, jobs, label)
    tv = np.zeros(times.size)
    lo = np.zeros(times.size)
    hi = np.zeros(times.size)
    for k in range(times.size):
        tv[k], (lo[k], hi[k]) = _tv_from_codes(codes[:, k], w, q, seed, k)
    return TVProfile(times, tv, lo, hi, "mc", L, q, w, N, _describe(start), ne)


def exact_profile(G: GeneratorMatrix, start, times) -> TVProfile:
    times = np.asarray(times, float)
    tv = tv_exact(G, start, times)
    return TVProfile(times, tv, tv.copy(), tv.copy(), "exact", G.L, G.q, start=_describe(start))


def _describe(start):
    from .lattice import format_config
    if isinstance(start, SpinConfig):
        s = format_config(start)
        return s if len(s) <= 80 else s[:77] + "..."
    return ""


# ---------------------------------------------------------------- cutoff

def cutoff_times(B, L, v, v_min, a, delta):
    """``t1`` (with its (log L)^9 floor), ``t2``, ``t3`` for a start with
    largest cluster ``B``."""
    core = B / v_min
    return {
        "t1_core": core,
        "t1": max(core, math.log(L) ** 9 / v_min),
        "t2": B / (2 * v) + a / (v_min * delta) * math.sqrt(B),
        "t3": B / (2 * v) - a / v * math.sqrt(B),
    }


@dataclass
class CutoffReport:
    q: float
    Ls: list
    v_hat: float
    eps: tuple
    t_mix: dict  # L -> {eps: time}
    slope: float
    slope_target: float
    window_exponent: float
    window_prefactor: float
    cutoff_times: dict
    profiles: dict = field(repr=False)
    upper_C: float | None = None
    checks: dict = field(default_factory=dict)

    @property
    def slope_rel_error(self):
        return abs(self.slope - self.slope_target) / self.slope_target

    def record(self):
        return {
            "schema": "cutoff-report/1",
            "q": self.q, "L": list(self.Ls), "v_hat": self.v_hat,
            "t_mix": {str(L): {str(e): t for e, t in d.items()} for L, d in self.t_mix.items()},
            "slope": self.slope, "slope_target": self.slope_target,
            "slope_rel_error": self.slope_rel_error,
            "window_exponent": self.window_exponent, "window_prefactor": self.window_prefactor,
            "cutoff_times": {str(L): d for L, d in self.cutoff_times.items()},
            "upper_C": self.upper_C, "checks": self.checks,
        }


def cutoff_grid(L, v, before=5.0, after=6.0, n=121):
    c = L / (2 * v)
    return np.linspace(max(0.0, c - before * math.sqrt(L)), c + after * math.sqrt(L), n)


def cutoff_experiment(q, Ls, N, seed, v_hat, w=6, v_min=None, a=1.0, delta=0.1,
                      eps=(0.75, 0.5, 0.25), grids=None, jobs=None, holdout=True,
                      min_factor=10, level=0.1) -> CutoffReport:
    """All-ones starts at each ``L``: profiles, mixing times and the two fits.

    ``slope`` is the least-squares slope of ``t_mix(0.5)`` against ``L``; the
    window exponent is the log-log slope of ``t_mix(min eps) - t_mix(max eps)``.

    The shape checks look at the largest ``L``: the profile at
    ``L/(2v) - 3 sqrt(L)`` and at ``L/(2v) + C sqrt(L)``, where ``C`` is the
    smallest constant bringing the smaller sizes to ``level`` (``holdout``) or
    all sizes (in-sample, read off the fitted profile).
    """
    Ls = sorted(int(L) for L in Ls)
    if len(Ls) < 3:
        raise ValueError("need at least three values of L")
    profiles, tm, th = {}, {}, {}
    big = Ls[-1]
    cb = big / (2 * v_hat)
    t_before = cb - 3 * math.sqrt(big)
    C = None
    for L in Ls:
        grid = grids[L] if grids and L in grids else cutoff_grid(L, v_hat)
        if L == big:
            extra = [t_before] if t_before >= 0 else []
            if holdout:
                C = upper_window_constant(profiles, v_hat, level)
                extra.append(cb + C * math.sqrt(big))
            grid = np.unique(np.concatenate([grid, extra]))
        prof = mixing_profile(q, L, all_ones(L), grid, w, N, seed, jobs=jobs,
                              label=f"cutoff/{L}", min_factor=min_factor)
        profiles[L] = prof
        tm[L] = {e: prof.t_mix(e) for e in eps}
        th[L] = cutoff_times(L, L, v_hat, v_min or v_hat, a, delta)
    if C is None:
        C = upper_window_constant(profiles, v_hat, level)
    Larr = np.array(Ls, float)
    mid = 0.5 if 0.5 in eps else sorted(eps)[len(eps) // 2]
    slope = float(np.polyfit(Larr, [tm[L][mid] for L in Ls], 1)[0])
    win = np.array([tm[L][min(eps)] - tm[L][max(eps)] for L in Ls])
    if np.any(win <= 0):
        expo, pref = float("nan"), float("nan")
    else:
        expo, logc = np.polyfit(np.log(Larr), np.log(win), 1)
        expo, pref = float(expo), float(math.exp(logc))
    pb = profiles[big]

    def at(t):
        k = np.flatnonzero(pb.times == t)
        return float(pb.tv[k[0]]) if k.size else pb.value_at(t)

    checks = {"L": big, "t_before": t_before, "lower_value": at(t_before) if t_before >= 0 else 1.0,
              "C": C, "t_after": cb + C * math.sqrt(big), "upper_value": at(cb + C * math.sqrt(big)),
              "holdout": holdout}
    return CutoffReport(q, Ls, v_hat, tuple(eps), tm, slope, 1.0 / (2 * v_hat), expo, pref, th,
                        profiles, C, checks)


def upper_window_constant(profiles: dict, v_hat, level=0.1):
    """Smallest ``C`` with profile ``<= level`` at ``L/(2v) + C sqrt(L)`` for every
    given profile."""
    Cs = [(p.t_mix(level) - L / (2 * v_hat)) / math.sqrt(L) for L, p in profiles.items()]
    return float(max(Cs))


# ----------------------------------------------------------- lower bound

@dataclass
class WitnessReport:
    t3: float
    width: int
    p_hat: float
    p_ci: tuple
    mu_mass: float
    certificate: float
    certificate_lo: float
    N: int


def _ones_trial(seed, p, bits, t, lo_site, width):
    _, zeros, _, _ = K.run_interval(np.uint64(seed), p, K.K_FA, bits, np.array([t]), t,
                                    1, 0, lo_site, lo_site + width - 1, False, 0, 1)
    return int(zeros[0] == 0)


def ones_window_probability(q, L, t, width, N, seed, jobs=None, label="witness"):
    """Fraction of all-ones starts whose middle ``width`` sites are all ones at ``t``."""
    if width == 0:
        return 1.0, (1.0, 1.0)
    lo_site = 1 + (L - width) // 2
    fn = partial(_ones_trial, p=1.0 - q, bits=np.ones(L, np.uint8), t=float(t),
                 lo_site=lo_site, width=width)
    hits = sum(run_trials(fn, seed, label, N, jobs))
    ci = stats.binomtest(hits, N).proportion_ci(0.95, method="wilson")
    return hits / N, (float(ci.low), float(ci.high))


def lower_bound_witness(q, L, a, seed, N, v_hat, jobs=None, t=None) -> WitnessReport:
    """``d(t3) >= P(middle 2a sqrt(L) sites all ones) - (1 - q)^{width}``.

    The event's probability under the product law is exact; the certificate's
    lower end uses the Wilson lower bound of the estimate.
    """
    if a < 0:
        raise ValueError("a must be >= 0")
    t3 = L / (2 * v_hat) - a / v_hat * math.sqrt(L) if t is None else float(t)
    if t3 < 0:
        raise ValueError(f"t3 = {t3:.3f} is negative")
    width = math.ceil(2 * a * math.sqrt(L) - 1e-9)
    if width > L:
        raise ValueError("witness window is wider than the interval")
    p_hat, ci = ones_window_probability(q, L, t3, width, N, seed, jobs)
    mu = (1.0 - q) ** width
    return WitnessReport(t3, width, p_hat, ci, mu, p_hat - mu, ci[0] - mu, N)


# ---------------------------------------------------------------- zeros

@dataclass
class ZerosTable:
    ss: list
    ells: list
    prob: np.ndarray  # [s, ell]
    se: np.ndarray
    N: int
    y: int
    ell_slopes: list
    s_slopes: list


def _loglin_slope(x, p):
    x = np.asarray(x, float)
    p = np.asarray(p, float)
    ok = p > 0
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(x[ok], np.log(p[ok]), 1)[0])


def zeros_experiment(q, ells, ss, config, N, seed, y=None, jobs=None) -> ZerosTable:
    """``P(eta_s not in H(X_s, y, ell))``: a run of ``ell`` ones somewhere
    between the front and ``y`` at time ``s``."""
    bits, lo = _halfline_args(config)
    x0 = initial_front(config)
    if y is None:
        y = x0
    if not x0 <= y <= 0:
        raise ValueError("need X_0 <= y <= 0")
    ells = [int(l) for l in ells]
    if any(l < 1 for l in ells):
        raise ValueError("ell must be >= 1")
    ss = sorted(float(s) for s in ss)
    fn = partial(_open_trial, p=1.0 - q, kind=K.K_FA, bkind=K.B_HALFLINE, bits=bits, lo=lo,
                 sample_times=np.array(ss), horizon=ss[-1], y_site=y)
    res = run_trials(fn, seed, "zeros", N, jobs)
    runs = np.array([r[2] for r in res])  # (N, len(ss))
    prob = np.array([[np.mean(runs[:, i] >= l) for l in ells] for i in range(len(ss))])
    se = np.sqrt(prob * (1 - prob) / N)
    return ZerosTable(ss, ells, prob, se, N, y,
                      [_loglin_slope(ells, prob[i]) for i in range(len(ss))],
                      [_loglin_slope(ss, prob[:, j]) for j in range(len(ells))])


# ----------------------------------------------------------- relaxation

STATISTICS = ("site", "zeros10")


@dataclass
class RelaxationResult:
    t: float
    stat: str
    estimate: float
    se: float
    ci: tuple
    passed: bool
    N: int


def _relax_trial(seed, p, bits, t, stat, mid, L):
    if bits is None:
        b = (np.random.default_rng(seed).random(L) < p).astype(np.uint8)
    else:
        b = bits
    if stat == "site":
        codes, _, _, _ = K.run_interval(np.uint64(seed), p, K.K_FA, b, np.array([t]), t,
                                        mid, 1, 1, 0, False, 0, 1)
        return float(codes[0]) - p
    _, zeros, _, _ = K.run_interval(np.uint64(seed), p, K.K_FA, b, np.array([t]), t,
                                    1, 0, mid - 4, mid + 5, False, 0, 1)
    return float(zeros[0]) - 10 * (1.0 - p)


def relaxation_experiment(q, L, ell, beta, stat, N, seed, v_min, start=None, t=None,
                          center=None, jobs=None) -> RelaxationResult:
    """Centered statistic at ``t = ell/(2 v_min) + ell^beta``.

    ``stat`` is ``"site"`` (occupation of the middle site) or ``"zeros10"``
    (zeros in the 10 sites ``c - 4 .. c + 5``). ``start=None`` samples each
    trial's start from the product law.
    """
    if stat not in STATISTICS:
        raise ValueError(f"stat must be one of {STATISTICS}")
    mid = L // 2 if center is None else int(center)
    if stat == "zeros10" and not (5 <= mid <= L - 5):
        raise ValueError("statistic window leaves [1, L]")
    if start is not None:
        bits = _interval_bits(start)
        if bits.size != L:
            raise ValueError("start length differs from L")
        if not in_H(SpinConfig.interval(bits), 0, L + 1, ell):
            raise ValueError(f"start is not in H(0, L+1, {ell})")
    else:
        bits = None
    if t is None:
        t = ell / (2 * v_min) + ell ** beta
    fn = partial(_relax_trial, p=1.0 - q, bits=bits, t=float(t), stat=stat, mid=mid, L=L)
    x = np.array(run_trials(fn, seed, "relaxation", N, jobs))
    m = float(x.mean())
    se = float(x.std(ddof=1) / math.sqrt(N))
    return RelaxationResult(float(t), stat, m, se, (m - 1.96 * se, m + 1.96 * se),
                            abs(m) < 3 * se + 0.02, N)
