"""Front statistics on the left half-line.

Speed and variance estimates, the standardized-front normality test, the law
seen from the front, increment covariances, the two-front cluster experiment
and the spreading speed of the threshold contact process.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import partial

import numpy as np
from scipy import stats

from . import _kernels as K
from .lattice import Kind, SpinConfig, cluster_decomposition, in_H
from .rng import derive_seed
from .trials import run_trials

DEFAULT_GUARD = 64
WINDOW_CAP = 10**7
N_BOOT = 1000


class EstimationError(RuntimeError):
    def __init__(self, msg, extinct_fraction=None):
        super().__init__(msg)
        self.extinct_fraction = extinct_fraction


# --------------------------------------------------------------- helpers

def _halfline_args(config: SpinConfig):
    if config.boundary.kind is not Kind.HALFLINE:
        raise ValueError("front experiments start from a half-line configuration")
    bits = config.bits
    return bits, (config.lo if bits.size else 0)


def initial_front(config: SpinConfig) -> int:
    from .lattice import front
    return front(config)


def canonical_initial_configs(q: float, decor_seed: int = 7) -> dict:
    """The three reference starts: the single origin zero; extra zeros at -10
    and -20; a 50-site window sampled once from the product law (fixed seed)."""
    extra = np.ones(20, np.uint8)
    extra[[0, 10]] = 0  # sites -20 and -10
    rng = np.random.default_rng(decor_seed)
    decor = (rng.random(50) < 1.0 - q).astype(np.uint8)
    return {
        "delta0": SpinConfig.halfline([]),
        "zeros10_20": SpinConfig.halfline(extra, -20),
        "decorated50": SpinConfig.halfline(decor, -50),
    }


def _rng(seed, label):
    return np.random.default_rng(derive_seed(seed, label))


def clt_constant(v: float, s: float, eps: float = 0.05) -> float:
    """``a`` with ``P(|N(0, s^2)| <= 2 v a) = sqrt(1 - eps)``."""
    z = stats.norm.ppf(0.5 * (1.0 + math.sqrt(1.0 - eps)))
    return z * s / (2.0 * v)


def _open_trial(seed, p, kind, bkind, bits, lo, sample_times, horizon, w=0, y_site=0,
                guard=DEFAULT_GUARD):
    fr, codes, runs, ne, status, _ = K.run_open(
        np.uint64(seed), p, kind, bkind, bits, lo, guard, WINDOW_CAP,
        sample_times, horizon, w, y_site, 0, 1)
    if status == K.ST_CAP:
        raise RuntimeError("window cap reached")
    return fr, codes, runs, ne, status


def front_positions(q, config: SpinConfig, times, N, seed, label="front", jobs=None,
                    w=0, guard=DEFAULT_GUARD):
    """Fronts (and ``w``-bit behind-front codes) of ``N`` independent runs.

    Returns ``(fronts[N, len(times)], codes[N, len(times)], events)``.
    """
    bits, lo = _halfline_args(config)
    times = np.asarray(sorted(float(t) for t in times))
    fn = partial(_open_trial, p=1.0 - q, kind=K.K_FA, bkind=K.B_HALFLINE, bits=bits, lo=lo,
                 sample_times=times, horizon=float(times[-1]), w=w, guard=guard)
    res = run_trials(fn, seed, label, N, jobs)
    fronts = np.array([r[0] for r in res], dtype=np.int64)
    codes = np.array([r[1] for r in res], dtype=np.int64)
    return fronts, codes, int(sum(r[3] for r in res))


# ---------------------------------------------------------- speed & CLT

@dataclass
class FrontSpeedEstimate:
    v_hat: float
    v_se: float
    v_ci: tuple
    s2_hat: float
    s2_se: float
    s2_ci: tuple
    N: int
    T: float
    disp: np.ndarray = field(repr=False)

    def record(self, q):
        return {"q": q, "T": self.T, "N": self.N, "v_hat": self.v_hat, "v_se": self.v_se,
                "v_ci": list(self.v_ci), "s2_hat": self.s2_hat, "s2_se": self.s2_se,
                "s2_ci": list(self.s2_ci)}


def speed_from_displacements(disp, T, seed=0, n_boot=N_BOOT) -> FrontSpeedEstimate:
    """``v = -mean(disp) / T`` and ``s^2 = var(disp) / T`` with percentile
    bootstrap intervals."""
    disp = np.asarray(disp, dtype=float)
    N = disp.size
    if N < 2:
        raise ValueError("need at least two trials")
    v = -disp.mean() / T
    s2 = disp.var(ddof=1) / T
    rng = _rng(seed, "bootstrap")
    bv = stats.bootstrap((disp,), lambda x, axis: -np.mean(x, axis=axis) / T, n_resamples=n_boot,
                         method="percentile", rng=rng, vectorized=True)
    bs = stats.bootstrap((disp,), lambda x, axis: np.var(x, axis=axis, ddof=1) / T,
                         n_resamples=n_boot, method="percentile", rng=rng, vectorized=True)
    ci = lambda r: (float(r.confidence_interval.low), float(r.confidence_interval.high))
    return FrontSpeedEstimate(float(v), float(disp.std(ddof=1) / T / math.sqrt(N)), ci(bv),
                              float(s2), float(bs.standard_error), ci(bs), N, float(T), disp)


def estimate_speed_variance(q, configs, T, N, seed, jobs=None, label="front-speed"):
    """One estimate per initial configuration (trials seeded per config)."""
    if N < 2:
        raise ValueError("need at least two trials")
    if T < 100:
        raise ValueError("T must be >= 100")
    if q <= 0.76:
        warnings.warn(f"q={q} is not above the supercritical threshold", stacklevel=2)
    if isinstance(configs, SpinConfig):
        configs = [configs]
    out = []
    for k, c in enumerate(configs):
        x0 = initial_front(c)
        fronts, _, _ = front_positions(q, c, [T], N, seed, f"{label}/{k}", jobs)
        out.append(speed_from_displacements(fronts[:, 0] - x0, T, derive_seed(seed, label, k)))
    return out


@dataclass
class CLTResult:
    mode: str  # "normal" or "degenerate"
    p_value: float
    z: np.ndarray = field(repr=False)
    concentration: float | None = None
    a: float | None = None


def standardize(disp, v, s, T):
    return (np.asarray(disp, float) + v * T) / (s * math.sqrt(T))


def clt_from_displacements(disp, T, v_hat, s_hat, s2_ci=None, a=None) -> CLTResult:
    """Kolmogorov-Smirnov test of the standardized displacements against N(0, 1).

    When the variance is compatible with 0 the test switches to concentration:
    the fraction of trials with ``|disp + vT| <= a sqrt(T)``.
    """
    degenerate = s_hat <= 0 or (s2_ci is not None and s2_ci[0] <= 0.0)
    disp = np.asarray(disp, float)
    if degenerate:
        if a is None:
            a = 1.0
        frac = float(np.mean(np.abs(disp + v_hat * T) <= a * math.sqrt(T)))
        return CLTResult("degenerate", float("nan"), disp + v_hat * T, frac, a)
    z = standardize(disp, v_hat, s_hat, T)
    return CLTResult("normal", float(stats.kstest(z, "norm").pvalue), z)


def clt_test(q, config, T, N, seed, v_hat, s_hat, s2_ci=None, a=None, jobs=None, label="clt"):
    fronts, _, _ = front_positions(q, config, [T], N, seed, label, jobs)
    return clt_from_displacements(fronts[:, 0] - initial_front(config), T, v_hat, s_hat, s2_ci, a)


# --------------------------------------------------- law behind the front

@dataclass
class EmpiricalLaw:
    """Counts of ``w``-bit patterns; the first site is the most significant bit."""
    w: int
    counts: np.ndarray
    total: int

    @classmethod
    def from_codes(cls, codes, w):
        codes = np.asarray(codes, dtype=np.int64)
        counts = np.bincount(codes, minlength=1 << w).astype(np.int64)
        return cls(w, counts, int(codes.size))

    @property
    def probs(self):
        if self.total <= 0:
            raise ValueError("empty law")
        return self.counts / self.total

    def tv(self, other: "EmpiricalLaw") -> float:
        if other.w != self.w:
            raise ValueError("window widths differ")
        return 0.5 * float(np.abs(self.probs - other.probs).sum())

    def tv_to(self, probs) -> float:
        return 0.5 * float(np.abs(self.probs - np.asarray(probs)).sum())


def tv_bootstrap_ci(a: EmpiricalLaw, b, seed=0, n_boot=N_BOOT, level=0.95):
    """Percentile interval of the plug-in TV under multinomial resampling.

    ``b`` is either another empirical law (resampled too) or a fixed
    probability vector.
    """
    rng = _rng(seed, "tv-bootstrap")
    ra = rng.multinomial(a.total, a.probs, size=n_boot) / a.total
    if isinstance(b, EmpiricalLaw):
        rb = rng.multinomial(b.total, b.probs, size=n_boot) / b.total
    else:
        rb = np.asarray(b)[None, :]
    tvs = 0.5 * np.abs(ra - rb).sum(axis=1)
    lo, hi = np.quantile(tvs, [(1 - level) / 2, (1 + level) / 2])
    return float(lo), float(hi)


def behind_front_laws(q, config, times, w, N, seed, v_min=None, jobs=None, label="behind-front"):
    """Empirical laws of sites ``1..w`` seen from the front at each time, all
    from the same ``N`` trajectories."""
    if not 1 <= w <= 20:
        raise ValueError("w must lie in [1, 20]")
    times = sorted(float(t) for t in times)
    if v_min is not None:
        for t in times:
            if t > 0 and w > v_min * t / 4.0:
                raise ValueError(f"w={w} exceeds v_min * t / 4 at t={t}")
    if times[-1] == 0.0:
        times_run = [0.0]
    else:
        times_run = times
    _, codes, _ = front_positions(q, config, times_run, N, seed, label, jobs, w=w)
    return [EmpiricalLaw.from_codes(codes[:, k], w) for k in range(len(times))]


def behind_front_law(q, config, t, w, N, seed, v_min=None, jobs=None):
    return behind_front_laws(q, config, [t], w, N, seed, v_min, jobs)[0]


# --------------------------------------------------- increment covariance

@dataclass
class CovEstimate:
    lag: int
    cov: float
    se: float
    ci: tuple


def covariance_from_fronts(fronts, lags, burn=50):
    """Pooled ``Cov(xi_k, xi_{k+lag})`` over ``k >= burn`` from unit-time fronts.

    The standard error treats trials as independent replicates of the per-trial
    average product.
    """
    xi = np.diff(np.asarray(fronts, float), axis=1)  # xi[:, n-1] = X_n - X_{n-1}
    N, n = xi.shape
    m = xi[:, burn:].mean()
    out = []
    for lag in lags:
        if lag < 0:
            raise ValueError("lags must be >= 0")
        a = xi[:, burn:n - lag] - m
        b = xi[:, burn + lag:] - m
        per = (a * b).mean(axis=1)
        c = float(per.mean())
        se = float(per.std(ddof=1) / math.sqrt(N))
        out.append(CovEstimate(int(lag), c, se, (c - 1.96 * se, c + 1.96 * se)))
    return out


def increment_covariance(q, config, lags, N, seed, T=None, burn=50, jobs=None):
    lags = list(lags)
    if any(l < 0 for l in lags):
        raise ValueError("lags must be >= 0")
    if T is None:
        T = burn + max(lags) + 200
    times = np.arange(0, int(T) + 1, dtype=float)
    fronts, _, _ = front_positions(q, config, times, N, seed, "increments", jobs)
    return covariance_from_fronts(fronts, lags, burn)


# -------------------------------------------------------------- two fronts

@dataclass
class TwoFrontReport:
    tau: float
    met: bool
    regular: bool
    x0: int
    y0: int
    trace_t: np.ndarray = field(repr=False)
    trace_x: np.ndarray = field(repr=False)
    trace_y: np.ndarray = field(repr=False)
    run_left: int = 0
    run_right: int = 0
    d: float = 0.0

    @property
    def behind_in_H(self) -> bool:
        """Both swept regions free of runs of ``ceil(d)`` ones."""
        ell = max(1, math.ceil(self.d))
        return self.run_left < ell and self.run_right < ell


def main_cluster(config: SpinConfig):
    """Flanking zeros of the longest run of ones (leftmost on ties)."""
    info = cluster_decomposition(config, 1)
    if not info.intervals:
        raise ValueError("configuration has no particle cluster")
    return max(info.intervals, key=lambda iv: (iv[1] - iv[0], -iv[0]))


def two_front_trace(config: SpinConfig, q, seed, d, horizon=None, trace_dt=1.0,
                    mirror=False, strict=True) -> TwoFrontReport:
    """Run until the two inward fronts of the main cluster are ``<= d`` apart.

    ``mirror`` runs the mirror image of ``config`` on the mirrored rings
    (site ``x`` reads the stream of ``L + 1 - x``), which must reproduce the
    mirrored trace exactly.
    """
    if config.boundary.kind is not Kind.INTERVAL:
        raise ValueError("two-front runs need an interval configuration")
    L = config.boundary.L
    bits = config.bits
    m_off, m_sign = 0, 1
    if mirror:
        bits = bits[::-1].copy()
        m_off, m_sign = L + 1, -1
        config = SpinConfig.interval(bits)
    x0, y0 = main_cluster(config)
    if strict and y0 - x0 < 4 * d:
        raise ValueError(f"cluster gap {y0 - x0} is below 4d = {4 * d:.1f}")
    if horizon is None:
        horizon = 50.0 * (L + 2)
    out = K.run_two_front(np.uint64(seed), 1.0 - q, bits, x0, y0, float(d), float(horizon),
                          float(trace_dt), m_off, m_sign)
    tau, met, reg, rl, rr, tt, tx, ty, _ = out
    return TwoFrontReport(float(tau), bool(met), bool(reg), x0, y0, tt, tx, ty, int(rl), int(rr), d)


@dataclass
class TwoFrontSummary:
    L: int
    d: float
    N: int
    mean_tau: float
    tau_se: float
    met_fraction: float
    regular_fraction: float
    h_fraction: float
    taus: np.ndarray = field(repr=False)


def _two_front_trial(seed, config, q, d, horizon, strict):
    r = two_front_trace(config, q, seed, d, horizon, trace_dt=0.0, strict=strict)
    return r.tau, r.met, r.regular, r.behind_in_H


def two_front_experiment(L, q, d, N, seed, jobs=None, horizon=None, strict=True):
    """All-ones interval of length ``L``: meeting-time statistics over ``N`` runs."""
    config = SpinConfig.interval(np.ones(L, np.uint8))
    x0, y0 = main_cluster(config)
    if strict and y0 - x0 < 4 * d:
        raise ValueError(f"cluster gap {y0 - x0} is below 4d = {4 * d:.1f}")
    fn = partial(_two_front_trial, config=config, q=q, d=d, horizon=horizon, strict=strict)
    res = run_trials(fn, seed, "two-front", N, jobs)
    taus = np.array([r[0] for r in res])
    return TwoFrontSummary(L, float(d), N, float(taus.mean()), float(taus.std(ddof=1) / math.sqrt(N)),
                           float(np.mean([r[1] for r in res])), float(np.mean([r[2] for r in res])),
                           float(np.mean([r[3] for r in res])), taus)


# ------------------------------------------------------ contact spreading

@dataclass
class ContactSpeedEstimate:
    v_min: float
    se: float
    survival: float
    n_survived: int
    N: int
    T: float


def _contact_trial(seed, p, T):
    fr, _, _, ne, status = _open_trial(seed, p, K.K_TC, K.B_LINE, np.zeros(1, np.uint8), 0,
                                       np.array([float(T)]), float(T))
    return int(fr[0]), int(status)


def contact_spread_speed(q, T, N, seed, jobs=None) -> ContactSpeedEstimate:
    """Leftward speed of the leftmost empty site of the threshold contact
    process started from a single empty site, over surviving runs."""
    if q <= 0.76:
        warnings.warn(f"q={q}: the contact process may die out", stacklevel=2)
    res = run_trials(partial(_contact_trial, p=1.0 - q, T=T), seed, "contact", N, jobs)
    alive = np.array([st != K.ST_EXTINCT for _, st in res])
    surv = float(alive.mean())
    if not alive.any():
        raise EstimationError("every run went extinct", 1.0 - surv)
    x = -np.array([f for (f, _), a in zip(res, alive) if a], float) / T
    se = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else float("nan")
    return ContactSpeedEstimate(float(x.mean()), se, surv, int(alive.sum()), N, float(T))



@dataclass
class DominationCheck:
    violations: int
    trials_with_violation: int
    N: int
    T: float
    n_events: int


def _domination_trial(seed, p, bits, lo, T, guard):
    v, n, _, _ = K.run_domination(np.uint64(seed), p, bits, lo, guard, T)
    return int(v), int(n)


def domination_check(q, config, T, N, seed, jobs=None, guard=DEFAULT_GUARD) -> DominationCheck:
    """Couple FA-1f from ``config`` with the contact process started from its
    front and count pointwise violations of ``eta <= zeta``."""
    bits, lo = _halfline_args(config)
    fn = partial(_domination_trial, p=1.0 - q, bits=bits, lo=lo, T=float(T), guard=guard)
    res = run_trials(fn, seed, "domination", N, jobs)
    v = np.array([r[0] for r in res])
    return DominationCheck(int(v.sum()), int((v > 0).sum()), N, float(T), int(sum(r[1] for r in res)))

@dataclass(frozen=True)
class SpeedBounds:
    v_min: float
    v_max: float

    def __post_init__(self):
        if not 0 < self.v_min:
            raise ValueError("v_min must be positive")
