"""Dispatch a validated config to its experiment and collect results.

Each handler returns ``(results, acceptance, artifacts, events)`` where
``artifacts`` maps file names to CSV text. Results only depend on the config
and seed, never on ``jobs``.
"""

from __future__ import annotations

import math
import time
from datetime import datetime, timezone

import numpy as np

from . import front_lab as FL
from . import mixing as MX
from .config import Q_BAR, ExperimentConfig
from .lattice import Kind, SimParams, SpinConfig, parse_config as parse_literal
from .report import build_report, csv_text

HANDLERS = {}


def handler(name):
    def deco(fn):
        HANDLERS[name] = fn
        return fn
    return deco


def _f(x):
    return None if x is None else float(x)


def halfline_config(name, q):
    canon = FL.canonical_initial_configs(q)
    return canon[name] if name in canon else parse_literal(name)


def interval_start(text, L):
    if text == "ones":
        return MX.all_ones(L)
    if text.startswith("spaced:"):
        return MX.spaced_zeros(L, int(text.split(":", 1)[1]))
    return parse_literal(text)


def calibrate(cfg: ExperimentConfig, jobs):
    """``(v_hat, s_hat, s2_ci)``: taken from the config or estimated from the
    single-zero start under the ``calibrate`` label."""
    v, s = cfg.get("v_hat"), cfg.get("s_hat")
    if v is not None and s is not None:
        return v, s, None, {}
    est = FL.estimate_speed_variance(cfg["q"], [FL.canonical_initial_configs(cfg["q"])["delta0"]],
                                     cfg["calibrate_T"], cfg["calibrate_N"], cfg.seed, jobs,
                                     label="calibrate")[0]
    v = est.v_hat if v is None else v
    s = math.sqrt(est.s2_hat) if s is None else s
    return v, s, est.s2_ci, {"calibration": est.record(cfg["q"])}


def calibrate_min(cfg, jobs):
    if cfg.get("v_min") is not None:
        return cfg["v_min"], {}
    est = FL.contact_spread_speed(cfg["q"], cfg["contact_T"], cfg["contact_N"], cfg.seed, jobs)
    return est.v_min, {"contact_calibration": {"v_min": est.v_min, "se": est.se,
                                               "survival": est.survival}}


# ------------------------------------------------------------------ front

@handler("front-speed")
def run_front_speed(cfg, jobs):
    q = cfg["q"]
    names = cfg["configs"]
    ests = FL.estimate_speed_variance(q, [halfline_config(n, q) for n in names], cfg["T"], cfg["N"],
                                      cfg.seed, jobs)
    res = {"estimates": {n: e.record(q) for n, e in zip(names, ests)}}
    acc = {}
    lo = max(e.v_ci[0] for e in ests)
    hi = min(e.v_ci[1] for e in ests)
    acc["v_ci_overlap"] = bool(lo <= hi)
    if q == 1.0:
        for n, e in zip(names, ests):
            acc[f"{n}:v_is_1"] = abs(e.v_hat - 1) <= 3 * e.v_se
            acc[f"{n}:s2_is_1"] = abs(e.s2_hat - 1) <= 3 * e.s2_se
    rows = [{"config": n, **e.record(q)} for n, e in zip(names, ests)]
    cols = ["config", "q", "T", "N", "v_hat", "v_se", "s2_hat", "s2_se"]
    return res, acc, {"estimates.csv": csv_text(rows, cols)}, 0


@handler("clt")
def run_clt(cfg, jobs):
    q, T = cfg["q"], cfg["T"]
    v, s, s2_ci, extra = calibrate(cfg, jobs)
    a = cfg.get("a") or (FL.clt_constant(v, s) if s > 0 else 1.0)
    res = {"v_hat": v, "s_hat": s, "a": a, **extra, "tests": {}}
    acc = {}
    rows = []
    for k, name in enumerate(cfg["configs"]):
        c = halfline_config(name, q)
        out = FL.clt_test(q, c, T, cfg["N"], cfg.seed, v, s, s2_ci, a, jobs, label=f"clt/{k}")
        res["tests"][name] = {"mode": out.mode, "p_ks": out.p_value, "concentration": out.concentration}
        if out.mode == "normal":
            acc[f"{name}:ks"] = out.p_value > cfg["alpha"]
        else:
            acc[f"{name}:concentration"] = out.concentration >= 0.95
        rows += [{"config": name, "trial": i, "z": float(z)} for i, z in enumerate(out.z)]
    return res, acc, {"standardized.csv": csv_text(rows, ["config", "trial", "z"])}, 0


@handler("behind-front")
def run_behind_front(cfg, jobs):
    q, w, N = cfg["q"], cfg["w"], cfg["N"]
    times = cfg["times"]
    names = cfg["configs"]
    laws = {}
    for k, name in enumerate(names):
        laws[name] = FL.behind_front_laws(q, halfline_config(name, q), times, w, N, cfg.seed,
                                          cfg.get("v_min"), jobs, label=f"behind-front/{k}")
    res = {"tv_in_time": {}, "tv_across": {}}
    acc = {}
    first = names[0]
    for name in names:
        if len(times) > 1:
            tv = laws[name][-2].tv(laws[name][-1])
            ci = FL.tv_bootstrap_ci(laws[name][-2], laws[name][-1], cfg.seed)
            res["tv_in_time"][name] = {"t": [times[-2], times[-1]], "tv": tv, "ci": list(ci)}
            if name == first:
                acc[f"{name}:tv_time"] = tv < cfg["tv_max"]
    for name in names[1:]:
        tv = laws[first][-1].tv(laws[name][-1])
        ci = FL.tv_bootstrap_ci(laws[first][-1], laws[name][-1], cfg.seed)
        res["tv_across"][f"{first}~{name}"] = {"t": times[-1], "tv": tv, "ci": list(ci)}
        acc[f"{first}~{name}:tv_config"] = tv < cfg["tv_max"]
    rows = []
    for name in names:
        for t, law in zip(times, laws[name]):
            rows += [{"config": name, "t": t, "pattern": format(c, f"0{w}b"), "count": int(n)}
                     for c, n in enumerate(law.counts) if n]
    return res, acc, {"laws.csv": csv_text(rows, ["config", "t", "pattern", "count"])}, 0


@handler("contact-speed")
def run_contact(cfg, jobs):
    try:
        est = FL.contact_spread_speed(cfg["q"], cfg["T"], cfg["N"], cfg.seed, jobs)
        res = {"v_min": est.v_min, "se": est.se, "survival": est.survival, "N": est.N}
    except FL.EstimationError as e:
        res = {"v_min": None, "survival": 1.0 - e.extinct_fraction, "N": cfg["N"]}
    acc = {}
    if cfg["q"] > Q_BAR:
        acc["survival>0.5"] = res["survival"] > 0.5
        acc["v_min>0"] = res["v_min"] is not None and res["v_min"] > 0
    return res, acc, {}, 0


@handler("two-front")
def run_two_front(cfg, jobs):
    q, L = cfg["q"], cfg["L"]
    v, s, _, extra = calibrate(cfg, jobs)
    a = cfg.get("a") or FL.clt_constant(v, s)
    d = cfg.get("d") if cfg.get("d") is not None else 6 * a * math.sqrt(L)
    B = L + 2
    strict = cfg["strict"]
    res = {"v_hat": v, "s_hat": s, "a": a, "d": d, **extra}
    if strict and B - 1 < 4 * d:
        raise ValueError(f"cluster gap {B - 1} is below 4d = {4 * d:.1f}")
    summ = FL.two_front_experiment(L, q, d, cfg["N"], cfg.seed, jobs, strict=strict)
    lo, hi = B / (2 * v) - 3 * a * math.sqrt(B), B / (2 * v) + 3 * a * math.sqrt(B)
    res.update({"mean_tau": summ.mean_tau, "tau_se": summ.tau_se, "window": [lo, hi],
                "met_fraction": summ.met_fraction, "regular_fraction": summ.regular_fraction,
                "h_fraction": summ.h_fraction})
    acc = {"mean_tau_in_window": lo <= summ.mean_tau <= hi,
           "h_fraction": summ.h_fraction >= cfg["h_min"]}
    rows = [{"trial": i, "tau": float(t)} for i, t in enumerate(summ.taus)]
    return res, acc, {"taus.csv": csv_text(rows, ["trial", "tau"])}, 0


# ----------------------------------------------------------------- mixing

def _profile_record(prof: MX.TVProfile, series):
    return {"series": series, "t": prof.times.tolist(), "tv": prof.tv.tolist(),
            "ci_lo": prof.ci_lo.tolist(), "ci_hi": prof.ci_hi.tolist(), "mode": prof.mode}


_PROFILE_COLS = ["L", "q", "t", "tv", "ci_lo", "ci_hi", "mode"]


@handler("tv-exact")
def run_tv_exact(cfg, jobs):
    G = MX.build_generator(cfg["L"], cfg["q"])
    prof = MX.exact_profile(G, interval_start(cfg["start"], cfg["L"]), cfg["times"])
    resid = MX.stationary_check(G)
    res = {"residual": resid, "profiles": [_profile_record(prof, f"L={cfg['L']}")]}
    acc = {"reversible": resid <= 1e-12,
           "nonincreasing": bool(np.all(np.diff(prof.tv) <= 1e-10))}
    return res, acc, {"profile.csv": csv_text(list(prof.rows()), _PROFILE_COLS)}, 0


@handler("mixing-profile")
def run_mixing_profile(cfg, jobs):
    L = cfg["L"]
    prof = MX.mixing_profile(cfg["q"], L, interval_start(cfg["start"], L), cfg["times"], cfg["w"],
                             cfg["N"], cfg.seed, cfg.get("offset"), jobs)
    res = {"profiles": [_profile_record(prof, f"L={L}")], "n_events": prof.n_events}
    return res, {}, {"profile.csv": csv_text(list(prof.rows()), _PROFILE_COLS)}, prof.n_events


@handler("cutoff")
def run_cutoff(cfg, jobs):
    q = cfg["q"]
    v, s, _, extra = calibrate(cfg, jobs)
    vmin, extra2 = calibrate_min(cfg, jobs)
    a = cfg.get("a") or FL.clt_constant(v, s)
    Ls = sorted(cfg["L"])
    grids = {L: MX.cutoff_grid(L, v, n=cfg["grid_points"]) for L in Ls}
    # the upper window constant comes from the smaller sizes; the largest is held out
    N = cfg["N"]
    rep = MX.cutoff_experiment(q, Ls, N, cfg.seed, v, cfg["w"], vmin, a, cfg["delta"],
                               tuple(cfg["eps"]), grids, jobs, holdout=True,
                               min_factor=cfg["sample_factor"])
    res = {"v_hat": v, "s_hat": s, "v_min": vmin, "a": a, **extra, **extra2, **rep.record(),
           "profiles": [_profile_record(rep.profiles[L], f"L={L}") for L in Ls]}
    acc = {"slope_within_10pct": rep.slope_rel_error < 0.1,
           "window_exponent": 0.35 <= rep.window_exponent <= 0.65,
           "value_before_window": rep.checks["lower_value"] >= 0.9,
           "value_after_window": rep.checks["upper_value"] <= 0.1}
    res["checks"] = rep.checks
    rows = [r for L in Ls for r in rep.profiles[L].rows()]
    ne = sum(p.n_events for p in rep.profiles.values())
    return res, acc, {"profiles.csv": csv_text(rows, _PROFILE_COLS)}, ne


@handler("lower-bound")
def run_lower_bound(cfg, jobs):
    q, L = cfg["q"], cfg["L"]
    v, s, _, extra = calibrate(cfg, jobs)
    a = cfg.get("a") if cfg.get("a") is not None else FL.clt_constant(v, s)
    w = MX.lower_bound_witness(q, L, a, cfg.seed, cfg["N"], v, jobs)
    res = {"v_hat": v, "s_hat": s, "a": a, **extra, "t3": w.t3, "width": w.width, "p_hat": w.p_hat,
           "p_ci": list(w.p_ci), "mu_mass": w.mu_mass, "certificate": w.certificate,
           "certificate_lo": w.certificate_lo}
    # diagnostic: the same event one a sqrt(L)/v earlier, which centres the
    # expected fronts inside the localisation windows
    t_alt = L / (2 * v) - 2 * a / v * math.sqrt(L)
    if t_alt >= 0 and a > 0:
        alt = MX.lower_bound_witness(q, L, a, cfg.seed, cfg["N"], v, jobs, t=t_alt)
        res["centred_variant"] = {"t": t_alt, "p_hat": alt.p_hat, "certificate": alt.certificate}
    acc = {"certificate": w.certificate >= cfg["certificate_min"]}
    return res, acc, {}, 0


@handler("zeros")
def run_zeros(cfg, jobs):
    q = cfg["q"]
    tab = MX.zeros_experiment(q, cfg["ells"], cfg["s"], halfline_config(cfg["config"], q), cfg["N"],
                              cfg.seed, cfg.get("y"), jobs)
    res = {"s": tab.ss, "ells": tab.ells, "prob": tab.prob.tolist(), "se": tab.se.tolist(),
           "ell_slopes": tab.ell_slopes, "s_slopes": tab.s_slopes, "y": tab.y}
    acc = {}
    for i, s in enumerate(tab.ss):
        ok = all(tab.prob[i, j + 1] <= tab.prob[i, j] + 2 * math.hypot(tab.se[i, j], tab.se[i, j + 1])
                 for j in range(len(tab.ells) - 1))
        acc[f"s={s:g}:nonincreasing_in_ell"] = ok
    rows = [{"s": s, "ell": l, "prob": float(tab.prob[i, j]), "se": float(tab.se[i, j])}
            for i, s in enumerate(tab.ss) for j, l in enumerate(tab.ells)]
    return res, acc, {"zeros.csv": csv_text(rows, ["s", "ell", "prob", "se"])}, 0


@handler("relaxation")
def run_relaxation(cfg, jobs):
    L, ell = cfg["L"], cfg["ell"]
    vmin, extra = calibrate_min(cfg, jobs)
    start = cfg.get("start")
    st = None if start in (None, "stationary") else interval_start(start, L)
    r = MX.relaxation_experiment(cfg["q"], L, ell, cfg["beta"], cfg["stat"], cfg["N"], cfg.seed,
                                 vmin, st, cfg.get("t"), jobs=jobs)
    res = {"v_min": vmin, **extra, "t": r.t, "stat": r.stat, "estimate": r.estimate, "se": r.se,
           "ci": list(r.ci)}
    return res, {"relaxed": r.passed}, {}, 0


@handler("replay")
def run_replay(cfg, jobs):
    from .dynamics import ProcessKind, SimState, evolve
    from .graphical import EventStream, read_events_csv, write_events_csv
    import os
    import tempfile

    c = parse_literal(cfg["start"])
    state = SimState(c, SimParams(cfg["q"]), ProcessKind(cfg["process"]))
    if cfg.get("events"):
        stream = read_events_csv(cfg["events"])
    else:
        if c.boundary.kind is Kind.INTERVAL:
            lo, hi = 1, c.boundary.L
        elif c.boundary.kind is Kind.HALFLINE:
            lo, hi = min(c.lo, -1) if c.n else -1, -1
        else:
            lo, hi = c.lo, c.hi
        stream = EventStream(cfg.seed, cfg["q"], lo, hi)
    tr = evolve(state, stream, cfg["horizon"], cfg["snapshot_times"],
                record_front=c.boundary.kind in (Kind.HALFLINE, Kind.LINE), keep_events=True)
    arts = {}
    with tempfile.TemporaryDirectory() as d:
        for name, fn in (("snapshots.csv", tr.write_snapshots_csv), ("front.csv", tr.write_front_csv)):
            fn(os.path.join(d, name))
            arts[name] = open(os.path.join(d, name)).read()
        write_events_csv(os.path.join(d, "events.csv"), tr.events)
        arts["events.csv"] = open(os.path.join(d, "events.csv")).read()
    from .lattice import format_config
    res = {"final": format_config(tr.final), "n_events": tr.n_events,
           "front_traces": [{"series": "X_t", "t": tr.front_times, "X": tr.front}] if tr.front else []}
    return res, {}, arts, tr.n_events


# ----------------------------------------------------------------------- run

def run(cfg: ExperimentConfig, jobs=None):
    """Run ``cfg``; returns ``(report, artifacts)``."""
    if cfg.subcommand not in HANDLERS:
        raise KeyError(f"unknown subcommand {cfg.subcommand!r}")
    jobs = jobs if jobs is not None else cfg.jobs
    t0 = time.perf_counter()
    started = datetime.now(timezone.utc).isoformat()
    results, acc, arts, events = HANDLERS[cfg.subcommand](cfg, jobs)
    acc = {k: bool(v) for k, v in acc.items()}
    tele = {"wall_s": time.perf_counter() - t0, "started": started, "events": int(events)}
    return build_report(cfg.echo(), _jsonable(results), acc, tele), arts


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    return x
