"""Experiment configuration: JSON documents validated against per-command rules.

Validation is total: every problem is collected (with its field path) before
anything is reported, and nothing runs until the document is clean.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

Q_BAR = 0.76

# field kinds: "float", "int", "floats", "ints", "str", "strs", "bool"
# each spec: (kind, required, default, checks)
_COMMON = {
    "seed": ("int", True, None, {"min": 0}),
    "jobs": ("int", False, None, {"min": 1}),
    "out": ("str", False, None, {}),
}

_Q = ("float", True, None, {"min": 0.0, "max": 1.0})
_CAL = {
    # (v_hat, s_hat) are estimated from delta0 when not supplied
    "v_hat": ("float", False, None, {"gt": 0.0}),
    "s_hat": ("float", False, None, {"min": 0.0}),
    "calibrate_N": ("int", False, 1000, {"min": 2}),
    "calibrate_T": ("float", False, 2000.0, {"min": 100.0}),
}
_CAL_MIN = {
    "v_min": ("float", False, None, {"gt": 0.0}),
    "contact_N": ("int", False, 400, {"min": 1}),
    "contact_T": ("float", False, 500.0, {"gt": 0.0}),
}
CONFIG_NAMES = ("delta0", "zeros10_20", "decorated50")

SCHEMAS: dict[str, dict] = {
    "front-speed": {
        "q": _Q, "T": ("float", True, None, {"min": 100.0}), "N": ("int", True, None, {"min": 2}),
        "configs": ("strs", False, list(CONFIG_NAMES), {}),
    },
    "clt": {
        "q": _Q, "T": ("float", True, None, {"min": 100.0}), "N": ("int", True, None, {"min": 2}),
        "configs": ("strs", False, list(CONFIG_NAMES), {}),
        "alpha": ("float", False, 0.01, {"gt": 0.0, "max": 1.0}),
        "a": ("float", False, None, {"gt": 0.0}),
        **_CAL,
    },
    "behind-front": {
        "q": _Q, "times": ("floats", True, None, {"min": 0.0}),
        "w": ("int", False, 10, {"min": 1, "max": 20}), "N": ("int", True, None, {"min": 1}),
        "configs": ("strs", False, ["delta0", "decorated50"], {}),
        "tv_max": ("float", False, 0.05, {"gt": 0.0}),
        "v_min": ("float", False, None, {"gt": 0.0}),
    },
    "contact-speed": {
        "q": _Q, "T": ("float", True, None, {"gt": 0.0}), "N": ("int", True, None, {"min": 1}),
    },
    "two-front": {
        "q": _Q, "L": ("int", True, None, {"min": 3}), "N": ("int", True, None, {"min": 2}),
        "d": ("float", False, None, {"min": 0.0}), "a": ("float", False, None, {"gt": 0.0}),
        "strict": ("bool", False, True, {}), "h_min": ("float", False, 0.95, {"min": 0.0, "max": 1.0}),
        **_CAL,
    },
    "tv-exact": {
        "q": _Q, "L": ("int", True, None, {"min": 1, "max": 14}),
        "start": ("str", False, "ones", {}), "times": ("floats", True, None, {"min": 0.0}),
    },
    "mixing-profile": {
        "q": _Q, "L": ("int", True, None, {"min": 1}), "start": ("str", False, "ones", {}),
        "times": ("floats", True, None, {"min": 0.0}), "w": ("int", False, 10, {"min": 1, "max": 12}),
        "N": ("int", True, None, {"min": 1}), "offset": ("int", False, None, {"min": 1}),
    },
    "cutoff": {
        "q": _Q, "L": ("ints", True, None, {"min": 8}), "N": ("int", True, None, {"min": 1}),
        "w": ("int", False, 6, {"min": 1, "max": 12}),
        "eps": ("floats", False, [0.75, 0.5, 0.25], {"gt": 0.0, "lt": 1.0}),
        "grid_points": ("int", False, 121, {"min": 3}),
        "sample_factor": ("int", False, 100, {"min": 10}),
        "a": ("float", False, None, {"gt": 0.0}), "delta": ("float", False, 0.1, {"gt": 0.0, "lt": 1.0}),
        **_CAL, **_CAL_MIN,
    },
    "zeros": {
        "q": _Q, "ells": ("ints", True, None, {"min": 1}), "s": ("floats", True, None, {"gt": 0.0}),
        "N": ("int", True, None, {"min": 2}), "config": ("str", False, "delta0", {}),
        "y": ("int", False, None, {"max": 0}),
    },
    "relaxation": {
        "q": _Q, "L": ("int", True, None, {"min": 11}), "ell": ("int", True, None, {"min": 1}),
        "beta": ("float", False, 0.25, {"gt": 0.0, "lt": 0.5}),
        "stat": ("str", False, "site", {"choices": ["site", "zeros10"]}),
        "start": ("str", False, None, {}), "t": ("float", False, None, {"min": 0.0}),
        "N": ("int", True, None, {"min": 2}), **_CAL_MIN,
    },
    "lower-bound": {
        "q": _Q, "L": ("int", True, None, {"min": 1}), "N": ("int", True, None, {"min": 1}),
        "a": ("float", False, None, {"min": 0.0}), "certificate_min": ("float", False, 0.49, {}),
        **_CAL,
    },
    "replay": {
        "q": _Q, "start": ("str", True, None, {}), "horizon": ("float", True, None, {"min": 0.0}),
        "events": ("str", False, None, {}), "process": ("str", False, "fa1f", {"choices": ["fa1f", "contact"]}),
        "snapshot_times": ("floats", False, [], {"min": 0.0}),
    },
}


class ConfigError(ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(f"{p}: {m}" for p, m in self.violations))


@dataclass
class ExperimentConfig:
    subcommand: str
    seed: int
    params: dict = field(default_factory=dict)
    jobs: int | None = None
    out: str | None = None

    def __getitem__(self, k):
        return self.params[k]

    def get(self, k, default=None):
        v = self.params.get(k)
        return default if v is None else v

    def echo(self) -> dict:
        """Everything that determines the results (``jobs`` and ``out`` do not)."""
        return {"subcommand": self.subcommand, "seed": self.seed, **self.params}


def _check_value(path, kind, v, checks, errs):
    def num(x, p):
        if isinstance(x, bool) or not isinstance(x, (int, float)):
            errs.append((p, f"expected a number, got {x!r}"))
            return
        if kind in ("int", "ints") and not float(x).is_integer():
            errs.append((p, f"expected an integer, got {x!r}"))
            return
        if isinstance(x, float) and not math.isfinite(x):
            errs.append((p, "must be finite"))
            return
        if "min" in checks and x < checks["min"]:
            errs.append((p, f"must be >= {checks['min']}"))
        if "max" in checks and x > checks["max"]:
            errs.append((p, f"must be <= {checks['max']}"))
        if "gt" in checks and not x > checks["gt"]:
            errs.append((p, f"must be > {checks['gt']}"))
        if "lt" in checks and not x < checks["lt"]:
            errs.append((p, f"must be < {checks['lt']}"))

    if kind in ("float", "int"):
        num(v, path)
        return int(v) if kind == "int" and isinstance(v, (int, float)) and not isinstance(v, bool) \
            and float(v).is_integer() else v
    if kind in ("floats", "ints"):
        if not isinstance(v, list) or not v:
            errs.append((path, "expected a non-empty list"))
            return v
        for i, x in enumerate(v):
            num(x, f"{path}[{i}]")
        return [int(x) if kind == "ints" and isinstance(x, (int, float)) and not isinstance(x, bool)
                and float(x).is_integer() else x for x in v]
    if kind == "str":
        if not isinstance(v, str):
            errs.append((path, f"expected a string, got {v!r}"))
        elif "choices" in checks and v not in checks["choices"]:
            errs.append((path, f"must be one of {checks['choices']}"))
        return v
    if kind == "strs":
        if not isinstance(v, list) or not v or not all(isinstance(x, str) for x in v):
            errs.append((path, "expected a non-empty list of strings"))
        return v
    if kind == "bool":
        if not isinstance(v, bool):
            errs.append((path, "expected true or false"))
        return v
    raise AssertionError(kind)


def _start_ok(text, path, errs, L=None):
    from .lattice import Kind, parse_config as parse_literal
    if text == "ones":
        return
    if text.startswith("spaced:"):
        try:
            k = int(text.split(":", 1)[1])
            if k < 1:
                raise ValueError
        except ValueError:
            errs.append((path, "spaced:K needs an integer K >= 1"))
        return
    try:
        c = parse_literal(text)
    except ValueError as e:
        errs.append((path, f"bad configuration literal: {e}"))
        return
    if c.boundary.kind is not Kind.INTERVAL:
        errs.append((path, "expected an interval configuration"))
    elif L is not None and c.boundary.L != L:
        errs.append((path, f"literal has L={c.boundary.L}, expected {L}"))


def _halfline_ok(text, path, errs):
    from .lattice import Kind, parse_config as parse_literal
    if text in CONFIG_NAMES:
        return
    try:
        c = parse_literal(text)
    except ValueError as e:
        errs.append((path, f"unknown configuration {text!r} ({e})"))
        return
    if c.boundary.kind is not Kind.HALFLINE:
        errs.append((path, "expected a half-line configuration or one of " + ", ".join(CONFIG_NAMES)))


def _cross_checks(cmd, p, errs):
    """Operation preconditions that involve several fields."""
    ok = lambda *ks: all(isinstance(p.get(k), (int, float, list, str)) for k in ks)
    if cmd in ("front-speed", "clt", "behind-front"):
        for i, c in enumerate(p.get("configs") or []):
            if isinstance(c, str):
                _halfline_ok(c, f"configs[{i}]", errs)
    if cmd == "zeros" and isinstance(p.get("config"), str):
        _halfline_ok(p["config"], "config", errs)
    if cmd == "behind-front" and ok("times", "w"):
        times = p["times"]
        if times != sorted(times):
            errs.append(("times", "must be sorted"))
        if isinstance(p.get("v_min"), (int, float)):
            for i, t in enumerate(times):
                if isinstance(t, (int, float)) and t > 0 and p["w"] > p["v_min"] * t / 4:
                    errs.append((f"times[{i}]", f"w={p['w']} exceeds v_min * t / 4"))
    if cmd in ("tv-exact", "mixing-profile", "relaxation") and isinstance(p.get("start"), str):
        _start_ok(p["start"], "start", errs, p.get("L") if isinstance(p.get("L"), int) else None)
    if cmd in ("tv-exact", "mixing-profile") and ok("times") and p["times"] != sorted(p["times"]):
        errs.append(("times", "must be sorted"))
    if cmd == "mixing-profile" and ok("w", "L", "N"):
        if p["w"] > p["L"]:
            errs.append(("w", "must be <= L"))
        if p["N"] < 10 * 2 ** p["w"]:
            errs.append(("N", f"must be >= 10 * 2^w = {10 * 2 ** p['w']}"))
        off = p.get("offset")
        if isinstance(off, int) and off + p["w"] - 1 > p["L"]:
            errs.append(("offset", "window leaves [1, L]"))
    if cmd == "cutoff" and ok("L"):
        if len(p["L"]) < 3:
            errs.append(("L", "L list needs >= 3 values"))
        elif len(set(p["L"])) != len(p["L"]):
            errs.append(("L", "values must be distinct"))
        if ok("N", "w", "sample_factor") and p["N"] < p["sample_factor"] * 2 ** p["w"]:
            errs.append(("N", f"must be >= {p['sample_factor']} * 2^w = {p['sample_factor'] * 2 ** p['w']}"))
        if ok("w") and all(isinstance(L, int) for L in p["L"]) and p["w"] > min(p["L"]):
            errs.append(("w", "must be <= min(L)"))
        if ok("eps") and 0.5 not in p["eps"]:
            errs.append(("eps", "must include 0.5"))
    if cmd == "zeros" and ok("s") and p["s"] != sorted(p["s"]):
        errs.append(("s", "must be sorted"))
    if cmd == "relaxation" and ok("stat", "L") and p["stat"] == "zeros10" and p["L"] < 10:
        errs.append(("L", "zeros10 needs L >= 10"))
    if cmd == "two-front" and ok("L", "d") and p.get("strict", True) and p["L"] + 1 < 4 * p["d"]:
        errs.append(("d", f"cluster gap {p['L'] + 1} is below 4d"))
    if cmd == "lower-bound" and ok("L", "a") and ok("v_hat"):
        if p["L"] / (2 * p["v_hat"]) - p["a"] / p["v_hat"] * math.sqrt(p["L"]) < 0:
            errs.append(("a", "t3 = L/(2v) - (a/v) sqrt(L) is negative"))


def validate(doc: dict, subcommand: str | None = None) -> ExperimentConfig:
    errs: list = []
    if not isinstance(doc, dict):
        raise ConfigError([("", "config must be a JSON object")])
    cmd = doc.get("subcommand", subcommand)
    if subcommand is not None and cmd != subcommand:
        errs.append(("subcommand", f"config is for {cmd!r}, not {subcommand!r}"))
    if cmd not in SCHEMAS:
        raise ConfigError(errs + [("subcommand", f"unknown subcommand {cmd!r}")])
    schema = {**_COMMON, **SCHEMAS[cmd]}
    params = {}
    for k in doc:
        if k != "subcommand" and k not in schema:
            errs.append((k, "unknown field"))
    for k, (kind, req, default, checks) in schema.items():
        if k in doc and doc[k] is not None:
            params[k] = _check_value(k, kind, doc[k], checks, errs)
        elif req:
            errs.append((k, "missing required field"))
        else:
            params[k] = default
    try:
        _cross_checks(cmd, params, errs)
    except (TypeError, ValueError):
        pass  # malformed fields are already reported
    if errs:
        raise ConfigError(errs)
    seed = params.pop("seed")
    jobs = params.pop("jobs")
    out = params.pop("out")
    return ExperimentConfig(cmd, seed, params, jobs, out)


def parse_config(text: str, subcommand: str | None = None) -> ExperimentConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError([("", f"malformed JSON: {e}")]) from None
    return validate(doc, subcommand)
