"""Report assembly and artifact writing."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import tempfile


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=True)


def content_hash(obj) -> str:
    """Git-style blob hash of the canonical JSON form."""
    body = canonical_json(obj).encode()
    return hashlib.sha1(b"blob %d\0" % len(body) + body).hexdigest()


def atomic_write(path, text: str):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(rows, columns) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow({k: _fmt(r.get(k)) for k in columns})
    return buf.getvalue()


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


def build_report(config_echo: dict, results: dict, acceptance: dict, telemetry: dict) -> dict:
    body = {
        "config": config_echo,
        "config_hash": content_hash(config_echo),
        "results": results,
        "acceptance": acceptance,
        "passed": all(acceptance.values()),
    }
    return {**body, "body_hash": content_hash(body), "telemetry": telemetry}


class NothingToPlot(ValueError):
    pass


PLOT_COLUMNS = ["series", "x", "y", "ci_lo", "ci_hi"]


def emit_plot_data(report: dict) -> str:
    """Long-format CSV ``series, x, y, ci_lo, ci_hi`` from the profiles or
    front traces stored in a report."""
    res = report.get("results", {})
    rows = []
    for prof in res.get("profiles", []):
        for t, y, lo, hi in zip(prof["t"], prof["tv"], prof["ci_lo"], prof["ci_hi"]):
            rows.append({"series": prof["series"], "x": t, "y": y, "ci_lo": lo, "ci_hi": hi})
    for tr in res.get("front_traces", []):
        for t, x in zip(tr["t"], tr["X"]):
            rows.append({"series": tr.get("series", "X_t"), "x": t, "y": x})
    if not rows:
        raise NothingToPlot("report holds no profile or front trace")
    return csv_text(rows, PLOT_COLUMNS)
