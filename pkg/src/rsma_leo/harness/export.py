"""CSV / JSON export of sweep results and dual traces."""

from __future__ import annotations

import csv
import io
import json
import math

from .sweep import SweepResult, format_value

CSV_FIELDS = ("scheme", "sweep_var", "sweep_value", "trial", "seed", "sum_rate_mbps",
              "feasible", "iterations")


class ExportError(OSError):
    pass


def _num(value):
    return "nan" if not math.isfinite(value) else f"{value:.9g}"


def results_csv(result):
    """CSV text, one row per (scheme, value, trial) in the result's record order."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_FIELDS)
    var = result.spec.variable
    for r in result.records:
        writer.writerow([r.scheme, var, format_value(var, r.sweep_value), r.trial, r.seed,
                         _num(r.sum_rate_mbps), "true" if r.feasible else "false", r.iterations])
    return buf.getvalue()


def _round_floats(obj):
    if isinstance(obj, float):
        return None if not math.isfinite(obj) else float(f"{obj:.9g}")
    if isinstance(obj, dict):
        return {k: _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v) for v in obj]
    return obj


def to_json_text(data):
    """JSON with floats at 9 significant digits, newline-terminated."""
    return json.dumps(_round_floats(data), indent=1) + "\n"


def _write(path, text):
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise ExportError(f"cannot write {path}: {exc.strerror or exc}") from exc


def export_results(result, fmt, path):
    """Write a :class:`SweepResult` as ``csv`` or ``json`` to ``path``."""
    if fmt == "csv":
        _write(path, results_csv(result))
    elif fmt == "json":
        _write(path, to_json_text(result.to_dict()))
    else:
        raise ValueError(f"unknown export format {fmt!r}")


def load_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ExportError(f"cannot read {path}: {exc.strerror or exc}") from exc


def load_results(path):
    """Read a JSON sweep export back; statistics are recomputed from the records."""
    data = load_json(path)
    if data.get("kind") != "sweep":
        raise ValueError(f"{path} is not a sweep result")
    return SweepResult.from_dict(data)


def trace_payload(report, seed=None):
    """JSON-ready dual trace of a solve: per inner iteration norms and changes."""
    return {"kind": "trace", "scheme": report.scheme, "seed": seed, **report.trace}


def trace_csv(report):
    """CSV text of a solve trace, one row per inner iteration."""
    trace = report.trace
    names = list(trace)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(names)
    for row in zip(*(trace[n] for n in names)):
        writer.writerow([_num(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def export_trace(report, path, fmt="json", seed=None):
    if fmt == "csv":
        _write(path, trace_csv(report))
    elif fmt == "json":
        _write(path, to_json_text(trace_payload(report, seed)))
    else:
        raise ValueError(f"unknown export format {fmt!r}")
