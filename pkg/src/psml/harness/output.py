"""CSV emission and parsing plus the JSON metadata sidecar."""

from __future__ import annotations

import csv
import json
import math

from .runner import ExperimentReport, report_meta

COLUMNS = ("sweep_var", "sweep_value", "estimator", "psi_bias", "psi_bias_se", "psmse",
           "psmse_se", "runtime_ms", "fail_rate", "crb")


def _num(value) -> str:
    # repr round-trips floats exactly; None becomes an empty field
    if value is None:
        return ""
    return repr(value) if isinstance(value, (int, float)) else str(value)


def report_rows(report: ExperimentReport) -> list:
    rows = []
    for r in report.rows:
        bias = r.psi_bias
        rows.append({
            "sweep_var": r.sweep_var,
            "sweep_value": _num(r.sweep_value),
            "estimator": r.estimator,
            "psi_bias": _num(float("nan") if bias is None else bias.aggregate),
            "psi_bias_se": _num(float("nan") if bias is None else bias.se),
            "psmse": _num(r.psmse),
            "psmse_se": _num(r.psmse_se),
            "runtime_ms": _num(r.runtime_ms),
            "fail_rate": _num(r.fail_rate),
            "crb": _num(r.crb),
        })
    return rows


def write_csv(report: ExperimentReport, fh) -> None:
    writer = csv.DictWriter(fh, fieldnames=COLUMNS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(report_rows(report))


def emit_csv(report: ExperimentReport, path: str) -> None:
    """Header plus one row per (sweep point, estimator); empty fields mean not computed."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        write_csv(report, fh)


def read_csv(path: str) -> list:
    """Parse an emitted CSV back into dicts with floats (``None`` for empty fields)."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != COLUMNS:
            raise ValueError(f"unexpected header {reader.fieldnames}")
        out = []
        for row in reader:
            parsed = {}
            for key, text in row.items():
                if key in ("sweep_var", "estimator"):
                    parsed[key] = text
                else:
                    parsed[key] = float(text) if text != "" else None
            out.append(parsed)
    return out


def _clean(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_clean(v) for v in obj]
    return obj


def emit_meta(report: ExperimentReport, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_clean(report_meta(report)), fh, indent=2, sort_keys=True)
        fh.write("\n")
