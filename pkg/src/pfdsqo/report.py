"""Serialisation of solve reports (json, csv trace, human summary)."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from .solver import IterationRecord, SolveReport, TerminationReason

FORMATS = ("human", "json", "csv")
CSV_COLUMNS = ("k", "alf", "d_norm", "eps_abs", "eps_rel", "step", "split")

_ARRAYS = ("x", "y", "lam")


def report_to_dict(report: SolveReport) -> dict:
    out = {}
    for f in fields(SolveReport):
        val = getattr(report, f.name)
        if f.name in _ARRAYS:
            val = np.asarray(val, dtype=float).tolist()
        elif f.name == "termination_reason":
            val = TerminationReason(val).value
        elif f.name == "trace":
            val = [asdict(rec) for rec in val]
        elif f.name == "duals":
            val = {k: np.asarray(v, dtype=float).tolist() for k, v in val.items()}
        out[f.name] = val
    return out


def report_from_dict(data: dict) -> SolveReport:
    kw = dict(data)
    for name in _ARRAYS:
        kw[name] = np.asarray(kw[name], dtype=float)
    kw["termination_reason"] = TerminationReason(kw["termination_reason"])
    kw["trace"] = [IterationRecord(**rec) for rec in kw["trace"]]
    kw["duals"] = {k: np.asarray(v, dtype=float) for k, v in kw.get("duals", {}).items()}
    return SolveReport(**kw)


def to_json(report: SolveReport) -> str:
    # floats are written with repr, so values survive the round trip exactly
    return json.dumps(report_to_dict(report), indent=1)


def to_csv(report: SolveReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for rec in report.trace:
        w.writerow([repr(getattr(rec, c)) if isinstance(getattr(rec, c), float) else int(getattr(rec, c)) for c in CSV_COLUMNS])
    return buf.getvalue()


def to_human(report: SolveReport) -> str:
    lines = [
        f"problem          {report.problem_name}",
        f"status           {TerminationReason(report.termination_reason).value}",
        f"objective        {report.objective:.10g}",
        f"iterations       {report.n_iter} (split {report.n_split_iter}, RA {report.splitting_ratio:.0%})",
        f"violation        eq {report.feasibility_eq:.2e}  ineq {report.feasibility_ineq:.2e}  range {report.feasibility_range:.2e}",
        f"wall time        {report.wall_time:.3f} s",
    ]
    if report.kkt_residual_at_stop is not None:
        lines.append(f"kkt residual     {report.kkt_residual_at_stop:.2e}")
    return "\n".join(lines) + "\n"


def render(report: SolveReport, fmt: str) -> str:
    if fmt == "json":
        return to_json(report)
    if fmt == "csv":
        return to_csv(report)
    if fmt == "human":
        return to_human(report)
    raise ValueError(f"unknown format {fmt!r}; choose from {', '.join(FORMATS)}")


def emit_report(report: SolveReport, fmt: str, path=None) -> str:
    """Render ``report``; write it to ``path`` when given. Returns the text."""
    text = render(report, fmt)
    if path is not None:
        Path(path).write_text(text)
    return text


def load_report(path) -> SolveReport:
    return report_from_dict(json.loads(Path(path).read_text()))


def read_trace_csv(text: str) -> list[dict]:
    rows = list(csv.DictReader(io.StringIO(text)))
    for row in rows:
        for key in CSV_COLUMNS:
            row[key] = int(row[key]) if key in ("k", "split") else float(row[key])
    return rows


def reports_equal(a: SolveReport, b: SolveReport) -> bool:
    return report_to_dict(a) == report_to_dict(b)
