"""Serialization of adaptation traces and benchmark tables.

All writers are deterministic: fixed key order, floats via repr, no
timestamps, so identical runs produce identical bytes.
"""

from __future__ import annotations

import json
from pathlib import Path

from .exceptions import EmptyReportError


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def _records_of(report):
    return report if isinstance(report, list) else report.records


def write_report_jsonl(report, path) -> None:
    """One JSON object per processed sample, in stream order."""
    lines = []
    for r in _records_of(report):
        lines.append(json.dumps({
            "sample": r.index,
            "stage": r.stage,
            "kl": r.kl,
            "accepted": r.accepted,
            "phi_raw": list(r.phi_raw),
            "phi_constrained": list(r.phi_constrained),
            "gsem_loss": r.gsem_loss,
        }))
    Path(path).write_text("\n".join(lines) + "\n")


def write_phi_trajectory_csv(report, path) -> None:
    """Long-format trace: one row per (sample, layer)."""
    rows = ["step,layer,phi_raw,phi_constrained,gsem_loss,kl,accepted"]
    for r in _records_of(report):
        for layer, (raw, con) in enumerate(zip(r.phi_raw, r.phi_constrained)):
            rows.append(",".join([
                str(r.index), str(layer), _fmt(raw), _fmt(con),
                _fmt(r.gsem_loss), _fmt(r.kl), _fmt(r.accepted),
            ]))
    Path(path).write_text("\n".join(rows) + "\n")


def emit_phi_plot_data(report) -> str:
    """Plot-ready CSV text: step, layer_index, constrained coefficient.

    Layers appear in network depth order within each step.
    """
    records = _records_of(report)
    if not records:
        raise EmptyReportError("cannot plot an empty report")
    rows = ["step,layer_index,phi_constrained"]
    for r in records:
        for layer, con in enumerate(r.phi_constrained):
            rows.append(f"{r.index},{layer},{_fmt(con)}")
    return "\n".join(rows) + "\n"


def write_metrics_csv(rows, path) -> None:
    lines = ["method,corruption,severity,accuracy,mean_gsem_loss,accepted_fraction"]
    for row in rows:
        lines.append(",".join([
            row.method, row.corruption, row.severity,
            _fmt(row.accuracy), _fmt(row.mean_gsem_loss),
            _fmt(row.accepted_fraction),
        ]))
    Path(path).write_text("\n".join(lines) + "\n")


def write_compare_csv(rows, path) -> None:
    lines = ["method,corruption,severity,accuracy,accepted_fraction"]
    for row in rows:
        lines.append(",".join([
            row.method, row.corruption, row.severity,
            _fmt(row.accuracy), _fmt(row.accepted_fraction),
        ]))
    Path(path).write_text("\n".join(lines) + "\n")


def write_scan_csv(triples, path) -> None:
    lines = ["sample,mean_diff,var_ratio,gsem_loss"]
    for i, (mean_diff, var_ratio, loss) in enumerate(triples):
        lines.append(f"{i},{_fmt(mean_diff)},{_fmt(var_ratio)},{_fmt(loss)}")
    Path(path).write_text("\n".join(lines) + "\n")
