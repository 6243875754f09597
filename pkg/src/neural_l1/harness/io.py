"""Output files: per-controller trace CSVs, ``metrics.csv`` and ``certificate.txt``."""
from __future__ import annotations

import io
from pathlib import Path

import numpy as np

from ..certify import format_report
from ..controllers import ControllerKind
from .sim import MetricsSummary, RunTrace, ScenarioResult, column_names

TRACE_SCHEMA = "neural-l1-trace/1"
METRICS_SCHEMA = "neural-l1-metrics/1"


def _g(v: float) -> str:
    return "%.17g" % v


def trace_to_csv(trace: RunTrace) -> str:
    buf = io.StringIO()
    buf.write(f"#schema={TRACE_SCHEMA};dt={_g(trace.dt)};Vx={_g(trace.Vx)};"
              f"track_length={_g(trace.track_length)}\n")
    buf.write(",".join(column_names()) + "\n")
    np.savetxt(buf, trace.data, fmt="%.17g", delimiter=",")
    return buf.getvalue()


def read_trace_csv(path) -> tuple[dict, list, np.ndarray]:
    """Parse a trace file into (header fields, column names, data)."""
    with open(path) as fh:
        head = fh.readline().strip()
        cols = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    meta = dict(kv.split("=", 1) for kv in head.lstrip("#").split(";"))
    return meta, cols, data


def metrics_to_csv(metrics) -> str:
    lines = [f"#schema={METRICS_SCHEMA}", ",".join(MetricsSummary.FIELDS)]
    for m in metrics:
        vals = []
        for f in MetricsSummary.FIELDS:
            v = getattr(m, f)
            if isinstance(v, ControllerKind):
                vals.append(v.label)
            elif isinstance(v, bool):
                vals.append("1" if v else "0")
            elif isinstance(v, float):
                vals.append(_g(v))
            else:
                vals.append(str(v))
        lines.append(",".join(vals))
    return "\n".join(lines) + "\n"


def write_result(result: ScenarioResult, out_dir) -> Path:
    """Write ``<out>/<scenario>/{<controller>.csv, metrics.csv, certificate.txt}``."""
    d = Path(out_dir) / result.config.name
    d.mkdir(parents=True, exist_ok=True)
    for kind in sorted(result.traces):
        (d / f"{kind.label}.csv").write_text(trace_to_csv(result.traces[kind]))
    ordered = [result.metrics[k] for k in sorted(result.metrics)]
    (d / "metrics.csv").write_text(metrics_to_csv(ordered))
    write_certificate(result, d)
    return d


def write_certificate(result: ScenarioResult, scenario_dir) -> Path:
    audits = {k.label: a for k, a in result.audits.items()}
    p = Path(scenario_dir) / "certificate.txt"
    p.write_text(format_report(result.report, audits))
    return p
