"""CSV persistence for benchmark metrics and error reports.

The metrics schema is versioned by a leading comment line so downstream
tooling can detect format drift.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import asdict, dataclass, fields

SCHEMA_COMMENT = "# uhm-kit metrics v1"

METRIC_COLUMNS = [
    "command",
    "geometry",
    "n",
    "seed",
    "kernel",
    "kappa",
    "kappa_h",
    "eta",
    "criterion",
    "n_min",
    "eps",
    "workers",
    "format",
    "adm_elements",
    "dense_elements",
    "total_elements",
    "bytes_estimate",
    "c_sp",
    "k_max",
    "l_max",
    "depth_row",
    "depth_col",
    "build_seconds",
    "matvec_mean_s",
    "matvec_min_s",
    "rel_spec_err",
]


@dataclass
class MetricsRow:
    """One benchmark measurement with the fully resolved configuration echoed."""

    command: str
    geometry: str
    n: int
    seed: int
    kernel: str
    kappa: float
    kappa_h: float | None
    eta: float
    criterion: str
    n_min: int
    eps: float
    workers: int
    format: str
    adm_elements: int
    dense_elements: int
    total_elements: int
    bytes_estimate: int
    c_sp: int
    k_max: int
    l_max: int | None
    depth_row: int
    depth_col: int
    build_seconds: float
    matvec_mean_s: float | None = None
    matvec_min_s: float | None = None
    rel_spec_err: float | None = None

    def as_list(self) -> list:
        data = asdict(self)
        return [_fmt(data[c]) for c in METRIC_COLUMNS]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        if math.isnan(v):
            return ""
        return repr(v)
    return str(v)


def write_metrics(path, rows, append: bool = True) -> None:
    """Append rows to a metrics CSV, emitting the schema comment and header once."""
    rows = list(rows)
    fresh = not (append and os.path.exists(path) and os.path.getsize(path) > 0)
    mode = "a" if not fresh else "w"
    with open(path, mode, newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if fresh:
            fh.write(SCHEMA_COMMENT + "\n")
            writer.writerow(METRIC_COLUMNS)
        for row in rows:
            writer.writerow(row.as_list())


def read_metrics(path) -> list[dict]:
    """Read rows back as dicts with numeric fields parsed where possible."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    for record in reader:
        parsed = {}
        for key, val in record.items():
            if val == "" or val is None:
                parsed[key] = None
                continue
            try:
                parsed[key] = int(val)
            except ValueError:
                try:
                    parsed[key] = float(val)
                except ValueError:
                    parsed[key] = val
        out.append(parsed)
    return out


ERROR_COLUMNS = ["instance", "format", "rel_spec_err", "iters"]


def write_error_rows(path, rows, append: bool = True) -> None:
    """Persist (instance, format, rel_spec_err, iters) error-report rows."""
    fresh = not (append and os.path.exists(path) and os.path.getsize(path) > 0)
    with open(path, "a" if not fresh else "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if fresh:
            writer.writerow(ERROR_COLUMNS)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
