"""Job reports and their CSV/JSON serialization.

Reports hold only data derived from the inputs, so the same config and seed
give byte-identical files.  Wall time goes to a separate timing file.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

SCHEMA_VERSION = 1


@dataclass
class Rule:
    """One acceptance rule: ``value`` compared against ``threshold``.

    ``op`` is one of "<=", ">=", or "within", where "within" means
    |value - threshold[0]| <= threshold[1].
    """

    name: str
    value: float
    op: str
    threshold: Any

    @property
    def passed(self) -> bool:
        v = self.value
        if v is None or (isinstance(v, float) and math.isnan(v)):
            return False
        if self.op == "<=":
            return v <= self.threshold
        if self.op == ">=":
            return v >= self.threshold
        if self.op == "within":
            center, width = self.threshold
            return abs(v - center) <= width
        raise ValueError(f"unknown comparison {self.op!r}")

    def to_dict(self) -> dict:
        return {"name": self.name, "value": self.value, "op": self.op, "threshold": self.threshold, "pass": self.passed}


@dataclass
class Table:
    header: Sequence[str]
    rows: list[Sequence[Any]] = field(default_factory=list)


@dataclass
class JobReport:
    kind: str
    inputs: dict
    seed: int
    tolerances: dict
    metrics: dict = field(default_factory=dict)
    rules: list[Rule] = field(default_factory=list)
    tables: dict[str, Table] = field(default_factory=dict)
    reason: str | None = None
    wall_time: float = 0.0

    @property
    def job_id(self) -> str:
        blob = json.dumps(self.inputs, sort_keys=True, default=str).encode()
        return f"{self.kind}-{hashlib.sha256(blob).hexdigest()[:12]}"

    @property
    def passed(self) -> bool:
        return self.reason is None and bool(self.rules) and all(r.passed for r in self.rules)

    def failed_rules(self) -> list[str]:
        return [r.name for r in self.rules if not r.passed]

    def finalize(self) -> "JobReport":
        if self.reason is None and not self.metrics:
            self.reason = "no data"
        return self

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "job_id": self.job_id,
            "kind": self.kind,
            "seed": self.seed,
            "inputs": self.inputs,
            "tolerances": self.tolerances,
            "metrics": self.metrics,
            "rules": [r.to_dict() for r in self.rules],
            "pass": self.passed,
            "reason": self.reason,
        }


def _csv_cell(x: Any) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _json_default(x):
    try:
        import numpy as np

        if isinstance(x, np.generic):
            return x.item()
        if isinstance(x, np.ndarray):
            return x.tolist()
    except ImportError:  # pragma: no cover
        pass
    raise TypeError(f"not JSON serializable: {type(x).__name__}")


def emit_results(report: JobReport, out_dir: str | Path, fmt: str = "json") -> list[Path]:
    """Write the JSON report (``fmt="json"``) or one CSV per table (``fmt="csv"``)."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"unwritable output path {out}: {exc.strerror}") from exc
    written = []
    stem = report.kind.replace("-", "_")
    if fmt == "json":
        path = out / f"{stem}.json"
        path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True, default=_json_default) + "\n")
        written.append(path)
    elif fmt == "csv":
        for name, table in report.tables.items():
            path = out / f"{name}.csv"
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(table.header)
                for row in table.rows:
                    w.writerow([_csv_cell(x) for x in row])
            written.append(path)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    return written


def emit_timing(report: JobReport, out_dir: str | Path) -> Path:
    path = Path(out_dir) / f"{report.kind.replace('-', '_')}.timing.json"
    path.write_text(json.dumps({"job_id": report.job_id, "wall_time_s": report.wall_time}) + "\n")
    return path
