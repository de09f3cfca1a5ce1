"""Scenario results and their CSV form.

``results.csv`` has one row per operation, columns in this order:
scenario, worker, op_index, start, end, latency, ok.
``summary.csv`` has one row per scenario run, columns in ``SUMMARY_COLUMNS``.
"""

from __future__ import annotations

import csv
import statistics
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Iterable, Optional, TextIO

RESULT_COLUMNS = ("scenario", "worker", "op_index", "start", "end", "latency", "ok")
SUMMARY_COLUMNS = ("scenario", "param", "value", "runtime", "ops", "ok_ops", "mean_latency",
                   "p50_latency", "p99_latency", "bytes_sent", "bytes_received", "checks_passed",
                   "trace_hash", "metrics")


@dataclass(frozen=True)
class OpRecord:
    worker: int
    op_index: int
    start: float
    end: float
    ok: bool = True

    @property
    def latency(self) -> float:
        return self.end - self.start


@dataclass
class ScenarioResult:
    scenario: str
    config: dict[str, Any]
    ops: list[OpRecord] = field(default_factory=list)
    runtime: float = 0.0
    bytes_sent: dict[str, int] = field(default_factory=dict)
    bytes_received: dict[str, int] = field(default_factory=dict)
    deliveries: Counter = field(default_factory=Counter)
    metrics: dict[str, float] = field(default_factory=dict)
    checks: dict[str, bool] = field(default_factory=dict)
    trace_hash: str = ""
    # full event listing, only filled in when the simulator kept its events
    trace_dump: str = field(default="", repr=False, compare=False)

    @property
    def ok(self) -> bool:
        return all(self.checks.values())

    def latencies(self, worker: Optional[int] = None) -> list[float]:
        return [op.latency for op in self.ops if op.ok and (worker is None or op.worker == worker)]

    def ok_ops(self) -> int:
        return sum(op.ok for op in self.ops)

    def failed_checks(self) -> list[str]:
        return sorted(name for name, passed in self.checks.items() if not passed)


def _fmt(x: float) -> str:
    return f"{x:.9f}"


def _quantile(values: list[float], q: float) -> float:
    if not values:
        return 0.0
    ordered = sorted(values)
    return ordered[min(len(ordered) - 1, int(q * len(ordered)))]


def write_results(results: Iterable[ScenarioResult], out: TextIO) -> int:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(RESULT_COLUMNS)
    rows = 0
    for res in results:
        for op in res.ops:
            writer.writerow((res.scenario, op.worker, op.op_index, _fmt(op.start), _fmt(op.end),
                             _fmt(op.latency), int(op.ok)))
            rows += 1
    return rows


def summary_row(res: ScenarioResult, param: str = "", value: str = "") -> list[str]:
    lat = res.latencies()
    metrics = ";".join(f"{k}={v:.9g}" if isinstance(v, float) else f"{k}={v}"
                       for k, v in sorted(res.metrics.items()))
    return [res.scenario, param, value, _fmt(res.runtime), str(len(res.ops)), str(res.ok_ops()),
            _fmt(statistics.fmean(lat) if lat else 0.0), _fmt(_quantile(lat, 0.5)),
            _fmt(_quantile(lat, 0.99)), str(sum(res.bytes_sent.values())),
            str(sum(res.bytes_received.values())), str(int(res.ok)), res.trace_hash, metrics]


def write_summary(rows: Iterable[list[str]], out: TextIO, header_line: Optional[str] = None) -> None:
    if header_line:
        out.write(f"# {header_line}\n")
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(SUMMARY_COLUMNS)
    for row in rows:
        writer.writerow(row)
