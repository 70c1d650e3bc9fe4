"""Run reports for CLI invocations.

The report proper is deterministic for a replayed run: stage names, statuses,
oracle call counts, warnings, output file names and the exit status. Wall
clock timings are kept apart (``timings``) and written to a sidecar file so
two replays of the same cassette produce byte-identical reports.
"""

from __future__ import annotations

import json
import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator

REPORT_VERSION = 1


@dataclass
class StageRecord:
    name: str
    status: str = "ok"
    oracle_calls: dict[str, int] = field(default_factory=dict)
    detail: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "status": self.status,
                "oracle_calls": dict(sorted(self.oracle_calls.items())), "detail": self.detail}


class _WarningCollector(logging.Handler):
    def __init__(self, sink: list[str]):
        super().__init__(logging.WARNING)
        self.sink = sink

    def emit(self, record: logging.LogRecord) -> None:
        self.sink.append(f"{record.name}: {record.getMessage()}")


@dataclass
class RunReport:
    command: str
    stages: list[StageRecord] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    outputs: list[str] = field(default_factory=list)
    exit_status: int = 0
    failed_stage: str | None = None
    timings: dict[str, float] = field(default_factory=dict)

    @contextmanager
    def capture_warnings(self, logger: str = "layoutforge") -> Iterator[None]:
        handler = _WarningCollector(self.warnings)
        log = logging.getLogger(logger)
        log.addHandler(handler)
        try:
            yield
        finally:
            log.removeHandler(handler)

    @contextmanager
    def stage(self, name: str, calls=None) -> Iterator[StageRecord]:
        """Time a stage and attribute the oracle calls it made.

        ``calls`` is a live Counter (e.g. ``Gateway.calls``); the stage
        records the per-role difference across its body. An exception marks
        the stage failed, sets exit status 1 and propagates.
        """
        record = StageRecord(name)
        self.stages.append(record)
        before = dict(calls) if calls is not None else {}
        start = time.perf_counter()
        try:
            yield record
        except Exception as exc:
            record.status = "failed"
            record.detail = f"{type(exc).__name__}: {exc}"
            self.exit_status = 1
            self.failed_stage = name
            raise
        finally:
            self.timings[name] = round(time.perf_counter() - start, 6)
            if calls is not None:
                record.oracle_calls = {k: v - before.get(k, 0) for k, v in calls.items()
                                       if v - before.get(k, 0)}

    def oracle_totals(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for s in self.stages:
            for role, n in s.oracle_calls.items():
                out[role] = out.get(role, 0) + n
        return dict(sorted(out.items()))

    def to_dict(self) -> dict[str, Any]:
        return {
            "version": REPORT_VERSION,
            "command": self.command,
            "exit_status": self.exit_status,
            "failed_stage": self.failed_stage,
            "stages": [s.to_dict() for s in self.stages],
            "oracle_calls": self.oracle_totals(),
            "warnings": list(self.warnings),
            "outputs": list(self.outputs),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"

    def to_text(self) -> str:
        """One ``path = value`` line per leaf of :meth:`to_dict`."""
        return "\n".join(f"{k} = {json.dumps(v, ensure_ascii=False)}" for k, v in flatten(self.to_dict())) + "\n"

    def write(self, directory: str | Path, stem: str = "run_report") -> list[Path]:
        d = Path(directory)
        paths = [d / f"{stem}.json", d / f"{stem}.txt", d / f"{stem}.timings.json"]
        paths[0].write_text(self.to_json(), encoding="utf-8")
        paths[1].write_text(self.to_text(), encoding="utf-8")
        paths[2].write_text(json.dumps(self.timings, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return paths


def flatten(value: Any, prefix: str = "") -> list[tuple[str, Any]]:
    if isinstance(value, dict) and value:
        out = []
        for k in sorted(value):
            out.extend(flatten(value[k], f"{prefix}.{k}" if prefix else str(k)))
        return out
    if isinstance(value, list) and value:
        out = []
        for i, v in enumerate(value):
            out.extend(flatten(v, f"{prefix}[{i}]"))
        return out
    return [(prefix, value)]


def unflatten_text(text: str) -> list[tuple[str, Any]]:
    """Inverse of the text form, as (path, value) pairs."""
    pairs = []
    for line in text.splitlines():
        key, _, raw = line.partition(" = ")
        pairs.append((key, json.loads(raw)))
    return pairs
