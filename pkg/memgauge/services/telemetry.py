#services/telemetry.py

"""Telemetry trace sinks and the trace reader.

A trace is JSONL, one TelemetryRecord per line. Floats are written with
Python's shortest round-trip repr, so reading a trace back yields the exact
same values that were appended.
"""

import logging
import os
from pathlib import Path
from threading import Lock
from typing import Dict, Iterable, List, Mapping, Optional, Tuple, Union

from pydantic import ValidationError

from memgauge.errors import InvariantViolation, IoFailure, OutOfRange, RaggedEpochs, SchemaViolation
from memgauge.models.telemetry import RunTrace, Split, TelemetryRecord
from memgauge.services.corpus import schema_violation

logger = logging.getLogger("memgauge")

RecordLike = Union[TelemetryRecord, Mapping]


class MemorySink:
    """Keeps appended records in a list (used by tests and in-process analysis)"""
    def __init__(self):
        self.records: List[TelemetryRecord] = []

    def write(self, record: TelemetryRecord) -> None:
        self.records.append(record)


class TraceWriter:
    """Single-writer JSONL trace file"""
    def __init__(self, path, append: bool = False):
        self.path = Path(path)
        self._lock = Lock()
        self.count = 0
        try:
            self._handle = self.path.open("a" if append else "w", encoding="utf-8", newline="\n")
        except OSError as e:
            raise IoFailure(self.path, str(e)) from e

    def write(self, record: TelemetryRecord) -> None:
        with self._lock:
            try:
                self._handle.write(record.to_json())
                self._handle.write("\n")
                self._handle.flush()
            except (OSError, ValueError) as e:
                raise IoFailure(self.path, str(e)) from e
            self.count += 1

    def close(self) -> None:
        if not self._handle.closed:
            self._handle.flush()
            os.fsync(self._handle.fileno())
            self._handle.close()
            logger.debug(f"Closed trace {self.path} after {self.count} records")

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        self.close()


def to_record(record: RecordLike) -> TelemetryRecord:
    if isinstance(record, TelemetryRecord):
        return record
    try:
        return TelemetryRecord.model_validate(dict(record))
    except ValidationError as e:
        raise InvariantViolation(str(e.errors()[0].get("msg", e))) from e


def append(record: RecordLike, sink) -> None:
    """Validate one record and append it to a sink."""
    sink.write(to_record(record))


def build_trace(
    records: Iterable[TelemetryRecord], lines: Optional[List[int]] = None, require_heldout: bool = False
) -> RunTrace:
    """Group records by (epoch, split) and check the trace is rectangular.

    Training runs always carry both splits, so traces read from disk pass
    ``require_heldout``; in-memory slices may hold a single split.
    """
    records = list(records)
    if not records:
        return RunTrace(run_id="", noise_rate=0.0, noise_mode="", epoch_count=0)

    first = records[0]
    buckets: Dict[Tuple[int, Split], Dict[str, TelemetryRecord]] = {}
    for position, record in enumerate(records):
        line = lines[position] if lines else None
        if record.run_id != first.run_id:
            raise SchemaViolation(line, "run_id", f"trace mixes runs '{first.run_id}' and '{record.run_id}'")
        group = buckets.setdefault((record.epoch, record.split), {})
        if record.sample_id in group:
            raise RaggedEpochs(record.split.value, record.epoch, f"sample '{record.sample_id}' recorded twice")
        group[record.sample_id] = record

    epoch_count = max(epoch for epoch, _ in buckets) + 1
    splits = sorted({split for _, split in buckets}, key=list(Split).index)
    universe = {}
    for split in splits:
        expected = None
        for epoch in range(epoch_count):
            ids = frozenset(buckets.get((epoch, split), {}))
            if not ids:
                raise RaggedEpochs(split.value, epoch, "no records")
            if expected is None:
                expected = ids
            elif ids != expected:
                missing = sorted(expected - ids)
                extra = sorted(ids - expected)
                raise RaggedEpochs(split.value, epoch, f"sample set differs (missing {missing[:3]}, extra {extra[:3]})")
        universe[split] = expected
    if require_heldout and Split.TRAIN in universe and Split.HELDOUT not in universe:
        raise RaggedEpochs(Split.HELDOUT.value, 0, "no records")

    groups = {
        key: tuple(group[sample_id] for sample_id in sorted(group))
        for key, group in sorted(buckets.items(), key=lambda item: (item[0][0], list(Split).index(item[0][1])))
    }
    return RunTrace(
        run_id=first.run_id,
        noise_rate=first.noise_rate,
        noise_mode=first.noise_mode,
        epoch_count=epoch_count,
        groups=groups,
        universe=universe,
    )


def read_trace(path) -> RunTrace:
    path = Path(path)
    try:
        handle = path.open("r", encoding="utf-8")
    except FileNotFoundError as e:
        raise IoFailure(path, "trace file not found") from e
    except OSError as e:
        raise IoFailure(path, str(e)) from e

    records: List[TelemetryRecord] = []
    lines: List[int] = []
    with handle:
        for line_number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                records.append(TelemetryRecord.model_validate_json(line))
            except ValidationError as e:
                raise schema_violation(e, line_number) from e
            lines.append(line_number)

    trace = build_trace(records, lines, require_heldout=True)
    logger.info(f"Read trace {path}: {len(trace)} records over {trace.epoch_count} epochs")
    return trace


def write_trace(records: Iterable[RecordLike], path) -> int:
    with TraceWriter(path) as writer:
        for record in records:
            append(record, writer)
        return writer.count


def epoch_slice(trace: RunTrace, epoch: int, split) -> Tuple[TelemetryRecord, ...]:
    """Records of one (epoch, split) in sample-id order."""
    if not 0 <= epoch < trace.epoch_count:
        raise OutOfRange(epoch, trace.epoch_count)
    return trace.records(epoch, Split(split))
