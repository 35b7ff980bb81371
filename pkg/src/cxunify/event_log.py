"""Event-log ingestion: CSV and a minimal XES subset, variants, and partitions.

Traces group timestamped activity executions by case id.  A *variant* collects
the traces that share one ordered activity sequence; a *partition* collects the
traces that share one unordered activity set.  Partitions are the unit handed
to causal discovery because their timestamp table is rectangular: every member
trace has a timestamp for every activity in the set.

Timestamps are stored as integer milliseconds since the epoch.
"""

from __future__ import annotations

import csv
import io
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import IO, Iterable, Mapping, Sequence

_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)

REPEAT_POLICIES = ("first", "last", "drop_trace")


class ParseError(Exception):
    """Input could not be understood; carries the offending location if known."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass(frozen=True)
class ActivityEvent:
    case_id: str
    name: str
    timestamp: int  # milliseconds since epoch
    payload: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class Trace:
    case_id: str
    events: tuple[ActivityEvent, ...]

    def names(self) -> tuple[str, ...]:
        return tuple(event.name for event in self.events)

    def activity_set(self) -> frozenset[str]:
        return frozenset(event.name for event in self.events)


@dataclass(frozen=True)
class EventLog:
    traces: tuple[Trace, ...] = ()

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for trace in self.traces:
            if trace.case_id in seen:
                raise ParseError(f"duplicate case id {trace.case_id!r}")
            seen.add(trace.case_id)
            previous = None
            for event in trace.events:
                if event.case_id != trace.case_id:
                    raise ParseError(
                        f"event case id {event.case_id!r} differs from "
                        f"trace case id {trace.case_id!r}"
                    )
                if not event.name:
                    raise ParseError(f"empty activity name in case {trace.case_id!r}")
                if previous is not None and event.timestamp < previous:
                    raise ParseError(
                        f"timestamps out of order in case {trace.case_id!r}"
                    )
                previous = event.timestamp

    @property
    def alphabet(self) -> frozenset[str]:
        return frozenset(
            event.name for trace in self.traces for event in trace.events
        )

    def __len__(self) -> int:
        return len(self.traces)


@dataclass(frozen=True)
class Variant:
    sequence: tuple[str, ...]
    case_ids: frozenset[str]


@dataclass(frozen=True)
class Partition:
    activity_set: frozenset[str]
    case_ids: frozenset[str]
    traces: tuple[Trace, ...]  # sorted by case id


# --- CSV --------------------------------------------------------------------

@dataclass(frozen=True)
class CsvSchema:
    """Column names and timestamp encoding of a CSV event log.

    ``timestamp_format``: "auto" (numeric value = epoch seconds, otherwise
    ISO-8601), "iso", "epoch_s", or "epoch_ms".
    """

    case_column: str = "case:concept:name"
    activity_column: str = "concept:name"
    timestamp_column: str = "time:timestamp"
    timestamp_format: str = "auto"


def parse_timestamp(raw: str, timestamp_format: str = "auto") -> int:
    """Parse one timestamp value to integer epoch milliseconds."""
    raw = raw.strip()
    if timestamp_format == "epoch_ms":
        return int(round(float(raw)))
    if timestamp_format == "epoch_s":
        return int(round(float(raw) * 1000.0))
    if timestamp_format == "auto":
        try:
            return int(round(float(raw) * 1000.0))
        except ValueError:
            pass
    elif timestamp_format != "iso":
        raise ValueError(f"unknown timestamp format {timestamp_format!r}")
    value = raw.replace("Z", "+00:00") if raw.endswith("Z") else raw
    moment = datetime.fromisoformat(value)
    if moment.tzinfo is None:
        moment = moment.replace(tzinfo=timezone.utc)
    delta = moment - _EPOCH
    return delta.days * 86_400_000 + delta.seconds * 1000 + delta.microseconds // 1000


def format_timestamp(ms: int, timestamp_format: str = "auto") -> str:
    if timestamp_format == "epoch_ms":
        return str(ms)
    if timestamp_format == "epoch_s":
        return repr(ms / 1000.0)
    # auto/iso emit ISO-8601 UTC, which "auto" parses back exactly
    return (_EPOCH + timedelta(milliseconds=ms)).isoformat()


def _as_text(source: bytes | str | IO) -> str:
    if isinstance(source, str):
        return source
    if isinstance(source, bytes):
        return source.decode("utf-8")
    data = source.read()
    return data.decode("utf-8") if isinstance(data, bytes) else data


def parse_csv(source: bytes | str | IO, schema: CsvSchema = CsvSchema()) -> EventLog:
    """Parse a header-first CSV event log; extra columns become event payload."""
    text = _as_text(source)
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        return EventLog()
    columns = {name: idx for idx, name in enumerate(header)}
    for required in (schema.case_column, schema.activity_column, schema.timestamp_column):
        if required not in columns:
            raise ParseError(f"missing column {required!r}", line=1)
    case_idx = columns[schema.case_column]
    activity_idx = columns[schema.activity_column]
    timestamp_idx = columns[schema.timestamp_column]
    payload_columns = [
        (name, idx)
        for name, idx in columns.items()
        if idx not in (case_idx, activity_idx, timestamp_idx)
    ]

    events_by_case: dict[str, list[ActivityEvent]] = {}
    for row in reader:
        if not row:
            continue
        if len(row) != len(header):
            raise ParseError(
                f"expected {len(header)} fields, found {len(row)}", line=reader.line_num
            )
        case_id = row[case_idx]
        name = row[activity_idx]
        if not name:
            raise ParseError("empty activity name", line=reader.line_num)
        try:
            timestamp = parse_timestamp(row[timestamp_idx], schema.timestamp_format)
        except ValueError as exc:
            raise ParseError(
                f"bad timestamp {row[timestamp_idx]!r}: {exc}", line=reader.line_num
            ) from exc
        payload = {name: row[idx] for name, idx in payload_columns if row[idx] != ""}
        events_by_case.setdefault(case_id, []).append(
            ActivityEvent(case_id, name, timestamp, payload)
        )

    traces = tuple(
        Trace(case_id, tuple(sorted(events, key=lambda e: e.timestamp)))
        for case_id, events in events_by_case.items()
    )
    return EventLog(traces)


def serialize_csv(log: EventLog, schema: CsvSchema = CsvSchema()) -> str:
    """Inverse of parse_csv for the same schema, modulo payload key order."""
    payload_keys = sorted(
        {key for trace in log.traces for event in trace.events for key in event.payload}
    )
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(
        [schema.case_column, schema.activity_column, schema.timestamp_column]
        + payload_keys
    )
    for trace in log.traces:
        for event in trace.events:
            row = [
                event.case_id,
                event.name,
                format_timestamp(event.timestamp, schema.timestamp_format),
            ]
            row.extend(event.payload.get(key, "") for key in payload_keys)
            writer.writerow(row)
    return out.getvalue()


# --- XES --------------------------------------------------------------------

def _local(tag: str) -> str:
    return tag.rpartition("}")[2]


def _xes_attributes(element: ET.Element) -> dict[str, str]:
    attrs: dict[str, str] = {}
    for child in element:
        if _local(child.tag) == "event":
            continue
        key = child.get("key")
        value = child.get("value")
        if key is not None and value is not None:
            attrs[key] = value
    return attrs


def parse_xes(source: bytes | str | IO, lifecycle: str = "complete") -> EventLog:
    """Parse the XES subset: traces with concept:name, events with
    concept:name + time:timestamp; other event attributes become payload.

    ``lifecycle="complete"`` keeps events whose lifecycle:transition is absent
    or equals "complete" (case-insensitive); ``lifecycle="all"`` keeps every
    event.  Traces that share a concept:name are merged.
    """
    if isinstance(source, str):
        data: bytes | IO = source.encode("utf-8")
    else:
        data = source
    stream = io.BytesIO(data) if isinstance(data, bytes) else data

    events_by_case: dict[str, list[ActivityEvent]] = {}
    trace_index = 0
    try:
        for _, element in ET.iterparse(stream, events=("end",)):
            if _local(element.tag) != "trace":
                continue
            trace_index += 1
            trace_attrs = _xes_attributes(element)
            case_id = trace_attrs.get("concept:name")
            if case_id is None:
                raise ParseError(f"trace #{trace_index} has no concept:name")
            bucket = events_by_case.setdefault(case_id, [])
            event_index = 0
            for child in element:
                if _local(child.tag) != "event":
                    continue
                event_index += 1
                attrs = _xes_attributes(child)
                transition = attrs.pop("lifecycle:transition", None)
                if (
                    lifecycle != "all"
                    and transition is not None
                    and transition.casefold() != lifecycle.casefold()
                ):
                    continue
                name = attrs.pop("concept:name", None)
                stamp = attrs.pop("time:timestamp", None)
                if name is None:
                    raise ParseError(
                        f"trace {case_id!r} event #{event_index} has no concept:name"
                    )
                if stamp is None:
                    raise ParseError(
                        f"trace {case_id!r} event #{event_index} has no time:timestamp"
                    )
                try:
                    timestamp = parse_timestamp(stamp, "iso")
                except ValueError as exc:
                    raise ParseError(
                        f"trace {case_id!r} event #{event_index}: "
                        f"bad timestamp {stamp!r}"
                    ) from exc
                bucket.append(ActivityEvent(case_id, name, timestamp, attrs))
            element.clear()
    except ET.ParseError as exc:
        raise ParseError(f"malformed XML: {exc}") from exc

    traces = tuple(
        Trace(case_id, tuple(sorted(events, key=lambda e: e.timestamp)))
        for case_id, events in events_by_case.items()
    )
    return EventLog(traces)


# --- Variants and partitions --------------------------------------------------

def extract_variants(log: EventLog) -> list[Variant]:
    """Group traces by ordered activity sequence, lexicographic output order."""
    cases_by_sequence: dict[tuple[str, ...], set[str]] = {}
    for trace in log.traces:
        cases_by_sequence.setdefault(trace.names(), set()).add(trace.case_id)
    return [
        Variant(sequence, frozenset(cases_by_sequence[sequence]))
        for sequence in sorted(cases_by_sequence)
    ]


def partition(
    log: EventLog,
    selected: Iterable[Variant | Sequence[str]] | None = None,
    split_by_variants: bool = False,
) -> list[Partition]:
    """Group the selected traces into partitions.

    By default traces are grouped by unordered activity set; with
    ``split_by_variants`` each selected variant becomes its own partition.
    ``selected`` accepts Variant values or bare activity sequences and
    defaults to all variants of the log.
    """
    variants = extract_variants(log)
    by_sequence = {variant.sequence: variant for variant in variants}
    if selected is None:
        chosen = variants
    else:
        chosen = []
        for item in selected:
            sequence = tuple(item.sequence if isinstance(item, Variant) else item)
            variant = by_sequence.get(sequence)
            if variant is None:
                raise ParseError(f"no such variant in log: {list(sequence)}")
            if isinstance(item, Variant) and item.case_ids != variant.case_ids:
                raise ParseError(
                    f"variant {list(sequence)} has different members in this log"
                )
            chosen.append(variant)

    trace_by_case = {trace.case_id: trace for trace in log.traces}

    def member_traces(case_ids: frozenset[str]) -> tuple[Trace, ...]:
        return tuple(trace_by_case[cid] for cid in sorted(case_ids))

    if split_by_variants:
        return [
            Partition(frozenset(v.sequence), v.case_ids, member_traces(v.case_ids))
            for v in sorted(chosen, key=lambda v: v.sequence)
        ]

    cases_by_set: dict[frozenset[str], set[str]] = {}
    for variant in chosen:
        key = frozenset(variant.sequence)
        cases_by_set.setdefault(key, set()).update(variant.case_ids)
    return [
        Partition(activity_set, frozenset(cases), member_traces(frozenset(cases)))
        for activity_set, cases in sorted(
            cases_by_set.items(), key=lambda kv: sorted(kv[0])
        )
    ]


def timestamp_rows(
    partition: Partition, repeat_policy: str = "first"
) -> tuple[tuple[str, ...], tuple[str, ...], list[list[int]], tuple[str, ...]]:
    """Rectangular timestamp table of a partition.

    Returns (activities, case_ids, rows, flagged) with one row per kept trace
    and one column per activity (both sorted).  Traces that execute an
    activity more than once are flagged; the policy decides whether their
    first or last occurrence is used, or the trace is dropped.
    """
    if repeat_policy not in REPEAT_POLICIES:
        raise ValueError(f"unknown repeat policy {repeat_policy!r}")
    activities = tuple(sorted(partition.activity_set))
    rows: list[list[int]] = []
    kept: list[str] = []
    flagged: list[str] = []
    for trace in partition.traces:
        stamps: dict[str, int] = {}
        repeated = False
        for event in trace.events:
            if event.name in stamps:
                repeated = True
                if repeat_policy == "last":
                    stamps[event.name] = event.timestamp
            else:
                stamps[event.name] = event.timestamp
        if repeated:
            flagged.append(trace.case_id)
            if repeat_policy == "drop_trace":
                continue
        rows.append([stamps[name] for name in activities])
        kept.append(trace.case_id)
    return activities, tuple(kept), rows, tuple(flagged)
