"""Trace file parsing and run-length compression.

Trace files are line-delimited JSON, one trace per line:

    {"id": "1058", "steps": [[7], [11, 3], [7], [11, 3]], "label": null}

A step is the list of behavior ids observed at one point in execution;
most steps hold a single id. The flat shorthand ``"steps": [7, 5]`` is
accepted and normalized to singleton steps, and the two spellings may be
mixed within one record. Labels are advisory metadata: they travel through
to reports but never influence classification.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence, Union

from .catalog import BehaviorCatalog
from .errors import EngineError, TraceFormatError, UnknownBehaviorError

LABELS = ("malicious", "benign")


@dataclass(frozen=True)
class TraceStep:
    """Behaviors observed together at one execution point."""

    behaviors: tuple[int, ...]

    def __post_init__(self):
        behaviors = tuple(self.behaviors)
        object.__setattr__(self, "behaviors", behaviors)
        if not behaviors:
            raise ValueError("a trace step needs at least one behavior")
        if len(set(behaviors)) != len(behaviors):
            raise ValueError(f"duplicate behavior within one step: {behaviors}")


@dataclass(frozen=True)
class BehaviorTrace:
    """One script's ordered execution record."""

    trace_id: str
    steps: tuple[TraceStep, ...]
    label: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))

    def __len__(self) -> int:
        return len(self.steps)


@dataclass(frozen=True)
class RecordError:
    """A trace record that could not be used, with its input line number."""

    line: int
    reason: str


def compress_runs(flat: Sequence[int]) -> list[tuple[int, int]]:
    """Collapse consecutive repeats into (behavior, count) runs.

    Maximal encoding: no two adjacent runs share a behavior, and
    expand_runs() restores the input exactly.
    """
    runs: list[tuple[int, int]] = []
    for behavior in flat:
        if runs and runs[-1][0] == behavior:
            runs[-1] = (behavior, runs[-1][1] + 1)
        else:
            runs.append((behavior, 1))
    return runs


def expand_runs(runs: Iterable[tuple[int, int]]) -> list[int]:
    """Inverse of compress_runs()."""
    flat: list[int] = []
    for behavior, count in runs:
        flat.extend([behavior] * count)
    return flat


def parse_traces(
    source: Iterable[Union[str, bytes]],
    catalog: BehaviorCatalog | None = None,
) -> Iterator[BehaviorTrace]:
    """Parse a trace file strictly, raising on the first bad record.

    ``source`` is any iterable of lines (an open file works). Traces are
    yielded as soon as their line is read, in input order. When a catalog
    is given, every behavior id must resolve in it.
    """
    return _iter_records(source, catalog, strict=True)


def scan_traces(
    source: Iterable[Union[str, bytes]],
    catalog: BehaviorCatalog | None = None,
) -> Iterator[Union[BehaviorTrace, RecordError]]:
    """Error-tolerant variant of parse_traces().

    Bad records come out as RecordError items in place, so one malformed
    line never aborts a batch.
    """
    return _iter_records(source, catalog, strict=False)


def _iter_records(source, catalog, strict):
    seen_ids: set[str] = set()
    for line_no, raw in enumerate(source, start=1):
        try:
            text = _as_text(raw, line_no)
        except EngineError as exc:
            if strict:
                raise
            yield RecordError(line_no, str(exc))
            continue
        if not text.strip():
            continue
        try:
            yield _parse_record(text, line_no, catalog, seen_ids)
        except EngineError as exc:
            if strict:
                raise
            yield RecordError(line_no, str(exc))


def _as_text(raw, line_no):
    if isinstance(raw, (bytes, bytearray)):
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise TraceFormatError(f"not valid UTF-8: {exc}", line=line_no) from exc
    return raw


def _parse_record(text, line_no, catalog, seen_ids):
    try:
        obj = json.loads(text)
    except ValueError as exc:
        raise TraceFormatError(f"not valid JSON: {exc}", line=line_no) from exc
    if not isinstance(obj, dict):
        raise TraceFormatError("record is not a JSON object", line=line_no)

    trace_id = obj.get("id")
    if not isinstance(trace_id, str) or not trace_id:
        raise TraceFormatError("missing or non-string 'id'", line=line_no)
    if trace_id in seen_ids:
        raise TraceFormatError(f"duplicate trace id {trace_id!r}", line=line_no)

    label = obj.get("label")
    if label is not None and label not in LABELS:
        raise TraceFormatError(
            f"trace {trace_id!r}: label must be one of {LABELS} or null", line=line_no
        )

    raw_steps = obj.get("steps")
    if not isinstance(raw_steps, list):
        raise TraceFormatError(f"trace {trace_id!r}: 'steps' must be an array", line=line_no)

    steps: list[TraceStep] = []
    for index, entry in enumerate(raw_steps):
        behaviors = entry if isinstance(entry, list) else [entry]
        if not behaviors:
            raise TraceFormatError(f"trace {trace_id!r}: step {index} is empty", line=line_no)
        checked: list[int] = []
        for b in behaviors:
            if isinstance(b, bool) or not isinstance(b, int) or b < 0:
                raise TraceFormatError(
                    f"trace {trace_id!r}: step {index} holds {b!r}, "
                    "expected a non-negative integer behavior id",
                    line=line_no,
                )
            if b in checked:
                raise TraceFormatError(
                    f"trace {trace_id!r}: step {index} repeats behavior {b}", line=line_no
                )
            if catalog is not None and b not in catalog:
                raise UnknownBehaviorError(b, context=f"trace {trace_id!r}, step {index}")
            checked.append(b)
        steps.append(TraceStep(tuple(checked)))

    seen_ids.add(trace_id)
    return BehaviorTrace(trace_id, tuple(steps), label)
