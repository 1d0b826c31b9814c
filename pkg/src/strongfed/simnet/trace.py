"""Line-delimited JSON traces."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable

TRACE_SCHEMA = "strongfed-trace/1"


class TraceError(ValueError):
    pass


def dumps_record(rec: dict) -> str:
    return json.dumps(rec, sort_keys=True, separators=(",", ":"))


def trace_bytes(records: Iterable[dict]) -> bytes:
    return "".join(dumps_record(r) + "\n" for r in records).encode()


def write_trace(records: Iterable[dict], path: str | Path) -> None:
    Path(path).write_bytes(trace_bytes(records))


def read_trace(path: str | Path) -> list[dict]:
    try:
        lines = Path(path).read_text().splitlines()
    except (OSError, UnicodeDecodeError) as e:
        raise TraceError(f"cannot read {path}: {e}") from None
    records = []
    for no, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as e:
            raise TraceError(f"line {no}: {e}") from None
        if not isinstance(rec, dict) or "kind" not in rec:
            raise TraceError(f"line {no}: not a trace record")
        records.append(rec)
    if not records or records[0].get("kind") != "header":
        raise TraceError("trace has no header record")
    if records[0].get("schema") != TRACE_SCHEMA:
        raise TraceError(f"unsupported trace schema {records[0].get('schema')!r}")
    return records
