"""Issue-tracker crash report ingestion.

Parses exported tracker records, applies the dataset filters (resolution
status, priority, creation year, linked fix commit, embedded stack trace),
and extracts JVM stack traces from free-form description text with a
line-oriented extractor.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator

__all__ = [
    "Priority",
    "Status",
    "CrashReport",
    "StackFrame",
    "ExceptionHeader",
    "StackTrace",
    "ExtractionDiagnostics",
    "ReportParseError",
    "parse_report",
    "parse_report_json",
    "load_corpus",
    "passes_filters",
    "filter_verdict",
    "extract_stack_traces",
]


class Priority(Enum):
    BLOCKER = "Blocker"
    CRITICAL = "Critical"
    MAJOR = "Major"
    MINOR = "Minor"
    TRIVIAL = "Trivial"
    UNKNOWN = "Unknown"

    @property
    def rank(self) -> int:
        return _PRIORITY_RANK[self]


_PRIORITY_RANK = {
    Priority.TRIVIAL: 0,
    Priority.MINOR: 1,
    Priority.MAJOR: 2,
    Priority.CRITICAL: 3,
    Priority.BLOCKER: 4,
    Priority.UNKNOWN: -1,
}

HIGH_PRIORITIES = frozenset({Priority.MAJOR, Priority.CRITICAL, Priority.BLOCKER})


class Status(Enum):
    RESOLVED = "Resolved"
    FIXED = "Fixed"
    OTHER = "Other"


FILTER_CUTOFF = datetime(2010, 1, 1, tzinfo=timezone.utc)


class ReportParseError(ValueError):
    """Raised for malformed tracker records; message names the offending field."""


@dataclass(frozen=True)
class CrashReport:
    id: str
    title: str
    description: str
    created_at: datetime
    priority: Priority
    status: Status
    fix_commit: str | None = None

    @property
    def system(self) -> str:
        """Project key derived from the tracker id prefix (e.g. ZOOKEEPER-2581 -> ZOOKEEPER)."""
        return self.id.split("-", 1)[0]


@dataclass(frozen=True)
class StackFrame:
    class_fqn: str
    method_name: str
    file_name: str
    line: int

    def to_text(self) -> str:
        return f"\tat {self.class_fqn}.{self.method_name}({self.file_name}:{self.line})"


@dataclass(frozen=True)
class ExceptionHeader:
    raw: str
    exception_type: str | None = None
    message: str | None = None


@dataclass
class StackTrace:
    headers: list[ExceptionHeader]
    frames: list[StackFrame]

    def to_text(self) -> str:
        """Render back to JVM-style trace text; re-extraction yields the same frames."""
        lines: list[str] = []
        for i, h in enumerate(self.headers):
            body = h.exception_type or "java.lang.Exception"
            if h.message is not None:
                body = f"{body}: {h.message}"
            lines.append(body if i == 0 else f"Caused by: {body}")
        lines.extend(f.to_text() for f in self.frames)
        return "\n".join(lines)


@dataclass
class ExtractionDiagnostics:
    skipped_frame_lines: int = 0
    orphan_frame_lines: int = 0


# ---------------------------------------------------------------------------
# Record parsing

_REQUIRED_FIELDS = ("id", "title", "description", "created_at", "priority", "status")


def parse_report(record: dict) -> CrashReport:
    """Map one exported tracker record (a key/value document) onto CrashReport.

    Unknown priority values map to Unknown, unknown status values to Other.
    Missing or unparseable required fields raise ReportParseError naming the field.
    """
    for name in _REQUIRED_FIELDS:
        if record.get(name) is None:
            raise ReportParseError(f"{name} absent")
    raw_id = str(record["id"]).strip()
    if not raw_id:
        raise ReportParseError("id empty")
    try:
        created = _parse_timestamp(str(record["created_at"]))
    except ValueError as exc:
        raise ReportParseError(f"created_at invalid: {exc}") from exc
    try:
        priority = Priority(str(record["priority"]))
    except ValueError:
        priority = Priority.UNKNOWN
    try:
        status = Status(str(record["status"]))
    except ValueError:
        status = Status.OTHER
    fix_commit = record.get("fix_commit")
    if fix_commit is not None:
        fix_commit = str(fix_commit) or None
    return CrashReport(
        id=raw_id,
        title=str(record["title"]),
        description=str(record["description"]),
        created_at=created,
        priority=priority,
        status=status,
        fix_commit=fix_commit,
    )


def parse_report_json(text: str) -> CrashReport:
    try:
        record = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ReportParseError(f"record not valid JSON: {exc}") from exc
    if not isinstance(record, dict):
        raise ReportParseError("record not a JSON object")
    return parse_report(record)


def load_corpus(path: str | Path) -> Iterator[CrashReport]:
    """Load a corpus: a .jsonl stream, a single-record .json file, or a directory of either."""
    p = Path(path)
    if p.is_dir():
        for child in sorted(p.iterdir()):
            if child.suffix in (".json", ".jsonl"):
                yield from load_corpus(child)
        return
    text = p.read_text(encoding="utf-8")
    if p.suffix == ".jsonl":
        for line in text.splitlines():
            if line.strip():
                yield parse_report_json(line)
    else:
        yield parse_report_json(text)


def _parse_timestamp(value: str) -> datetime:
    ts = datetime.fromisoformat(value.replace("Z", "+00:00"))
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


# ---------------------------------------------------------------------------
# Dataset filters

def filter_verdict(report: CrashReport) -> dict[str, bool]:
    """Per-filter pass/fail breakdown, used by the ingest manifest accounting."""
    return {
        "status": report.status in (Status.RESOLVED, Status.FIXED),
        "priority": report.priority in HIGH_PRIORITIES,
        "created_2010_or_later": report.created_at >= FILTER_CUTOFF,
        "fix_commit": bool(report.fix_commit),
        "stack_trace": bool(extract_stack_traces(report.description)),
    }


def passes_filters(report: CrashReport) -> bool:
    return all(filter_verdict(report).values())


# ---------------------------------------------------------------------------
# Stack trace extraction

# A frame line: optional whitespace, "at", whitespace, dotted qualified name
# (nested classes keep "$", last segment may be <init>/<clinit>), then
# "(<File>.java:<digits>)". Trailing decoration (e.g. " ~[foo.jar:1.2]") is allowed.
_FRAME_RE = re.compile(
    r"^\s*at\s+"
    r"(?P<qualified>(?:[A-Za-z_$][\w$]*\.)+(?:[A-Za-z_$][\w$]*|<init>|<clinit>))"
    r"\((?P<file>[\w$.\-]+\.java):(?P<line>\d+)\)"
)

_AT_LINE_RE = re.compile(r"^\s*at\s")
_ELLIPSIS_RE = re.compile(r"^\s*\.\.\.\s*\d+\s+more\s*$")
_CAUSED_BY = "Caused by:"
_HEADER_LITERALS = ("Exception", "Error", "Caused by:")
_TYPE_TOKEN_RE = re.compile(r"[A-Za-z_$][\w$.]*")


def _is_header_line(line: str) -> bool:
    return any(lit in line for lit in _HEADER_LITERALS)


def _parse_header(line: str) -> ExceptionHeader:
    raw = line.strip()
    body = raw
    if body.startswith(_CAUSED_BY):
        body = body[len(_CAUSED_BY):].strip()
    exc_type = None
    message = None
    for m in _TYPE_TOKEN_RE.finditer(body):
        token = m.group(0)
        if "Exception" in token or "Error" in token:
            exc_type = token
            rest = body[m.end():]
            sep = rest.find(": ")
            if sep != -1:
                message = rest[sep + 2:].strip() or None
            break
    return ExceptionHeader(raw=raw, exception_type=exc_type, message=message)


def _parse_frame(line: str) -> StackFrame | None:
    m = _FRAME_RE.match(line)
    if m is None:
        return None
    qualified = m.group("qualified")
    class_fqn, _, method_name = qualified.rpartition(".")
    line_no = int(m.group("line"))
    if line_no < 1:
        return None
    return StackFrame(
        class_fqn=class_fqn,
        method_name=method_name,
        file_name=m.group("file"),
        line=line_no,
    )


def extract_stack_traces(
    description: str,
    diagnostics: ExtractionDiagnostics | None = None,
) -> list[StackTrace]:
    """Extract JVM stack traces from free-form description text.

    A trace opens at a header line (one containing "Exception", "Error", or
    "Caused by:") and collects the frame lines that follow. "Caused by:"
    lines extend the open trace's header chain; malformed "at ..." lines and
    "... N more" elision lines are skipped without closing the trace; any
    other line closes it. Traces that collected no frames are dropped.
    """
    diag = diagnostics if diagnostics is not None else ExtractionDiagnostics()
    traces: list[StackTrace] = []
    headers: list[ExceptionHeader] = []
    frames: list[StackFrame] = []
    open_trace = False

    def close() -> None:
        nonlocal headers, frames, open_trace
        if open_trace and frames:
            traces.append(StackTrace(headers=headers, frames=frames))
        headers = []
        frames = []
        open_trace = False

    for line in description.splitlines():
        line = line.rstrip("\r")
        stripped = line.strip()
        if _AT_LINE_RE.match(line):
            frame = _parse_frame(line)
            if frame is not None:
                if open_trace:
                    frames.append(frame)
                else:
                    diag.orphan_frame_lines += 1
            elif open_trace:
                diag.skipped_frame_lines += 1
            continue
        if open_trace and _ELLIPSIS_RE.match(line):
            continue
        if stripped.startswith(_CAUSED_BY) and open_trace:
            headers.append(_parse_header(line))
            continue
        if _is_header_line(line):
            close()
            headers = [_parse_header(line)]
            open_trace = True
            continue
        close()
    close()
    return traces
