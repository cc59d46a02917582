"""core.traces

Ingest execution traces (a JSON array of API-call events), drop events from
invalid sources, and group the rest per function identity.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Mapping, Sequence, Tuple
from urllib.parse import urlsplit

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    StrictInt,
    StrictStr,
    ValidationError,
    field_validator,
)

from core.errors import SchemaError

logger = logging.getLogger(__name__)

INVALID_URL_PREFIXES: Tuple[str, ...] = ("chrome:", "chrome-extension", "file:", "v8/", "devtools:")

FunctionKey = Tuple[str, int, str]


def is_valid_script_url(url: str) -> bool:
    """True for non-empty absolute http(s) URLs outside the browser-internal prefixes."""
    if not url or url.startswith(INVALID_URL_PREFIXES):
        return False
    try:
        parts = urlsplit(url)
    except ValueError:
        return False
    return parts.scheme in ("http", "https") and bool(parts.hostname)


def url_host(url: str) -> str:
    try:
        return urlsplit(url).hostname or ""
    except ValueError:
        return ""


@dataclass(frozen=True)
class TraceEvent:
    api: str
    args: Tuple[str, ...]
    script_url: str
    script_id: int
    function_name: str
    line: int = 0
    column: int = 0
    page_url: str = ""

    @property
    def key(self) -> FunctionKey:
        return (self.script_url, self.script_id, self.function_name)

    @property
    def first_arg(self) -> str:
        return self.args[0] if self.args else ""

    def to_dict(self) -> Dict[str, Any]:
        return {
            "api": self.api,
            "args": list(self.args),
            "scriptUrl": self.script_url,
            "scriptId": self.script_id,
            "functionName": self.function_name,
            "line": self.line,
            "column": self.column,
            "pageUrl": self.page_url,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "TraceEvent":
        wire = _WireEvent.model_validate(d)
        return wire.to_event()


class _WireEvent(BaseModel):
    """Validation model for one trace object as the tracing extension writes it."""

    model_config = ConfigDict(extra="ignore", populate_by_name=True)

    api: StrictStr
    args: List[StrictStr] = Field(default_factory=list)
    script_url: StrictStr = Field(alias="scriptUrl")
    script_id: StrictInt = Field(alias="scriptId", ge=0)
    function_name: StrictStr = Field(alias="functionName")
    line: StrictInt = Field(default=0, ge=0)
    column: StrictInt = Field(default=0, ge=0)
    page_url: StrictStr = Field(default="", alias="pageUrl")

    @field_validator("api")
    @classmethod
    def _dotted(cls, v: str) -> str:
        if "." not in v or not v.strip("."):
            raise ValueError("api must be a dotted identifier")
        return v

    def to_event(self) -> TraceEvent:
        return TraceEvent(
            api=self.api,
            args=tuple(self.args),
            script_url=self.script_url,
            script_id=self.script_id,
            function_name=self.function_name,
            line=self.line,
            column=self.column,
            page_url=self.page_url,
        )


_ALIASES = {
    "script_url": "scriptUrl",
    "script_id": "scriptId",
    "function_name": "functionName",
    "page_url": "pageUrl",
}


def _field_of(err: ValidationError) -> str:
    errors = err.errors()
    if not errors or not errors[0].get("loc"):
        return "<object>"
    name = str(errors[0]["loc"][0])
    return _ALIASES.get(name, name)


@dataclass
class TraceParseResult:
    events: List[TraceEvent]
    problems: List[SchemaError] = field(default_factory=list)

    @property
    def skipped(self) -> int:
        return len(self.problems)


def parse_traces(raw_json: str) -> TraceParseResult:
    """Parse one trace file. Bad objects are skipped and reported in ``problems``."""
    try:
        payload = json.loads(raw_json)
    except json.JSONDecodeError as e:
        logger.warning("Trace file is not valid JSON: %s", e)
        return TraceParseResult(events=[], problems=[SchemaError(-1, "<root>")])
    if not isinstance(payload, list):
        return TraceParseResult(events=[], problems=[SchemaError(-1, "<root>")])

    events: List[TraceEvent] = []
    problems: List[SchemaError] = []
    for i, obj in enumerate(payload):
        if not isinstance(obj, dict):
            problems.append(SchemaError(i, "<object>"))
            continue
        try:
            events.append(_WireEvent.model_validate(obj).to_event())
        except ValidationError as e:
            err = SchemaError(i, _field_of(e))
            logger.warning("Skipping trace object: %s", err)
            problems.append(err)
    return TraceParseResult(events=events, problems=problems)


def read_trace_file(path: str) -> TraceParseResult:
    with open(path, "r", encoding="utf-8") as f:
        return parse_traces(f.read())


def parse_trace_files(paths: Sequence[str], workers: int = 1) -> TraceParseResult:
    if workers > 1 and len(paths) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(read_trace_file, paths))
    else:
        parts = [read_trace_file(p) for p in paths]

    out = TraceParseResult(events=[])
    for p in parts:
        out.events.extend(p.events)
        out.problems.extend(p.problems)
    return out


def filter_events(events: Iterable[TraceEvent]) -> List[TraceEvent]:
    return [e for e in events if is_valid_script_url(e.script_url)]


@dataclass(frozen=True)
class FunctionTrace:
    key: FunctionKey
    events: Tuple[TraceEvent, ...]

    def apis(self) -> List[str]:
        return [e.api for e in self.events]


def group_by_function(events: Iterable[TraceEvent]) -> List[FunctionTrace]:
    groups: Dict[FunctionKey, List[TraceEvent]] = {}
    for e in events:
        groups.setdefault(e.key, []).append(e)
    return [FunctionTrace(key=k, events=tuple(v)) for k, v in groups.items()]
