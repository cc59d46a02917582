from __future__ import annotations

import json
from typing import Any, Dict, Iterable, Iterator, List


def dumps_line(obj: Dict[str, Any]) -> str:
    """One JSON object per line, stable key order, no trailing newline."""
    return json.dumps(obj, ensure_ascii=False, sort_keys=True, separators=(",", ":"))


def to_jsonl(objs: Iterable[Dict[str, Any]]) -> str:
    return "".join(dumps_line(o) + "\n" for o in objs)


def iter_jsonl(text: str) -> Iterator[Dict[str, Any]]:
    for line_no, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if not s:
            continue
        obj = json.loads(s)
        if not isinstance(obj, dict):
            raise ValueError(f"line {line_no}: expected a JSON object")
        yield obj


def read_jsonl(path: str) -> List[Dict[str, Any]]:
    with open(path, "r", encoding="utf-8") as f:
        return list(iter_jsonl(f.read()))
