"""core.artifacts

Write pipeline artifacts under one output directory.

Every write goes to a temporary file first and is moved into place with
os.replace, so a crashed run never leaves a half-written artifact behind.
Each subcommand also records a run summary (``<command>.summary.json``) with
the sha256 of every input it read.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional

from utils.jsonl_helper import to_jsonl


def file_digest(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunSummary:
    command: str
    seed: int
    inputs: Dict[str, str] = field(default_factory=dict)
    outputs: List[str] = field(default_factory=list)
    counts: Dict[str, Any] = field(default_factory=dict)
    wall_time_s: Optional[float] = None

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "RunSummary":
        return cls(
            command=d.get("command", ""),
            seed=int(d.get("seed", 0)),
            inputs=dict(d.get("inputs") or {}),
            outputs=list(d.get("outputs") or []),
            counts=dict(d.get("counts") or {}),
            wall_time_s=d.get("wall_time_s"),
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "command": self.command,
            "seed": self.seed,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "counts": self.counts,
            "wall_time_s": self.wall_time_s,
        }

    def add_input(self, path: str) -> None:
        self.inputs[os.path.normpath(path)] = file_digest(path)


class ArtifactStore:
    def __init__(self, output_dir: str):
        self.output_dir = output_dir

    def path(self, name: str) -> str:
        return os.path.join(self.output_dir, name)

    def exists(self, name: str) -> bool:
        return os.path.exists(self.path(name))

    def write_text(self, name: str, text: str) -> str:
        target = self.path(name)
        os.makedirs(os.path.dirname(target) or ".", exist_ok=True)
        tmp = target + ".tmp"
        with open(tmp, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        os.replace(tmp, target)
        return target

    def write_json(self, name: str, obj: Any) -> str:
        text = json.dumps(obj, ensure_ascii=False, sort_keys=True, indent=2)
        return self.write_text(name, text + "\n")

    def write_jsonl(self, name: str, rows: Iterable[Dict[str, Any]]) -> str:
        return self.write_text(name, to_jsonl(rows))

    def staging_path(self, name: str) -> str:
        """Temporary path for writers that need a filename; finish with ``commit``."""
        target = self.path(name)
        os.makedirs(os.path.dirname(target) or ".", exist_ok=True)
        return target + ".tmp"

    def commit(self, name: str) -> str:
        target = self.path(name)
        os.replace(target + ".tmp", target)
        return target

    def remove(self, name: str) -> bool:
        """Delete an artifact left by an earlier run; False if there was none."""
        target = self.path(name)
        if not os.path.isfile(target):
            return False
        os.remove(target)
        return True

    def read_json(self, name: str) -> Any:
        with open(self.path(name), "r", encoding="utf-8") as f:
            return json.load(f)

    def write_summary(self, summary: RunSummary) -> str:
        return self.write_json(f"{summary.command}.summary.json", summary.to_dict())

    def load_summary(self, command: str) -> RunSummary:
        return RunSummary.from_dict(self.read_json(f"{command}.summary.json"))
