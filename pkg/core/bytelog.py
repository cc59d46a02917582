"""core.bytelog

Parse the instrumented-V8 bytecode log into function records and map opcode
sequences to integer IDs.

Log layout, one record per function, records separated by blank lines:

    Script URL: https://example.com/fpjs.js
    Script ID: 3
    Function name: gatherFingerprint
    Bytecode:
    Parameter count 1
    Register count 4
    Frame size 32
    DefineNamedOwnProperty,LdaGlobal,Star,GetNamedProperty,
    ...
    Ldar,Return

Only opcode mnemonics are logged; operands and offsets never appear.
"""

from __future__ import annotations

import hashlib
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from core.errors import MalformedRecord

logger = logging.getLogger(__name__)

PAD_ID = 0
UNK_ID = 1
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"

FUNCTION_MAX_LEN = 512
SCRIPT_MAX_LEN = 4096

OPCODES_PER_LINE = 8

_URL = "Script URL:"
_SCRIPT_ID = "Script ID:"
_NAME = "Function name:"
_BYTECODE = "Bytecode:"
_PARAMS = "Parameter count"
_REGISTERS = "Register count"
_FRAME = "Frame size"

FunctionKey = Tuple[str, int, str]


@dataclass(frozen=True)
class FunctionRecord:
    script_url: str
    script_id: int
    function_name: str
    parameter_count: int
    register_count: int
    frame_size: int
    opcodes: Tuple[str, ...]
    # opcodes per physical line as found in the log; layout only
    line_widths: Tuple[int, ...] = field(default=(), compare=False, repr=False)

    @property
    def key(self) -> FunctionKey:
        return (self.script_url, self.script_id, self.function_name)

    @property
    def is_anonymous(self) -> bool:
        return not self.function_name.strip()

    def to_text(self) -> str:
        widths = self.line_widths
        if not widths or sum(widths) != len(self.opcodes):
            widths = _default_widths(len(self.opcodes))

        lines = [
            f"{_URL} {self.script_url}",
            f"{_SCRIPT_ID} {self.script_id}",
            f"{_NAME} {self.function_name}",
            f"{_BYTECODE} ",
            f"{_PARAMS} {self.parameter_count}",
            f"{_REGISTERS} {self.register_count}",
            f"{_FRAME} {self.frame_size}",
        ]
        start = 0
        for i, w in enumerate(widths):
            chunk = ",".join(self.opcodes[start : start + w])
            start += w
            lines.append(chunk + ("," if i < len(widths) - 1 else ""))
        return "\n".join(lines) + "\n"

    def to_dict(self) -> Dict[str, Any]:
        return {
            "scriptUrl": self.script_url,
            "scriptId": self.script_id,
            "functionName": self.function_name,
            "parameterCount": self.parameter_count,
            "registerCount": self.register_count,
            "frameSize": self.frame_size,
            "opcodes": list(self.opcodes),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "FunctionRecord":
        return cls(
            script_url=str(d["scriptUrl"]),
            script_id=int(d["scriptId"]),
            function_name=str(d.get("functionName") or ""),
            parameter_count=int(d.get("parameterCount", 0)),
            register_count=int(d.get("registerCount", 0)),
            frame_size=int(d.get("frameSize", 0)),
            opcodes=tuple(d["opcodes"]),
        )


def _default_widths(n: int) -> Tuple[int, ...]:
    full, rest = divmod(n, OPCODES_PER_LINE)
    return (OPCODES_PER_LINE,) * full + ((rest,) if rest else ())


def format_log(records: Iterable[FunctionRecord]) -> str:
    """Serialize records back to the log layout, one blank line between records."""
    return "\n".join(r.to_text() for r in records)


@dataclass
class ParseResult:
    records: List[FunctionRecord]
    problems: List[MalformedRecord]

    @property
    def malformed(self) -> int:
        return len(self.problems)


def _blocks(raw_text: str) -> List[Tuple[int, List[str]]]:
    """Group lines into records: split on blank lines and on each ``Script URL:``."""
    blocks: List[Tuple[int, List[str]]] = []
    cur: List[str] = []
    start = 0
    for line_no, line in enumerate(raw_text.splitlines(), start=1):
        s = line.rstrip()
        if not s.strip():
            if cur:
                blocks.append((start, cur))
                cur = []
            continue
        if s.startswith(_URL) and cur:
            blocks.append((start, cur))
            cur = []
        if not cur:
            start = line_no
        cur.append(s)
    if cur:
        blocks.append((start, cur))
    return blocks


def _header(lines: List[str], idx: int, prefix: str, first_line: int) -> str:
    if idx >= len(lines) or not lines[idx].startswith(prefix):
        raise MalformedRecord(first_line + idx, f"expected {prefix!r} header")
    return lines[idx][len(prefix) :].strip()


def _header_int(lines: List[str], idx: int, prefix: str, first_line: int) -> int:
    raw = _header(lines, idx, prefix, first_line)
    try:
        value = int(raw)
    except ValueError:
        raise MalformedRecord(first_line + idx, f"{prefix!r} is not an integer: {raw!r}")
    if value < 0:
        raise MalformedRecord(first_line + idx, f"{prefix!r} is negative")
    return value


def _parse_block(first_line: int, lines: List[str]) -> FunctionRecord:
    url = _header(lines, 0, _URL, first_line)
    script_id = _header_int(lines, 1, _SCRIPT_ID, first_line)
    name = _header(lines, 2, _NAME, first_line)
    _header(lines, 3, _BYTECODE, first_line)
    params = _header_int(lines, 4, _PARAMS, first_line)
    registers = _header_int(lines, 5, _REGISTERS, first_line)
    frame = _header_int(lines, 6, _FRAME, first_line)

    opcodes: List[str] = []
    widths: List[int] = []
    for offset, line in enumerate(lines[7:], start=7):
        parts = [p.strip() for p in line.split(",")]
        parts = [p for p in parts if p]
        for p in parts:
            if any(ch.isspace() for ch in p):
                raise MalformedRecord(first_line + offset, f"opcode contains whitespace: {p!r}")
        opcodes.extend(parts)
        widths.append(len(parts))
    if not opcodes:
        raise MalformedRecord(first_line + 6, "empty opcode list")

    return FunctionRecord(
        script_url=url,
        script_id=script_id,
        function_name=name,
        parameter_count=params,
        register_count=registers,
        frame_size=frame,
        opcodes=tuple(opcodes),
        line_widths=tuple(w for w in widths if w),
    )


def parse_log(raw_text: str) -> ParseResult:
    records: List[FunctionRecord] = []
    problems: List[MalformedRecord] = []
    for first_line, lines in _blocks(raw_text):
        try:
            records.append(_parse_block(first_line, lines))
        except MalformedRecord as e:
            logger.warning("Skipping malformed record: %s", e)
            problems.append(e)
    return ParseResult(records=records, problems=problems)


def read_log_file(path: str) -> ParseResult:
    with open(path, "r", encoding="utf-8") as f:
        return parse_log(f.read())


def parse_log_files(paths: Sequence[str], workers: int = 1) -> ParseResult:
    """Parse several log files; results are concatenated in ``paths`` order."""
    if workers > 1 and len(paths) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(read_log_file, paths))
    else:
        parts = [read_log_file(p) for p in paths]

    out = ParseResult(records=[], problems=[])
    for p in parts:
        out.records.extend(p.records)
        out.problems.extend(p.problems)
    return out


def list_files(directory: str, suffix: str) -> List[str]:
    names = sorted(n for n in os.listdir(directory) if n.endswith(suffix))
    return [os.path.join(directory, n) for n in names]


# ---------------------------------------------------------------------------
# Vocabulary
# ---------------------------------------------------------------------------


class Vocabulary:
    """Dense IDs for opcode mnemonics. ID 0 is PAD, ID 1 is UNK, real tokens start at 2."""

    pad_id = PAD_ID
    unk_id = UNK_ID

    def __init__(self, mnemonics: Iterable[str]):
        self._mnemonics: Tuple[str, ...] = tuple(mnemonics)
        self._id_of: Dict[str, int] = {}
        for i, m in enumerate(self._mnemonics):
            if m in self._id_of:
                raise ValueError(f"duplicate mnemonic {m!r}")
            self._id_of[m] = i + 2

    @property
    def mnemonics(self) -> Tuple[str, ...]:
        return self._mnemonics

    @property
    def id_of(self) -> Mapping[str, int]:
        return dict(self._id_of)

    @property
    def mnemonic_of(self) -> Mapping[int, str]:
        return {i: m for m, i in self._id_of.items()}

    def lookup(self, mnemonic: str) -> int:
        return self._id_of.get(mnemonic, UNK_ID)

    def token(self, token_id: int) -> str:
        if token_id == PAD_ID:
            return PAD_TOKEN
        if token_id == UNK_ID:
            return UNK_TOKEN
        return self._mnemonics[token_id - 2]

    def __len__(self) -> int:
        """Total ID space, reserved IDs included."""
        return len(self._mnemonics) + 2

    def __contains__(self, mnemonic: object) -> bool:
        return mnemonic in self._id_of

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Vocabulary) and other._mnemonics == self._mnemonics

    def __hash__(self) -> int:
        return hash(self._mnemonics)

    def to_text(self) -> str:
        return "".join(m + "\n" for m in self._mnemonics)

    @classmethod
    def from_text(cls, text: str) -> "Vocabulary":
        return cls(line.strip() for line in text.splitlines() if line.strip())

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.to_text())

    @classmethod
    def load(cls, path: str) -> "Vocabulary":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_text(f.read())


def build_vocabulary_from_sequences(sequences: Iterable[Sequence[str]]) -> Vocabulary:
    seen: Dict[str, None] = {}
    for seq in sequences:
        for m in seq:
            if m not in seen:
                seen[m] = None
    return Vocabulary(seen.keys())


def build_vocabulary(records: Iterable[FunctionRecord]) -> Vocabulary:
    return build_vocabulary_from_sequences(r.opcodes for r in records)


def tokenize_opcodes(
    opcodes: Sequence[str], vocab: Vocabulary, max_len: Optional[int]
) -> List[int]:
    if max_len is not None and max_len < 1:
        raise ValueError("max_len must be >= 1")
    seq = opcodes if max_len is None else opcodes[:max_len]
    return [vocab.lookup(m) for m in seq]


def tokenize(
    record: FunctionRecord, vocab: Vocabulary, max_len: int = FUNCTION_MAX_LEN
) -> List[int]:
    return tokenize_opcodes(record.opcodes, vocab, max_len)


def detokenize(token_ids: Sequence[int], vocab: Vocabulary) -> List[str]:
    return [vocab.token(i) for i in token_ids]
