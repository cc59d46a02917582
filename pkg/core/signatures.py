"""core.signatures

Pre-execution signature matching: a function is blocked when the FNV-1a 64-bit
hash of its comma-joined opcode mnemonics is in the signature list.

Signature file: one lowercase 16-hex-digit hash per line, optionally followed by
`` #<technique>[+<technique>...],<script url>``. Blank lines and lines starting
with ``#`` are ignored.
"""

from __future__ import annotations

import logging
import re
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from numba import njit

from core.bytelog import PAD_ID, UNK_ID, FunctionRecord, Vocabulary
from core.errors import EmptySequence
from core.labeler import sort_techniques
from core.opcodes import V8_OPCODES

logger = logging.getLogger(__name__)

_HASH_RE = re.compile(r"[0-9a-f]{16}")

_FNV64_OFFSET = np.uint64(0xCBF29CE484222325)
_FNV64_PRIME = np.uint64(0x100000001B3)


@njit(nogil=True)
def _fnv1a_64(data):
    h = _FNV64_OFFSET
    for i in range(data.shape[0]):
        h = h ^ np.uint64(data[i])
        h = h * _FNV64_PRIME
    return h


def fnv1a_64(data: bytes) -> int:
    return int(_fnv1a_64(np.frombuffer(data, dtype=np.uint8)))


def hash_sequence(opcodes: Sequence[str]) -> int:
    if not opcodes:
        raise EmptySequence("cannot hash an empty opcode sequence")
    return fnv1a_64(",".join(opcodes).encode("utf-8"))


def format_hash(h: int) -> str:
    return f"{h:016x}"


@dataclass(frozen=True)
class SignatureTag:
    techniques: Tuple[str, ...] = ()
    script_url: str = ""

    def comment(self) -> str:
        if not self.techniques and not self.script_url:
            return ""
        return f" #{'+'.join(self.techniques)},{self.script_url}"


@dataclass
class SignatureSet:
    entries: Dict[int, SignatureTag] = field(default_factory=dict)
    # opcode sequences seen while building, for collision detection
    preimages: Dict[int, Tuple[str, ...]] = field(default_factory=dict, repr=False)
    collisions: List[Tuple[int, Tuple[str, ...], Tuple[str, ...]]] = field(
        default_factory=list, repr=False
    )

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, h: object) -> bool:
        return h in self.entries

    def add(self, opcodes: Sequence[str], tag: SignatureTag = SignatureTag()) -> int:
        h = hash_sequence(opcodes)
        seq = tuple(opcodes)
        known = self.preimages.get(h)
        if known is not None and known != seq:
            logger.warning("Hash collision on %s between different sequences", format_hash(h))
            self.collisions.append((h, known, seq))
        if h not in self.entries:
            self.entries[h] = tag
            self.preimages[h] = seq
        return h

    def to_text(self) -> str:
        lines = (format_hash(h) + self.entries[h].comment() + "\n" for h in sorted(self.entries))
        return "".join(lines)

    @classmethod
    def from_text(cls, text: str) -> "SignatureSet":
        sigs = cls()
        for line_no, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            head, _, comment = line.partition("#")
            digits = head.strip()
            if not _HASH_RE.fullmatch(digits):
                raise ValueError(
                    f"line {line_no}: expected 16 lowercase hex digits, got {digits!r}"
                )
            h = int(digits, 16)
            techs, _, url = comment.partition(",")
            tag = SignatureTag(tuple(t for t in techs.strip().split("+") if t), url.strip())
            sigs.entries.setdefault(h, tag)
        return sigs

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.to_text())

    @classmethod
    def load(cls, path: str) -> "SignatureSet":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_text(f.read())


def build_signature_set(
    examples: Iterable[Any],
    vocab: Vocabulary,
    records: Optional[Sequence[FunctionRecord]] = None,
) -> SignatureSet:
    """Sign every FP example.

    The full opcode sequence is taken from ``records[ex.position]`` when that record
    carries the example's key, so two functions sharing a key are each signed with
    their own bytecode. Otherwise token IDs are mapped back through ``vocab``;
    sequences containing UNK cannot be recovered and are skipped.
    """
    sigs = SignatureSet()
    skipped = 0
    for ex in examples:
        if not ex.techniques:
            continue
        pos = getattr(ex, "position", -1)
        if records is not None and 0 <= pos < len(records) and records[pos].key == ex.key:
            opcodes = list(records[pos].opcodes)
        else:
            if any(i in (PAD_ID, UNK_ID) for i in ex.token_ids):
                skipped += 1
                continue
            opcodes = [vocab.token(i) for i in ex.token_ids]
        techs = tuple(t.value for t in sort_techniques(ex.techniques))
        sigs.add(opcodes, SignatureTag(techs, ex.script_url))
    if skipped:
        logger.warning("Skipped %d FP examples whose opcodes could not be recovered", skipped)
    return sigs


class Decision(str, Enum):
    BLOCK = "Block"
    ALLOW = "Allow"


def match_sequence(opcodes: Sequence[str], sigs: SignatureSet) -> Decision:
    return Decision.BLOCK if hash_sequence(opcodes) in sigs.entries else Decision.ALLOW


def match(record: FunctionRecord, sigs: SignatureSet) -> Decision:
    return match_sequence(record.opcodes, sigs)


# ---------------------------------------------------------------------------
# Benchmarks
# ---------------------------------------------------------------------------

PERCENTILES = (5, 25, 50, 75, 95)


@dataclass
class BenchReport:
    functions: int
    repetitions: int
    mean_ns: float
    percentiles_ns: Dict[str, float]
    throughput_per_s: float
    repetition_means_ns: List[float]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "functions": self.functions,
            "repetitions": self.repetitions,
            "meanNs": self.mean_ns,
            "percentilesNs": self.percentiles_ns,
            "throughputPerS": self.throughput_per_s,
            "repetitionMeansNs": self.repetition_means_ns,
        }


def bench_matcher(
    records: Sequence[FunctionRecord], sigs: SignatureSet, repetitions: int = 1
) -> BenchReport:
    """Time hash + lookup per function with a monotonic nanosecond clock."""
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    if records:
        match(records[0], sigs)  # compile before timing

    samples: List[int] = []
    rep_means: List[float] = []
    total_ns = 0
    for _ in range(repetitions):
        rep: List[int] = []
        for r in records:
            t0 = time.perf_counter_ns()
            match(r, sigs)
            rep.append(time.perf_counter_ns() - t0)
        samples.extend(rep)
        total_ns += sum(rep)
        rep_means.append(float(np.mean(rep)) if rep else 0.0)

    arr = np.asarray(samples, dtype=np.float64)
    pct = {f"p{p}": float(np.percentile(arr, p)) if arr.size else 0.0 for p in PERCENTILES}
    return BenchReport(
        functions=len(records),
        repetitions=repetitions,
        mean_ns=float(arr.mean()) if arr.size else 0.0,
        percentiles_ns=pct,
        throughput_per_s=(arr.size / (total_ns / 1e9)) if total_ns > 0 else 0.0,
        repetition_means_ns=rep_means,
    )


@dataclass
class ScalingReport:
    lengths: List[int]
    mean_ns: List[float]
    slope: float
    intercept: float
    r2: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            "lengths": self.lengths,
            "meanNs": self.mean_ns,
            "slopeNsPerOpcode": self.slope,
            "interceptNs": self.intercept,
            "r2": self.r2,
        }


def scaling_profile(
    lengths: Sequence[int],
    sigs: SignatureSet,
    repetitions: int = 50,
    rounds: int = 5,
    seed: int = 0,
) -> ScalingReport:
    """Mean match cost per opcode count, fitted with a least-squares line.

    Each length is timed ``rounds`` times over ``repetitions`` calls; the lowest
    round mean is kept.
    """
    if len(lengths) < 2:
        raise ValueError("need at least two lengths")
    rng = np.random.default_rng(seed)
    alphabet = np.array(V8_OPCODES)
    match_sequence(["Return"], sigs)

    means: List[float] = []
    for n in lengths:
        seq = list(alphabet[rng.integers(0, alphabet.size, size=int(n))])
        best = float("inf")
        for _ in range(rounds):
            t0 = time.perf_counter_ns()
            for _ in range(repetitions):
                match_sequence(seq, sigs)
            best = min(best, (time.perf_counter_ns() - t0) / repetitions)
        means.append(best)

    x = np.asarray(lengths, dtype=np.float64)
    yv = np.asarray(means, dtype=np.float64)
    slope, intercept = np.polyfit(x, yv, 1)
    resid = yv - (slope * x + intercept)
    ss_tot = float(np.sum((yv - yv.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 0.0
    return ScalingReport(
        lengths=[int(n) for n in lengths],
        mean_ns=means,
        slope=float(slope),
        intercept=float(intercept),
        r2=r2,
    )
