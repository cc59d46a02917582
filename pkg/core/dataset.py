"""core.dataset

From bytecode records and heuristic verdicts to train/test example sets.

Steps, in pipeline order:
  clean_records          drop invalid-URL and anonymous records
  join_labels            attach verdicts by (script URL, script ID, function name)
  dedupe                 one example per distinct token sequence, FP wins conflicts
  build_script_examples  concatenate member functions per script
  balance_and_split      stratified split, then undersample training negatives
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import (
    Any,
    Dict,
    FrozenSet,
    Iterable,
    List,
    Mapping,
    Optional,
    Sequence,
    Tuple,
    TypeVar,
    Union,
)

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from core.bytelog import (
    FUNCTION_MAX_LEN,
    SCRIPT_MAX_LEN,
    FunctionKey,
    FunctionRecord,
    Vocabulary,
    tokenize_opcodes,
)
from core.errors import DuplicateVerdictKey, InsufficientClass, SplitLeakage
from core.labeler import HeuristicVerdict, Technique, sort_techniques
from core.traces import is_valid_script_url, url_host
from utils.jsonl_helper import read_jsonl, to_jsonl

logger = logging.getLogger(__name__)


class Label(str, Enum):
    FP = "FP"
    NON_FP = "NonFP"

    @property
    def as_int(self) -> int:
        return 1 if self is Label.FP else 0


def _techniques_out(techniques: Iterable[Technique]) -> List[str]:
    return [t.value for t in sort_techniques(techniques)]


@dataclass(frozen=True)
class LabeledExample:
    domain: str
    script_url: str
    script_id: int
    function_name: str
    token_ids: Tuple[int, ...]
    label: Label
    techniques: FrozenSet[Technique] = frozenset()
    # index of the source record in log order
    position: int = field(default=-1, compare=False)

    @property
    def key(self) -> FunctionKey:
        return (self.script_url, self.script_id, self.function_name)

    @property
    def script_key(self) -> Tuple[str, int]:
        return (self.script_url, self.script_id)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "domain": self.domain,
            "scriptUrl": self.script_url,
            "scriptId": self.script_id,
            "functionName": self.function_name,
            "tokenIds": list(self.token_ids),
            "label": self.label.value,
            "techniques": _techniques_out(self.techniques),
            "position": self.position,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "LabeledExample":
        return cls(
            domain=str(d.get("domain") or ""),
            script_url=str(d["scriptUrl"]),
            script_id=int(d["scriptId"]),
            function_name=str(d["functionName"]),
            token_ids=tuple(int(i) for i in d["tokenIds"]),
            label=Label(d["label"]),
            techniques=frozenset(Technique(t) for t in d.get("techniques") or []),
            position=int(d.get("position", -1)),
        )


@dataclass(frozen=True)
class ScriptExample:
    domain: str
    script_url: str
    script_id: int
    token_ids: Tuple[int, ...]
    label: Label
    techniques: FrozenSet[Technique] = frozenset()

    def to_dict(self) -> Dict[str, Any]:
        return {
            "domain": self.domain,
            "scriptUrl": self.script_url,
            "scriptId": self.script_id,
            "tokenIds": list(self.token_ids),
            "label": self.label.value,
            "techniques": _techniques_out(self.techniques),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ScriptExample":
        return cls(
            domain=str(d.get("domain") or ""),
            script_url=str(d["scriptUrl"]),
            script_id=int(d["scriptId"]),
            token_ids=tuple(int(i) for i in d["tokenIds"]),
            label=Label(d["label"]),
            techniques=frozenset(Technique(t) for t in d.get("techniques") or []),
        )


Example = Union[LabeledExample, ScriptExample]
E = TypeVar("E", LabeledExample, ScriptExample)


class SplitSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    train_fraction: float = Field(default=0.9, gt=0.0, lt=1.0)
    seed: int = 0
    neg_to_pos_ratio: int = Field(default=20, ge=1)
    # training positives are repeated this many times before negatives are sampled
    positive_copies: int = Field(default=1, ge=1)


# ---------------------------------------------------------------------------
# Cleaning and joining
# ---------------------------------------------------------------------------


@dataclass
class CleaningReport:
    kept: List[Tuple[int, FunctionRecord]]
    input_count: int
    dropped_invalid_url: int = 0
    dropped_anonymous: int = 0

    def to_dict(self) -> Dict[str, int]:
        return {
            "input": self.input_count,
            "droppedInvalidUrl": self.dropped_invalid_url,
            "droppedAnonymous": self.dropped_anonymous,
            "kept": len(self.kept),
        }


def clean_records(records: Sequence[FunctionRecord]) -> CleaningReport:
    """Keep records with a valid script URL and a named function, with their log positions."""
    report = CleaningReport(kept=[], input_count=len(records))
    for pos, r in enumerate(records):
        if not is_valid_script_url(r.script_url):
            report.dropped_invalid_url += 1
        elif r.is_anonymous:
            report.dropped_anonymous += 1
        else:
            report.kept.append((pos, r))
    return report


def index_verdicts(verdicts: Iterable[HeuristicVerdict]) -> Dict[FunctionKey, HeuristicVerdict]:
    by_key: Dict[FunctionKey, HeuristicVerdict] = {}
    for v in verdicts:
        if v.key in by_key:
            raise DuplicateVerdictKey(v.key)
        by_key[v.key] = v
    return by_key


def join_labels(
    records: Sequence[FunctionRecord],
    verdicts: Iterable[HeuristicVerdict],
    vocab: Vocabulary,
    max_len: int = FUNCTION_MAX_LEN,
) -> List[LabeledExample]:
    """Label every clean record; records without a verdict are NonFP."""
    by_key = index_verdicts(verdicts)
    out: List[LabeledExample] = []
    for pos, r in clean_records(records).kept:
        v = by_key.get(r.key)
        techniques = v.techniques if v is not None else frozenset()
        out.append(
            LabeledExample(
                domain=url_host(r.script_url),
                script_url=r.script_url,
                script_id=r.script_id,
                function_name=r.function_name,
                token_ids=tuple(tokenize_opcodes(r.opcodes, vocab, max_len)),
                label=Label.FP if techniques else Label.NON_FP,
                techniques=techniques,
                position=pos,
            )
        )
    return out


# ---------------------------------------------------------------------------
# Deduplication
# ---------------------------------------------------------------------------


@dataclass
class DedupeResult:
    examples: List[Any]
    conflicts: int = 0
    input_count: int = 0

    @property
    def removed(self) -> int:
        return self.input_count - len(self.examples)


def dedupe(examples: Sequence[E]) -> DedupeResult:
    """First occurrence of each token sequence survives.

    An FP duplicate replaces an earlier NonFP one in place. A sequence seen with both
    labels counts as one conflict however many duplicates it has.
    """
    kept: List[E] = []
    slot: Dict[Tuple[int, ...], int] = {}
    conflicted: set = set()
    for ex in examples:
        i = slot.get(ex.token_ids)
        if i is None:
            slot[ex.token_ids] = len(kept)
            kept.append(ex)
            continue
        if kept[i].label is not ex.label:
            conflicted.add(ex.token_ids)
            if ex.label is Label.FP:
                kept[i] = ex
    conflicts = len(conflicted)
    if conflicts:
        logger.warning("Dedupe resolved %d label conflicts in favour of FP", conflicts)
    return DedupeResult(examples=kept, conflicts=conflicts, input_count=len(examples))


def merge_examples(*example_sets: Sequence[E]) -> DedupeResult:
    merged: List[E] = []
    for s in example_sets:
        merged.extend(s)
    return dedupe(merged)


# ---------------------------------------------------------------------------
# Script-level aggregation
# ---------------------------------------------------------------------------


def build_script_examples(
    examples: Sequence[LabeledExample],
    vocab: Vocabulary,
    records: Optional[Sequence[FunctionRecord]] = None,
    max_len: int = SCRIPT_MAX_LEN,
) -> DedupeResult:
    """Concatenate member functions per (script URL, script ID) in log order.

    With ``records`` given, each member contributes the full opcode sequence of its
    source record; otherwise its (possibly truncated) token IDs. The concatenation is
    truncated to ``max_len`` and scripts are deduplicated on the result.
    """
    groups: Dict[Tuple[str, int], List[LabeledExample]] = {}
    for ex in sorted(examples, key=lambda e: e.position):
        groups.setdefault(ex.script_key, []).append(ex)

    scripts: List[ScriptExample] = []
    for (url, sid), members in groups.items():
        tokens: List[int] = []
        for m in members:
            if records is not None and 0 <= m.position < len(records):
                tokens.extend(tokenize_opcodes(records[m.position].opcodes, vocab, None))
            else:
                tokens.extend(m.token_ids)
            if len(tokens) >= max_len:
                break
        techniques: FrozenSet[Technique] = frozenset().union(*(m.techniques for m in members))
        scripts.append(
            ScriptExample(
                domain=members[0].domain,
                script_url=url,
                script_id=sid,
                token_ids=tuple(tokens[:max_len]),
                label=Label.FP if any(m.label is Label.FP for m in members) else Label.NON_FP,
                techniques=techniques,
            )
        )
    return dedupe(scripts)


# ---------------------------------------------------------------------------
# Balancing and splitting
# ---------------------------------------------------------------------------


@dataclass
class SplitResult:
    train: List[Any]
    test: List[Any]
    diagnostics: Dict[str, Any] = field(default_factory=dict)


def _train_count(n: int, fraction: float) -> int:
    k = int(math.floor(fraction * n + 0.5))
    if n >= 2:
        k = min(max(k, 1), n - 1)
    return k


def balance_and_split(examples: Sequence[E], spec: SplitSpec) -> SplitResult:
    """Stratified split first; only the training side is undersampled."""
    by_label: Dict[Label, List[int]] = {Label.FP: [], Label.NON_FP: []}
    for i, ex in enumerate(examples):
        by_label[ex.label].append(i)
    for lbl in (Label.FP, Label.NON_FP):
        if not by_label[lbl]:
            raise InsufficientClass(lbl.value)

    rng = np.random.default_rng(spec.seed)
    train_idx: Dict[Label, List[int]] = {}
    test_idx: List[int] = []
    for lbl in (Label.FP, Label.NON_FP):
        members = by_label[lbl]
        perm = rng.permutation(len(members))
        k = _train_count(len(members), spec.train_fraction)
        train_idx[lbl] = sorted(members[j] for j in perm[:k])
        test_idx.extend(members[j] for j in perm[k:])

    positives = [i for i in train_idx[Label.FP] for _ in range(spec.positive_copies)]
    negatives = train_idx[Label.NON_FP]
    wanted = spec.neg_to_pos_ratio * len(positives)
    capped = wanted > len(negatives)
    if wanted >= len(negatives):
        if capped:
            logger.warning(
                "Only %d training negatives available for ratio %d (wanted %d); keeping all",
                len(negatives),
                spec.neg_to_pos_ratio,
                wanted,
            )
        sampled = negatives
    else:
        pick = rng.choice(len(negatives), size=wanted, replace=False)
        sampled = sorted(negatives[j] for j in pick)

    train = [examples[i] for i in sorted(positives + sampled)]
    test = [examples[i] for i in sorted(test_idx)]

    train_seqs = {ex.token_ids for ex in train}
    leaked = sum(1 for ex in test if ex.token_ids in train_seqs)
    if leaked:
        raise SplitLeakage(leaked)

    diagnostics = {
        "trainFp": len(positives),
        "trainNonFp": len(sampled),
        "testFp": sum(1 for ex in test if ex.label is Label.FP),
        "testNonFp": sum(1 for ex in test if ex.label is Label.NON_FP),
        "negativesCapped": capped,
    }
    return SplitResult(train=train, test=test, diagnostics=diagnostics)


# ---------------------------------------------------------------------------
# Summaries and persistence
# ---------------------------------------------------------------------------


def summarize(examples: Iterable[Example]) -> Dict[str, int]:
    fp = non_fp = 0
    scripts_fp: set = set()
    scripts_all: set = set()
    for ex in examples:
        sk = (ex.script_url, ex.script_id)
        scripts_all.add(sk)
        if ex.label is Label.FP:
            fp += 1
            scripts_fp.add(sk)
        else:
            non_fp += 1
    return {
        "fp": fp,
        "nonFp": non_fp,
        "scripts": len(scripts_all),
        "fpScripts": len(scripts_fp),
    }


def labels_of(examples: Iterable[Example]) -> np.ndarray:
    return np.array([ex.label.as_int for ex in examples], dtype=np.int64)


def save_examples(path: str, examples: Iterable[Example]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(to_jsonl(ex.to_dict() for ex in examples))


def load_examples(path: str) -> List[LabeledExample]:
    return [LabeledExample.from_dict(d) for d in read_jsonl(path)]


def load_script_examples(path: str) -> List[ScriptExample]:
    return [ScriptExample.from_dict(d) for d in read_jsonl(path)]


def load_verdicts(path: str) -> List[HeuristicVerdict]:
    return [HeuristicVerdict.from_dict(d) for d in read_jsonl(path)]
