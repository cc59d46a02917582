"""core.metrics

Binary classification metrics with FP (fingerprinting) as the positive class.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np

from core.errors import EmptyDataset, LengthMismatch, NoPositives, SingleClass


@dataclass(frozen=True)
class Confusion:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.n if self.n else 0.0

    @property
    def precision_undefined(self) -> bool:
        return self.tp + self.fp == 0

    @property
    def recall_undefined(self) -> bool:
        return self.tp + self.fn == 0

    @property
    def precision(self) -> float:
        return 0.0 if self.precision_undefined else self.tp / (self.tp + self.fp)

    @property
    def recall(self) -> float:
        return 0.0 if self.recall_undefined else self.tp / (self.tp + self.fn)


def _as_labels(labels: Sequence[int]) -> np.ndarray:
    y = np.asarray(labels, dtype=np.int64)
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    return y


def _pair(labels: Sequence[int], values: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    if len(labels) != len(values):
        raise LengthMismatch(len(labels), len(values))
    if len(labels) == 0:
        raise EmptyDataset("no labels to evaluate")
    return _as_labels(labels), np.asarray(values, dtype=np.float64)


def confusion(labels: Sequence[int], predictions: Sequence[int]) -> Confusion:
    y, p = _pair(labels, predictions)
    p = p.astype(np.int64)
    return Confusion(
        tp=int(np.sum((y == 1) & (p == 1))),
        fp=int(np.sum((y == 0) & (p == 1))),
        tn=int(np.sum((y == 0) & (p == 0))),
        fn=int(np.sum((y == 1) & (p == 0))),
    )


def roc_auc(labels: Sequence[int], scores: Sequence[float]) -> float:
    """Mann-Whitney AUC: P(random positive outscores random negative), ties count 1/2."""
    y, s = _pair(labels, scores)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("ROC AUC needs both classes")

    order = np.argsort(s, kind="stable")
    sorted_s = s[order]
    ranks = np.empty(y.size, dtype=np.float64)
    i = 0
    while i < y.size:
        j = i
        while j + 1 < y.size and sorted_s[j + 1] == sorted_s[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    rank_sum = float(ranks[y == 1].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def pr_auc(labels: Sequence[int], scores: Sequence[float]) -> float:
    """Average precision over distinct score thresholds, highest first."""
    y, s = _pair(labels, scores)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise NoPositives("PR AUC needs at least one positive")

    order = np.argsort(-s, kind="stable")
    sorted_s = s[order]
    sorted_y = y[order]
    tp_cum = np.cumsum(sorted_y)
    # last index of each run of equal scores
    ends = np.nonzero(np.append(sorted_s[1:] != sorted_s[:-1], True))[0]
    tp = tp_cum[ends].astype(np.float64)
    predicted = (ends + 1).astype(np.float64)
    precision = tp / predicted
    recall = tp / n_pos
    prev = np.concatenate([[0.0], recall[:-1]])
    return float(np.sum((recall - prev) * precision))


@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    precision: float
    recall: float
    roc_auc: float
    pr_auc: float
    tp: int
    fp: int
    tn: int
    fn: int
    threshold: float = 0.5
    precision_undefined: bool = False
    recall_undefined: bool = False
    roc_auc_undefined: bool = False
    pr_auc_undefined: bool = False

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def evaluate(labels: Sequence[int], scores: Sequence[float], threshold: float = 0.5) -> EvalReport:
    y, s = _pair(labels, scores)
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must be in [0, 1]")
    c = confusion(y, (s >= threshold).astype(np.int64))

    try:
        roc, roc_undefined = roc_auc(y, s), False
    except SingleClass:
        roc, roc_undefined = 0.0, True
    try:
        pr, pr_undefined = pr_auc(y, s), False
    except NoPositives:
        pr, pr_undefined = 0.0, True

    return EvalReport(
        accuracy=c.accuracy,
        precision=c.precision,
        recall=c.recall,
        roc_auc=roc,
        pr_auc=pr,
        tp=c.tp,
        fp=c.fp,
        tn=c.tn,
        fn=c.fn,
        threshold=threshold,
        precision_undefined=c.precision_undefined,
        recall_undefined=c.recall_undefined,
        roc_auc_undefined=roc_undefined,
        pr_auc_undefined=pr_undefined,
    )


TABLE_COLUMNS = (
    "Classifier",
    "Embed. Model",
    "Acc. (%)",
    "Prec. (%)",
    "Recall (%)",
    "ROC AUC (%)",
    "PR AUC (%)",
)


def format_table(rows: Sequence[Tuple[str, str, EvalReport]]) -> str:
    """Aligned plain-text table, one row per (classifier, embedding, report)."""
    body: List[Tuple[str, ...]] = []
    for clf, emb, r in rows:
        body.append(
            (
                clf,
                emb,
                f"{100 * r.accuracy:.1f}",
                f"{100 * r.precision:.1f}",
                f"{100 * r.recall:.1f}",
                f"{100 * r.roc_auc:.1f}",
                f"{100 * r.pr_auc:.1f}",
            )
        )
    widths = [max([len(h)] + [len(row[i]) for row in body]) for i, h in enumerate(TABLE_COLUMNS)]

    def line(cells: Sequence[str]) -> str:
        # names left-aligned, numbers right-aligned
        parts = [c.ljust(w) if i < 2 else c.rjust(w) for i, (c, w) in enumerate(zip(cells, widths))]
        return " | ".join(parts).rstrip()

    out = [line(TABLE_COLUMNS), "-+-".join("-" * w for w in widths)]
    out.extend(line(row) for row in body)
    return "\n".join(out) + "\n"
