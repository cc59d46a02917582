"""core.forest_clf

Random forest over averaged embedding vectors.

Trees are stored flat: node i is (feature, threshold, left, right, value) where
feature == -1 marks a leaf and value is the fraction of class-1 samples that
reached the node. A sample goes left when x[feature] <= threshold.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from core.errors import DimensionMismatch, EmptyDataset, SingleClass

logger = logging.getLogger(__name__)

FOREST_FORMAT = "fpguard-forest"
FOREST_VERSION = 1

_TIE_EPS = 1e-12


class Criterion(str, Enum):
    ENTROPY = "Entropy"
    GINI = "Gini"


class MaxFeatures(str, Enum):
    SQRT = "Sqrt"
    LOG2 = "Log2"
    ALL = "All"


class ForestConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    n_trees: int = Field(default=200, ge=1)
    max_depth: int = Field(default=30, ge=1)
    criterion: Criterion = Criterion.ENTROPY
    max_features: MaxFeatures = MaxFeatures.SQRT
    min_samples_split: int = Field(default=5, ge=2)
    bootstrap: bool = True
    seed: int = 0
    n_jobs: int = Field(default=1, ge=1)


def impurity(pos: np.ndarray, n: np.ndarray, criterion: Criterion) -> np.ndarray:
    """Node impurity from class-1 counts ``pos`` out of ``n`` samples; exactly 0 on pure nodes."""
    pos = np.asarray(pos, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    p = np.divide(pos, n, out=np.zeros_like(pos), where=n > 0)
    q = 1.0 - p
    if criterion is Criterion.GINI:
        return 1.0 - p * p - q * q
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -(np.where(p > 0, p * np.log2(p), 0.0) + np.where(q > 0, q * np.log2(q), 0.0))
    return np.where((p == 0) | (p == 1), 0.0, h)


def n_split_features(n_features: int, mode: MaxFeatures) -> int:
    if mode is MaxFeatures.SQRT:
        return max(1, int(math.sqrt(n_features)))
    if mode is MaxFeatures.LOG2:
        return max(1, int(math.log2(n_features))) if n_features > 1 else 1
    return n_features


def best_split(
    X: np.ndarray,
    y: np.ndarray,
    features: Sequence[int],
    criterion: Criterion,
) -> Optional[Tuple[int, float, float]]:
    """Lowest weighted child impurity over midpoint thresholds.

    Ties go to the lower feature index, then the lower threshold. Returns
    (feature, threshold, cost) or None when every candidate feature is constant.
    """
    n = y.size
    total_pos = float(y.sum())
    best: Optional[Tuple[int, float, float]] = None
    for f in sorted(features):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        ys = y[order]
        valid = np.nonzero(xs[:-1] < xs[1:])[0]
        if valid.size == 0:
            continue
        left_pos = np.cumsum(ys)[valid].astype(np.float64)
        left_n = (valid + 1).astype(np.float64)
        right_pos = total_pos - left_pos
        right_n = n - left_n
        left_cost = left_n * impurity(left_pos, left_n, criterion)
        cost = (left_cost + right_n * impurity(right_pos, right_n, criterion)) / n
        j = int(np.nonzero(cost <= cost.min() + _TIE_EPS)[0][0])
        lo, hi = xs[valid[j]], xs[valid[j] + 1]
        thr = (lo + hi) / 2.0
        if not lo <= thr < hi:
            thr = lo
        if best is None or cost[j] < best[2] - _TIE_EPS:
            best = (f, float(thr), float(cost[j]))
    return best


class DecisionTree:
    def __init__(self, nodes: Optional[List[List[float]]] = None):
        self.nodes: List[List[float]] = nodes or []

    @property
    def depth(self) -> int:
        def walk(i: int) -> int:
            f, _, left, right, _ = self.nodes[i]
            if int(f) < 0:
                return 0
            return 1 + max(walk(int(left)), walk(int(right)))

        return walk(0) if self.nodes else 0

    def fit(
        self,
        X: np.ndarray,
        y: np.ndarray,
        cfg: ForestConfig,
        rng: np.random.Generator,
    ) -> "DecisionTree":
        n_features = X.shape[1]
        k = n_split_features(n_features, cfg.max_features)
        self.nodes = []

        def grow(idx: np.ndarray, depth: int) -> int:
            node_id = len(self.nodes)
            yy = y[idx]
            value = float(yy.mean())
            self.nodes.append([-1, 0.0, -1, -1, value])
            if depth >= cfg.max_depth or idx.size < cfg.min_samples_split or value in (0.0, 1.0):
                return node_id
            if k >= n_features:
                features = list(range(n_features))
            else:
                features = sorted(int(f) for f in rng.choice(n_features, size=k, replace=False))
            split = best_split(X[idx], yy, features, cfg.criterion)
            if split is None:
                return node_id
            f, thr, _ = split
            go_left = X[idx, f] <= thr
            left = grow(idx[go_left], depth + 1)
            right = grow(idx[~go_left], depth + 1)
            self.nodes[node_id] = [f, thr, left, right, value]
            return node_id

        grow(np.arange(y.size), 0)
        return self

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        nodes = np.asarray(self.nodes, dtype=np.float64)
        feature = nodes[:, 0].astype(np.int64)
        threshold = nodes[:, 1]
        left = nodes[:, 2].astype(np.int64)
        right = nodes[:, 3].astype(np.int64)
        at = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            inner = feature[at] >= 0
            if not inner.any():
                break
            rows = np.nonzero(inner)[0]
            cur = at[rows]
            go_left = X[rows, feature[cur]] <= threshold[cur]
            at[rows] = np.where(go_left, left[cur], right[cur])
        return nodes[at, 4]


def _check_xy(X: np.ndarray, y: np.ndarray) -> None:
    if X.ndim != 2 or X.shape[0] == 0:
        raise EmptyDataset("feature matrix is empty")
    if y.shape != (X.shape[0],):
        raise DimensionMismatch(X.shape[0], int(y.size))
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    if np.unique(y).size < 2:
        raise SingleClass("training labels contain a single class")
    if not np.all(np.isfinite(X)):
        raise ValueError("feature matrix contains non-finite values")


@dataclass
class RandomForest:
    config: ForestConfig
    n_features: int = 0
    trees: Optional[List[DecisionTree]] = None

    def fit(self, X: Any, y: Any) -> "RandomForest":
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        _check_xy(X, y)
        cfg = self.config
        self.n_features = X.shape[1]
        seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.n_trees)

        def fit_one(seq: np.random.SeedSequence) -> DecisionTree:
            rng = np.random.default_rng(seq)
            if cfg.bootstrap:
                pick = rng.integers(0, X.shape[0], size=X.shape[0])
                return DecisionTree().fit(X[pick], y[pick], cfg, rng)
            return DecisionTree().fit(X, y, cfg, rng)

        if cfg.n_jobs > 1:
            with ThreadPoolExecutor(max_workers=cfg.n_jobs) as pool:
                self.trees = list(pool.map(fit_one, seeds))
        else:
            self.trees = [fit_one(s) for s in seeds]
        logger.info("Fitted %d trees on %d samples x %d features", len(self.trees), *X.shape)
        return self

    def predict_proba(self, X: Any) -> np.ndarray:
        if not self.trees:
            raise EmptyDataset("forest has not been fitted")
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise DimensionMismatch(self.n_features, X.shape[1])
        return np.mean([t.predict_proba(X) for t in self.trees], axis=0)

    def predict_one(self, x: Sequence[float]) -> float:
        return float(self.predict_proba(np.asarray(x, dtype=np.float64))[0])

    def to_dict(self) -> Dict[str, Any]:
        return {
            "format": FOREST_FORMAT,
            "version": FOREST_VERSION,
            "config": self.config.model_dump(mode="json"),
            "nFeatures": self.n_features,
            "trees": [t.nodes for t in (self.trees or [])],
        }

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "RandomForest":
        if d.get("format") != FOREST_FORMAT or d.get("version") != FOREST_VERSION:
            raise ValueError("not a forest file")
        trees = [
            DecisionTree(
                [[int(n[0]), float(n[1]), int(n[2]), int(n[3]), float(n[4])] for n in nodes]
            )
            for nodes in d["trees"]
        ]
        return cls(config=ForestConfig(**d["config"]), n_features=int(d["nFeatures"]), trees=trees)

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, sort_keys=True, separators=(",", ":"))
            f.write("\n")

    @classmethod
    def load(cls, path: str) -> "RandomForest":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_dict(json.load(f))
