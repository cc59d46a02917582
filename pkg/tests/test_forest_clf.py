from __future__ import annotations

import math
import os
import tempfile
import unittest

import numpy as np


def _xor(n: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    X = rng.random((n, 2))
    y = ((X[:, 0] > 0.5) ^ (X[:, 1] > 0.5)).astype(np.int64)
    return X, y


def _reference_impurity(pos: int, n: int, criterion: str) -> float:
    if n == 0:
        return 0.0
    p = pos / n
    if criterion == "Gini":
        return 1.0 - p * p - (1 - p) * (1 - p)
    return -sum(v * math.log2(v) for v in (p, 1 - p) if v > 0)


def _reference_split(X, y, criterion: str):
    """Every feature, every midpoint between adjacent distinct values; first minimum wins."""
    best = None
    n = len(y)
    for f in range(X.shape[1]):
        values = sorted(set(X[:, f].tolist()))
        for lo, hi in zip(values, values[1:]):
            thr = (lo + hi) / 2
            left = X[:, f] <= thr
            ln, lp = int(left.sum()), int(y[left].sum())
            rn, rp = n - ln, int(y.sum()) - lp
            cost = (ln * _reference_impurity(lp, ln, criterion) + rn * _reference_impurity(rp, rn, criterion)) / n
            if best is None or cost < best[2] - 1e-9:
                best = (f, thr, cost)
    return best


class TestImpurity(unittest.TestCase):
    def test_known_values(self) -> None:
        from core.forest_clf import Criterion, impurity

        np.testing.assert_allclose(impurity([0, 5, 2], [5, 5, 4], Criterion.ENTROPY), [0.0, 0.0, 1.0])
        np.testing.assert_allclose(impurity([0, 5, 2], [5, 5, 4], Criterion.GINI), [0.0, 0.0, 0.5])
        self.assertEqual(float(impurity([0], [0], Criterion.ENTROPY)[0]), 0.0)

    def test_split_feature_counts(self) -> None:
        from core.forest_clf import MaxFeatures, n_split_features

        self.assertEqual(n_split_features(100, MaxFeatures.SQRT), 10)
        self.assertEqual(n_split_features(100, MaxFeatures.LOG2), 6)
        self.assertEqual(n_split_features(1, MaxFeatures.LOG2), 1)
        self.assertEqual(n_split_features(7, MaxFeatures.ALL), 7)


class TestBestSplit(unittest.TestCase):
    def test_matches_exhaustive_search(self) -> None:
        from core.forest_clf import Criterion, best_split

        rng = np.random.default_rng(17)
        for trial in range(60):
            n = int(rng.integers(4, 30))
            X = rng.integers(0, 6, size=(n, 3)).astype(np.float64)
            y = rng.integers(0, 2, size=n)
            for criterion in (Criterion.ENTROPY, Criterion.GINI):
                with self.subTest(trial=trial, criterion=criterion.value):
                    got = best_split(X, y, [0, 1, 2], criterion)
                    want = _reference_split(X, y, criterion.value)
                    if want is None:
                        self.assertIsNone(got)
                        continue
                    self.assertEqual(got[:2], want[:2])
                    self.assertAlmostEqual(got[2], want[2], places=9)

    def test_constant_features_give_none(self) -> None:
        from core.forest_clf import Criterion, best_split

        X = np.ones((6, 2))
        self.assertIsNone(best_split(X, np.array([0, 1, 0, 1, 0, 1]), [0, 1], Criterion.ENTROPY))

    def test_perfect_split(self) -> None:
        from core.forest_clf import Criterion, best_split

        X = np.array([[1.0], [2.0], [3.0], [10.0], [11.0]])
        f, thr, cost = best_split(X, np.array([0, 0, 0, 1, 1]), [0], Criterion.ENTROPY)
        self.assertEqual((f, thr, cost), (0, 6.5, 0.0))


class TestRandomForest(unittest.TestCase):
    def test_learns_xor(self) -> None:
        from core.forest_clf import ForestConfig, MaxFeatures, RandomForest

        X, y = _xor(300)
        forest = RandomForest(ForestConfig(n_trees=25, max_features=MaxFeatures.ALL, seed=1)).fit(X, y)
        grid = np.array([[a, b] for a in (0.15, 0.35, 0.65, 0.85) for b in (0.15, 0.35, 0.65, 0.85)])
        truth = ((grid[:, 0] > 0.5) ^ (grid[:, 1] > 0.5)).astype(np.int64)
        predicted = (forest.predict_proba(grid) >= 0.5).astype(np.int64)
        self.assertGreaterEqual(float(np.mean(predicted == truth)), 0.9)
        self.assertTrue(all(t.depth <= 30 for t in forest.trees))

    def test_deterministic_and_thread_independent(self) -> None:
        from core.forest_clf import ForestConfig, RandomForest

        X, y = _xor(80, seed=3)
        a = RandomForest(ForestConfig(n_trees=8, seed=5)).fit(X, y)
        b = RandomForest(ForestConfig(n_trees=8, seed=5)).fit(X, y)
        c = RandomForest(ForestConfig(n_trees=8, seed=5, n_jobs=3)).fit(X, y)
        self.assertEqual(a.to_dict()["trees"], b.to_dict()["trees"])
        self.assertEqual(a.to_dict()["trees"], c.to_dict()["trees"])
        other = RandomForest(ForestConfig(n_trees=8, seed=6)).fit(X, y)
        self.assertNotEqual(a.to_dict()["trees"], other.to_dict()["trees"])

    def test_max_depth_respected(self) -> None:
        from core.forest_clf import ForestConfig, RandomForest

        X, y = _xor(200, seed=4)
        forest = RandomForest(ForestConfig(n_trees=5, max_depth=2)).fit(X, y)
        self.assertTrue(all(t.depth <= 2 for t in forest.trees))

    def test_save_and_load(self) -> None:
        from core.forest_clf import ForestConfig, RandomForest

        X, y = _xor(60, seed=2)
        forest = RandomForest(ForestConfig(n_trees=4, seed=9)).fit(X, y)
        with tempfile.TemporaryDirectory() as d:
            path = os.path.join(d, "forest.json")
            forest.save(path)
            loaded = RandomForest.load(path)
        self.assertEqual(loaded.config, forest.config)
        np.testing.assert_array_equal(loaded.predict_proba(X), forest.predict_proba(X))
        self.assertAlmostEqual(loaded.predict_one(X[0]), float(forest.predict_proba(X[:1])[0]))

    def test_errors(self) -> None:
        from core.errors import DimensionMismatch, EmptyDataset, SingleClass
        from core.forest_clf import ForestConfig, RandomForest

        cfg = ForestConfig(n_trees=2)
        with self.assertRaises(SingleClass):
            RandomForest(cfg).fit(np.zeros((4, 2)), [1, 1, 1, 1])
        with self.assertRaises(EmptyDataset):
            RandomForest(cfg).fit(np.zeros((0, 2)), [])
        with self.assertRaises(DimensionMismatch):
            RandomForest(cfg).fit(np.zeros((4, 2)), [0, 1, 0])
        with self.assertRaises(EmptyDataset):
            RandomForest(cfg).predict_proba(np.zeros((1, 2)))
        X, y = _xor(20)
        forest = RandomForest(cfg).fit(X, y)
        with self.assertRaises(DimensionMismatch):
            forest.predict_proba(np.zeros((1, 3)))
        with self.assertRaises(ValueError):
            RandomForest.from_dict({"format": "other"})
