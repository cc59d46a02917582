from __future__ import annotations

import unittest

import numpy as np


def _pairwise_auc(y, s) -> float:
    pos = [v for v, t in zip(s, y) if t == 1]
    neg = [v for v, t in zip(s, y) if t == 0]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


class TestConfusion(unittest.TestCase):
    def test_counts_and_rates(self) -> None:
        from core.metrics import confusion

        labels = [1, 1, 1, 1, 0, 0, 0, 0, 0, 0]
        preds = [1, 1, 1, 0, 1, 0, 0, 0, 0, 0]
        c = confusion(labels, preds)
        self.assertEqual((c.tp, c.fp, c.tn, c.fn), (3, 1, 5, 1))
        self.assertAlmostEqual(c.precision, 0.75)
        self.assertAlmostEqual(c.recall, 0.75)
        self.assertAlmostEqual(c.accuracy, 0.8)

    def test_undefined_precision(self) -> None:
        from core.metrics import confusion

        c = confusion([1, 0], [0, 0])
        self.assertTrue(c.precision_undefined)
        self.assertEqual(c.precision, 0.0)
        self.assertFalse(c.recall_undefined)

    def test_length_mismatch(self) -> None:
        from core.errors import LengthMismatch
        from core.metrics import confusion

        with self.assertRaises(LengthMismatch):
            confusion([1, 0, 1], [1, 0])


class TestRocAuc(unittest.TestCase):
    def test_small_example(self) -> None:
        from core.metrics import roc_auc

        self.assertAlmostEqual(roc_auc([1, 0, 1, 0], [0.9, 0.8, 0.7, 0.1]), 0.75)

    def test_matches_pairwise_definition(self) -> None:
        from core.metrics import roc_auc

        rng = np.random.default_rng(21)
        for _ in range(100):
            n = int(rng.integers(2, 40))
            y = rng.integers(0, 2, size=n)
            if y.min() == y.max():
                y[0] = 1 - y[0]
            s = rng.integers(0, 6, size=n) / 5.0
            self.assertAlmostEqual(roc_auc(y, s), _pairwise_auc(y.tolist(), s.tolist()), places=12)

    def test_perfect_and_inverted(self) -> None:
        from core.metrics import roc_auc

        self.assertEqual(roc_auc([0, 0, 1, 1], [0.1, 0.2, 0.8, 0.9]), 1.0)
        self.assertEqual(roc_auc([1, 1, 0, 0], [0.1, 0.2, 0.8, 0.9]), 0.0)
        self.assertEqual(roc_auc([1, 0], [0.5, 0.5]), 0.5)

    def test_single_class(self) -> None:
        from core.errors import SingleClass
        from core.metrics import roc_auc

        with self.assertRaises(SingleClass):
            roc_auc([0, 0, 0], [0.1, 0.2, 0.3])


class TestPrAuc(unittest.TestCase):
    def test_average_precision(self) -> None:
        from core.metrics import pr_auc

        self.assertAlmostEqual(pr_auc([1, 0, 1, 0], [0.9, 0.8, 0.7, 0.1]), 0.5 * 1.0 + 0.5 * (2 / 3))
        self.assertAlmostEqual(pr_auc([0, 1, 1], [0.1, 0.8, 0.9]), 1.0)

    def test_tied_scores_form_one_threshold(self) -> None:
        from core.metrics import pr_auc

        self.assertAlmostEqual(pr_auc([1, 1, 0], [0.5, 0.5, 0.5]), 2 / 3)

    def test_no_positives(self) -> None:
        from core.errors import NoPositives
        from core.metrics import pr_auc

        with self.assertRaises(NoPositives):
            pr_auc([0, 0], [0.3, 0.4])


class TestEvaluate(unittest.TestCase):
    def test_report(self) -> None:
        from core.metrics import evaluate

        r = evaluate([1, 0, 1, 0], [0.9, 0.8, 0.7, 0.1], threshold=0.75)
        self.assertEqual((r.tp, r.fp, r.tn, r.fn), (1, 1, 1, 1))
        self.assertAlmostEqual(r.roc_auc, 0.75)
        self.assertEqual(r.n, 4)
        self.assertFalse(r.roc_auc_undefined)
        self.assertEqual(r.to_dict()["threshold"], 0.75)

    def test_single_class_is_flagged_not_raised(self) -> None:
        from core.metrics import evaluate

        r = evaluate([0, 0, 0], [0.1, 0.6, 0.2])
        self.assertTrue(r.roc_auc_undefined)
        self.assertTrue(r.pr_auc_undefined)
        self.assertTrue(r.recall_undefined)
        self.assertEqual((r.roc_auc, r.pr_auc), (0.0, 0.0))
        self.assertEqual(r.fp, 1)

    def test_invalid_inputs(self) -> None:
        from core.errors import EmptyDataset
        from core.metrics import evaluate

        with self.assertRaises(EmptyDataset):
            evaluate([], [])
        with self.assertRaises(ValueError):
            evaluate([1, 0], [0.5, 0.5], threshold=2.0)
        with self.assertRaises(ValueError):
            evaluate([1, 2], [0.5, 0.5])


class TestFormatTable(unittest.TestCase):
    def test_columns_and_percentages(self) -> None:
        from core.metrics import TABLE_COLUMNS, evaluate, format_table

        r = evaluate([1, 0, 1, 0], [0.9, 0.8, 0.7, 0.1])
        text = format_table([("Transformer", "-", r), ("Random Forest", "Subword", r)])
        lines = text.rstrip("\n").split("\n")
        self.assertEqual(len(lines), 4)
        for col in TABLE_COLUMNS:
            self.assertIn(col, lines[0])
        self.assertTrue(lines[3].startswith("Random Forest"))
        self.assertIn("75.0", lines[2])
        self.assertIn("83.3", lines[2])

    def test_empty_table_has_header(self) -> None:
        from core.metrics import format_table

        self.assertTrue(format_table([]).startswith("Classifier"))
