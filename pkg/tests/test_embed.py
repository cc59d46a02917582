from __future__ import annotations

import os
import tempfile
import unittest

import numpy as np


def _vocab(names):
    from core.bytelog import Vocabulary

    return Vocabulary(names)


def _shared_context_corpus(vocab, n: int = 150):
    """A and B appear between X and Y; C and D between P and Q."""
    ids = vocab.id_of
    rng = np.random.default_rng(3)
    corpus = []
    for _ in range(n):
        if rng.random() < 0.5:
            mid = "A" if rng.random() < 0.5 else "B"
            corpus.append([ids["X"], ids[mid], ids["Y"]])
        else:
            mid = "C" if rng.random() < 0.5 else "D"
            corpus.append([ids["P"], ids[mid], ids["Q"]])
    return corpus


class TestObjective(unittest.TestCase):
    def test_gradients_match_finite_differences(self) -> None:
        from core.embed import negative_sampling_loss

        rng = np.random.default_rng(0)
        v = rng.normal(size=(3, 4))
        u = rng.normal(size=(3, 5, 4))
        labels = np.zeros((3, 5))
        labels[:, 0] = 1.0
        weights = rng.integers(0, 2, size=(3, 5)).astype(np.float64)
        weights[:, 0] = 1.0
        _, dv, du = negative_sampling_loss(v, u, labels, weights)

        h = 1e-6
        for arr, grad in ((v, dv), (u, du)):
            flat = arr.reshape(-1)
            gflat = grad.reshape(-1)
            for i in range(flat.size):
                old = flat[i]
                flat[i] = old + h
                up = negative_sampling_loss(v, u, labels, weights)[0]
                flat[i] = old - h
                down = negative_sampling_loss(v, u, labels, weights)[0]
                flat[i] = old
                self.assertAlmostEqual((up - down) / (2 * h), gflat[i], places=5)

    def test_zero_vectors_give_log2_per_target(self) -> None:
        from core.embed import negative_sampling_loss

        loss, _, _ = negative_sampling_loss(np.zeros((2, 3)), np.zeros((2, 4, 3)), np.eye(4)[[0, 0]])
        self.assertAlmostEqual(loss, 8 * np.log(2.0))


class TestSkipGram(unittest.TestCase):
    def test_shape_pad_row_and_determinism(self) -> None:
        from core.embed import EmbeddingMode, train_skipgram

        vocab = _vocab(["X", "A", "B", "Y", "P", "C", "D", "Q"])
        corpus = _shared_context_corpus(vocab)
        a = train_skipgram(corpus, vocab, dim=8, epochs=5, seed=42)
        b = train_skipgram(corpus, vocab, dim=8, epochs=5, seed=42)
        self.assertEqual(a.vectors.shape, (len(vocab), 8))
        self.assertEqual(a.mode, EmbeddingMode.SKIPGRAM)
        self.assertTrue(np.all(a.vectors[0] == 0.0))
        self.assertTrue(np.all(np.isfinite(a.vectors)))
        self.assertEqual(a, b)
        self.assertEqual(a.loss_history, b.loss_history)

    def test_loss_decreases_and_shared_contexts_cluster(self) -> None:
        from core.embed import train_skipgram

        vocab = _vocab(["X", "A", "B", "Y", "P", "C", "D", "Q"])
        ids = vocab.id_of
        emb = train_skipgram(_shared_context_corpus(vocab, 300), vocab, dim=10, epochs=150, seed=1, lr=0.05)
        self.assertLess(emb.loss_history[-1], emb.loss_history[0])
        self.assertGreater(emb.cosine(ids["A"], ids["B"]), emb.cosine(ids["A"], ids["C"]))

    def test_empty_corpus(self) -> None:
        from core.embed import train_skipgram
        from core.errors import EmptyCorpus

        with self.assertRaises(EmptyCorpus):
            train_skipgram([], _vocab(["A"]), dim=4, epochs=1)
        with self.assertRaises(EmptyCorpus):
            train_skipgram([[], []], _vocab(["A"]), dim=4, epochs=1)

    def test_unknown_id_in_corpus(self) -> None:
        from core.embed import train_skipgram
        from core.errors import UnknownTokenID

        with self.assertRaises(UnknownTokenID):
            train_skipgram([[2, 99]], _vocab(["A"]), dim=4, epochs=1)


class TestSubword(unittest.TestCase):
    def test_fnv1a_32_reference_values(self) -> None:
        from core.embed import fnv1a_32

        self.assertEqual(fnv1a_32(b""), 0x811C9DC5)
        self.assertEqual(fnv1a_32(b"a"), 0xE40C292C)
        self.assertEqual(fnv1a_32(b"foobar"), 0xBF9CF968)

    def test_char_ngrams(self) -> None:
        from core.embed import char_ngrams

        self.assertEqual(char_ngrams("Add", 3, 4), ["<Ad", "Add", "dd>", "<Add", "Add>"])

    def test_unseen_token_composed_from_ngrams(self) -> None:
        from core.embed import EmbeddingMode, train_subword

        vocab = _vocab(["LdaGlobal", "Star0", "Return", "LdaGlobal.Wide", "Mov"])
        ids = vocab.id_of
        corpus = [[ids["LdaGlobal"], ids["Star0"], ids["Return"]]] * 20
        emb = train_subword(corpus, vocab, dim=50, epochs=3, seed=0)
        self.assertEqual(emb.mode, EmbeddingMode.SUBWORD)
        self.assertEqual((emb.min_n, emb.max_n), (3, 6))
        wide = emb.vector(ids["LdaGlobal.Wide"])
        self.assertTrue(np.any(wide != 0.0))
        self.assertTrue(np.all(np.isfinite(emb.vectors)))
        self.assertGreater(emb.cosine(ids["LdaGlobal.Wide"], ids["LdaGlobal"]), emb.cosine(ids["LdaGlobal.Wide"], ids["Mov"]))

    def test_deterministic(self) -> None:
        from core.embed import train_subword

        vocab = _vocab(["X", "A", "B", "Y", "P", "C", "D", "Q"])
        corpus = _shared_context_corpus(vocab, 40)
        a = train_subword(corpus, vocab, dim=6, epochs=3, seed=9, bucket_count=1024)
        b = train_subword(corpus, vocab, dim=6, epochs=3, seed=9, bucket_count=1024)
        self.assertEqual(a, b)

    def test_invalid_ngram_range(self) -> None:
        from core.embed import train_subword

        with self.assertRaises(ValueError):
            train_subword([[2]], _vocab(["A"]), min_n=4, max_n=3)


class TestEmbeddingMatrix(unittest.TestCase):
    def test_text_round_trip(self) -> None:
        from core.embed import EmbeddingMatrix, train_subword

        vocab = _vocab(["X", "A", "B", "Y", "P", "C", "D", "Q"])
        emb = train_subword(_shared_context_corpus(vocab, 20), vocab, dim=5, epochs=2, seed=2, bucket_count=512)
        with tempfile.TemporaryDirectory() as d:
            path = os.path.join(d, "emb.txt")
            emb.save(path)
            loaded = EmbeddingMatrix.load(path)
        self.assertEqual(loaded, emb)
        self.assertEqual(loaded.mnemonics[:3], ("<pad>", "<unk>", "X"))

    def test_vector_out_of_range(self) -> None:
        from core.embed import EmbeddingMatrix, EmbeddingMode
        from core.errors import UnknownTokenID

        emb = EmbeddingMatrix(dim=2, vectors=np.zeros((3, 2)), mode=EmbeddingMode.SKIPGRAM, mnemonics=("a", "b", "c"))
        with self.assertRaises(UnknownTokenID):
            emb.vector(3)


class TestAverageVector(unittest.TestCase):
    def _emb(self):
        from core.embed import EmbeddingMatrix, EmbeddingMode

        vectors = np.array([[0.0, 0.0], [9.0, 9.0], [1.0, 2.0], [3.0, 4.0]])
        return EmbeddingMatrix(dim=2, vectors=vectors, mode=EmbeddingMode.SKIPGRAM, mnemonics=("p", "u", "a", "b"))

    def test_mean_ignores_pad(self) -> None:
        from core.embed import average_vector, average_vectors

        emb = self._emb()
        np.testing.assert_allclose(average_vector([2, 3, 0, 0], emb), [2.0, 3.0])
        np.testing.assert_allclose(average_vectors([[2], [3, 3]], emb), [[1.0, 2.0], [3.0, 4.0]])

    def test_errors(self) -> None:
        from core.embed import average_vector
        from core.errors import EmptySequence, UnknownTokenID

        emb = self._emb()
        with self.assertRaises(EmptySequence):
            average_vector([0, 0], emb)
        with self.assertRaises(EmptySequence):
            average_vector([], emb)
        with self.assertRaises(UnknownTokenID):
            average_vector([2, 7], emb)
