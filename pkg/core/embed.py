"""core.embed

Static opcode embeddings for the forest baseline.

Two trainers share one negative-sampling objective:
  - train_skipgram: one input vector per opcode ID.
  - train_subword: an opcode's input vector is the mean of its own row and the
    rows of its hashed character n-grams (computed over ``<Mnemonic>``), so
    related mnemonics such as LdaGlobal/LdaConstant share parameters and
    opcodes never seen in training still get a vector.

Training is single-threaded and fully determined by ``seed``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from core.bytelog import PAD_ID, Vocabulary
from core.errors import EmptyCorpus, EmptySequence, NonFiniteValue, UnknownTokenID

logger = logging.getLogger(__name__)

SKIPGRAM_DIM = 100
SUBWORD_DIM = 50
WINDOW = 3
EPOCHS = 100
NEGATIVE = 5
LEARNING_RATE = 0.025
MIN_LR_FRACTION = 1e-4
NOISE_POWER = 0.75
BATCH_PAIRS = 1024

MIN_N = 3
MAX_N = 6
BUCKET_COUNT = 2**18

_FNV32_OFFSET = 0x811C9DC5
_FNV32_PRIME = 0x01000193


class EmbeddingMode(str, Enum):
    SKIPGRAM = "SkipGram"
    SUBWORD = "Subword"


@dataclass
class EmbeddingMatrix:
    dim: int
    vectors: np.ndarray
    mode: EmbeddingMode
    mnemonics: Tuple[str, ...]
    min_n: Optional[int] = None
    max_n: Optional[int] = None
    loss_history: List[float] = field(default_factory=list, compare=False)

    @property
    def size(self) -> int:
        return int(self.vectors.shape[0])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EmbeddingMatrix):
            return NotImplemented
        return (
            self.dim == other.dim
            and self.mode == other.mode
            and self.mnemonics == other.mnemonics
            and self.min_n == other.min_n
            and self.max_n == other.max_n
            and np.array_equal(self.vectors, other.vectors)
        )

    def vector(self, token_id: int) -> np.ndarray:
        if not 0 <= token_id < self.size:
            raise UnknownTokenID(token_id, self.size)
        return self.vectors[token_id]

    def cosine(self, a: int, b: int) -> float:
        va, vb = self.vector(a), self.vector(b)
        denom = float(np.linalg.norm(va) * np.linalg.norm(vb))
        return float(va @ vb) / denom if denom > 0 else 0.0

    def to_text(self) -> str:
        header = f"dim={self.dim} mode={self.mode.value}"
        if self.mode is EmbeddingMode.SUBWORD:
            header += f" min_n={self.min_n} max_n={self.max_n}"
        lines = [header]
        for name, row in zip(self.mnemonics, self.vectors):
            lines.append(name + " " + " ".join(repr(float(x)) for x in row))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "EmbeddingMatrix":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise ValueError("empty embedding file")
        meta = dict(part.split("=", 1) for part in lines[0].split())
        dim = int(meta["dim"])
        names: List[str] = []
        rows: List[List[float]] = []
        for ln in lines[1:]:
            parts = ln.split(" ")
            if len(parts) != dim + 1:
                raise ValueError(
                    f"embedding row for {parts[0]!r} has {len(parts) - 1} values, expected {dim}"
                )
            names.append(parts[0])
            rows.append([float(x) for x in parts[1:]])
        return cls(
            dim=dim,
            vectors=np.array(rows, dtype=np.float64).reshape(len(rows), dim),
            mode=EmbeddingMode(meta["mode"]),
            mnemonics=tuple(names),
            min_n=int(meta["min_n"]) if "min_n" in meta else None,
            max_n=int(meta["max_n"]) if "max_n" in meta else None,
        )

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.to_text())

    @classmethod
    def load(cls, path: str) -> "EmbeddingMatrix":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_text(f.read())


def _vocab_names(vocab: Vocabulary) -> Tuple[str, ...]:
    return tuple(vocab.token(i) for i in range(len(vocab)))


# ---------------------------------------------------------------------------
# Objective
# ---------------------------------------------------------------------------


def _log_sigmoid(x: np.ndarray) -> np.ndarray:
    return -np.logaddexp(0.0, -x)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return np.exp(_log_sigmoid(x))


def negative_sampling_loss(
    v: np.ndarray,
    u: np.ndarray,
    labels: np.ndarray,
    weights: Optional[np.ndarray] = None,
) -> Tuple[float, np.ndarray, np.ndarray]:
    """Summed logistic loss of input vectors against output vectors.

    v: (B, d) input vectors; u: (B, K, d) output vectors; labels: (B, K), 1 for the
    observed context and 0 for noise samples. Returns (loss, dL/dv, dL/du).
    """
    scores = np.einsum("bd,bkd->bk", v, u)
    sign = 2.0 * labels - 1.0
    w = np.ones_like(scores) if weights is None else weights
    loss = -float(np.sum(w * _log_sigmoid(sign * scores)))
    # d/ds of -log sigma(sign*s) = -sign * sigma(-sign*s)
    g = -w * sign * _sigmoid(-sign * scores)
    dv = np.einsum("bk,bkd->bd", g, u)
    du = g[:, :, None] * v[:, None, :]
    return loss, dv, du


# ---------------------------------------------------------------------------
# Shared training loop
# ---------------------------------------------------------------------------


def _context_pairs(corpus: Sequence[Sequence[int]], window: int) -> Tuple[np.ndarray, np.ndarray]:
    centers: List[np.ndarray] = []
    contexts: List[np.ndarray] = []
    for seq in corpus:
        s = np.asarray(seq, dtype=np.int64)
        s = s[s != PAD_ID]
        for off in range(1, window + 1):
            if len(s) <= off:
                break
            centers.append(s[:-off])
            contexts.append(s[off:])
            centers.append(s[off:])
            contexts.append(s[:-off])
    if not centers:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    return np.concatenate(centers), np.concatenate(contexts)


def _noise_table(corpus: Sequence[Sequence[int]], vocab_size: int) -> np.ndarray:
    counts = np.zeros(vocab_size, dtype=np.float64)
    for seq in corpus:
        ids = np.asarray(seq, dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= vocab_size):
            bad = int(ids[(ids < 0) | (ids >= vocab_size)][0])
            raise UnknownTokenID(bad, vocab_size)
        counts += np.bincount(ids, minlength=vocab_size)
    counts[PAD_ID] = 0.0
    return np.cumsum(counts**NOISE_POWER)


def _check_corpus(corpus: Sequence[Sequence[int]]) -> None:
    if not corpus or not any(len(s) for s in corpus):
        raise EmptyCorpus("embedding corpus has no tokens")


def _scatter_mean(target: np.ndarray, rows: np.ndarray, grads: np.ndarray, step: float) -> None:
    """Apply -step * gradient; rows hit several times in one batch move by their mean gradient."""
    acc = np.zeros_like(target)
    np.add.at(acc, rows, grads)
    hits = np.bincount(rows, minlength=target.shape[0]).astype(np.float64)
    touched = hits > 0
    target[touched] -= step * acc[touched] / hits[touched, None]


class _Trainer:
    """Negative-sampling SGD over (center, context) pairs.

    Subclasses define how an input vector is assembled from parameter rows.
    """

    def __init__(self, vocab_size: int, dim: int, negative: int, rng: np.random.Generator):
        self.vocab_size = vocab_size
        self.dim = dim
        self.negative = negative
        self.rng = rng
        self.w_out = np.zeros((vocab_size, dim), dtype=np.float64)

    def input_rows(self, centers: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def apply_input_grad(self, centers: np.ndarray, dv: np.ndarray, step: float) -> None:
        raise NotImplementedError

    def run(
        self,
        corpus: Sequence[Sequence[int]],
        window: int,
        epochs: int,
        lr: float,
        batch_pairs: int = BATCH_PAIRS,
    ) -> List[float]:
        centers, contexts = _context_pairs(corpus, window)
        if centers.size == 0:
            logger.info("Corpus has no context pairs; returning initial vectors")
            return []
        cum = _noise_table(corpus, self.vocab_size)
        n = centers.size
        n_batches = (n + batch_pairs - 1) // batch_pairs
        total = max(1, epochs * n_batches)
        done = 0
        history: List[float] = []
        for epoch in range(epochs):
            order = self.rng.permutation(n)
            epoch_loss = 0.0
            for start in range(0, n, batch_pairs):
                idx = order[start : start + batch_pairs]
                c, o = centers[idx], contexts[idx]
                b = idx.size
                draws = self.rng.random((b, self.negative)) * cum[-1]
                noise = np.searchsorted(cum, draws, side="right")
                noise = np.minimum(noise, self.vocab_size - 1)

                targets = np.concatenate([o[:, None], noise], axis=1)
                labels = np.zeros(targets.shape, dtype=np.float64)
                labels[:, 0] = 1.0
                weights = np.ones(targets.shape, dtype=np.float64)
                # a noise draw equal to the true context is not a negative
                weights[:, 1:] = (noise != o[:, None]).astype(np.float64)

                v = self.input_rows(c)[0]
                u = self.w_out[targets]
                loss, dv, du = negative_sampling_loss(v, u, labels, weights)
                if not np.isfinite(loss):
                    raise NonFiniteValue("negative_sampling_loss")

                step = lr * max(MIN_LR_FRACTION, 1.0 - done / total)
                _scatter_mean(self.w_out, targets.reshape(-1), du.reshape(-1, self.dim), step)
                self.apply_input_grad(c, dv, step)
                epoch_loss += loss
                done += 1
            history.append(epoch_loss / n)
            logger.debug("epoch %d mean loss %.6f", epoch, history[-1])
        return history


class _SkipGramTrainer(_Trainer):
    def __init__(self, vocab_size: int, dim: int, negative: int, rng: np.random.Generator):
        super().__init__(vocab_size, dim, negative, rng)
        self.w_in = (rng.random((vocab_size, dim)) - 0.5) / dim
        self.w_in[PAD_ID] = 0.0

    def input_rows(self, centers: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return self.w_in[centers], centers

    def apply_input_grad(self, centers: np.ndarray, dv: np.ndarray, step: float) -> None:
        _scatter_mean(self.w_in, centers, dv, step)


def train_skipgram(
    corpus: Sequence[Sequence[int]],
    vocab: Vocabulary,
    dim: int = SKIPGRAM_DIM,
    window: int = WINDOW,
    epochs: int = EPOCHS,
    negative: int = NEGATIVE,
    seed: int = 0,
    lr: float = LEARNING_RATE,
) -> EmbeddingMatrix:
    if dim < 1 or window < 1 or epochs < 0 or negative < 1:
        raise ValueError("dim, window and negative must be >= 1")
    _check_corpus(corpus)
    rng = np.random.default_rng(seed)
    trainer = _SkipGramTrainer(len(vocab), dim, negative, rng)
    history = trainer.run(corpus, window, epochs, lr)

    vectors = trainer.w_in.copy()
    vectors[PAD_ID] = 0.0
    if not np.all(np.isfinite(vectors)):
        raise NonFiniteValue("train_skipgram")
    return EmbeddingMatrix(
        dim=dim,
        vectors=vectors,
        mode=EmbeddingMode.SKIPGRAM,
        mnemonics=_vocab_names(vocab),
        loss_history=history,
    )


# ---------------------------------------------------------------------------
# Subword variant
# ---------------------------------------------------------------------------


def fnv1a_32(data: bytes) -> int:
    h = _FNV32_OFFSET
    for b in data:
        h ^= b
        h = (h * _FNV32_PRIME) & 0xFFFFFFFF
    return h


def char_ngrams(mnemonic: str, min_n: int = MIN_N, max_n: int = MAX_N) -> List[str]:
    """Character n-grams of ``<mnemonic>``, shortest first, left to right."""
    word = f"<{mnemonic}>"
    out: List[str] = []
    for n in range(min_n, max_n + 1):
        for i in range(0, len(word) - n + 1):
            out.append(word[i : i + n])
    return out


def ngram_buckets(mnemonic: str, min_n: int, max_n: int, bucket_count: int) -> List[int]:
    return [fnv1a_32(g.encode("utf-8")) % bucket_count for g in char_ngrams(mnemonic, min_n, max_n)]


class _SubwordTrainer(_Trainer):
    def __init__(
        self,
        names: Sequence[Optional[str]],
        dim: int,
        negative: int,
        rng: np.random.Generator,
        min_n: int,
        max_n: int,
        bucket_count: int,
    ):
        vocab_size = len(names)
        super().__init__(vocab_size, dim, negative, rng)
        per_token: List[List[int]] = []
        slot: Dict[int, int] = {}
        for name in names:
            buckets = ngram_buckets(name, min_n, max_n, bucket_count) if name else []
            rows = []
            for bkt in buckets:
                if bkt not in slot:
                    slot[bkt] = len(slot)
                rows.append(vocab_size + slot[bkt])
            per_token.append(rows)

        self.ngram_rows = per_token
        width = 1 + max((len(r) for r in per_token), default=0)
        comp = np.full((vocab_size, width), -1, dtype=np.int64)
        for tid, rows in enumerate(per_token):
            comp[tid, 0] = tid
            comp[tid, 1 : 1 + len(rows)] = rows
        self.components = comp
        self.mask = comp >= 0
        self.counts = self.mask.sum(axis=1).astype(np.float64)

        self.w_in = (rng.random((vocab_size + len(slot), dim)) - 0.5) / dim
        self.w_in[PAD_ID] = 0.0

    def input_rows(self, centers: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        comps = self.components[centers]
        mask = self.mask[centers]
        rows = self.w_in[np.where(mask, comps, 0)] * mask[:, :, None]
        return rows.sum(axis=1) / self.counts[centers][:, None], comps

    def apply_input_grad(self, centers: np.ndarray, dv: np.ndarray, step: float) -> None:
        comps = self.components[centers]
        mask = self.mask[centers]
        share = dv / self.counts[centers][:, None]
        flat_rows = comps[mask]
        flat_grads = np.repeat(share, mask.sum(axis=1), axis=0)
        _scatter_mean(self.w_in, flat_rows, flat_grads, step)

    def compose(self, seen: np.ndarray) -> np.ndarray:
        out = np.zeros((self.vocab_size, self.dim), dtype=np.float64)
        for tid in range(self.vocab_size):
            if tid == PAD_ID:
                continue
            rows = list(self.ngram_rows[tid])
            if seen[tid] or not rows:
                rows.append(tid)
            out[tid] = self.w_in[rows].mean(axis=0)
        return out


def train_subword(
    corpus: Sequence[Sequence[int]],
    vocab: Vocabulary,
    dim: int = SUBWORD_DIM,
    window: int = WINDOW,
    epochs: int = EPOCHS,
    min_n: int = MIN_N,
    max_n: int = MAX_N,
    bucket_count: int = BUCKET_COUNT,
    negative: int = NEGATIVE,
    seed: int = 0,
    lr: float = LEARNING_RATE,
) -> EmbeddingMatrix:
    if dim < 1 or window < 1 or negative < 1:
        raise ValueError("dim, window and negative must be >= 1")
    if not 1 <= min_n <= max_n:
        raise ValueError("need 1 <= min_n <= max_n")
    if bucket_count < 1:
        raise ValueError("bucket_count must be >= 1")
    _check_corpus(corpus)

    names: List[Optional[str]] = [None, None] + list(vocab.mnemonics)
    rng = np.random.default_rng(seed)
    trainer = _SubwordTrainer(names, dim, negative, rng, min_n, max_n, bucket_count)
    history = trainer.run(corpus, window, epochs, lr)

    seen = np.zeros(len(vocab), dtype=bool)
    for seq in corpus:
        seen[np.asarray(seq, dtype=np.int64)] = True
    vectors = trainer.compose(seen)
    if not np.all(np.isfinite(vectors)):
        raise NonFiniteValue("train_subword")
    return EmbeddingMatrix(
        dim=dim,
        vectors=vectors,
        mode=EmbeddingMode.SUBWORD,
        mnemonics=_vocab_names(vocab),
        min_n=min_n,
        max_n=max_n,
        loss_history=history,
    )


# ---------------------------------------------------------------------------
# Features
# ---------------------------------------------------------------------------


def average_vector(token_ids: Sequence[int], emb: EmbeddingMatrix) -> np.ndarray:
    ids = np.asarray(token_ids, dtype=np.int64)
    ids = ids[ids != PAD_ID]
    if ids.size == 0:
        raise EmptySequence("cannot average an empty token sequence")
    if ids.min() < 0 or ids.max() >= emb.size:
        bad = int(ids[(ids < 0) | (ids >= emb.size)][0])
        raise UnknownTokenID(bad, emb.size)
    return emb.vectors[ids].mean(axis=0)


def average_vectors(sequences: Iterable[Sequence[int]], emb: EmbeddingMatrix) -> np.ndarray:
    rows = [average_vector(s, emb) for s in sequences]
    if not rows:
        return np.zeros((0, emb.dim), dtype=np.float64)
    return np.vstack(rows)
