"""core.transformer_clf

Function-level and script-level transformer classifiers over opcode ID sequences.

Forward pipeline:
  embedding + sinusoidal positions (PAD positions zeroed)
  -> [Script] conv1d kernel 2 stride 2, mask OR-downsampled
  -> post-norm encoder layer(s): attention and feed-forward, each residual + layer norm
  -> masked global average pool
  -> two dense ReLU layers with dropout
  -> single logit (sigmoid gives P(FP))
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from core.errors import EmptyDataset, ShapeMismatch, UnknownTokenID
from core.nncore import (
    LayerNorm,
    Linear,
    Module,
    MultiHeadAttention,
    Parameter,
    Tensor,
    adam_step,
    add,
    bce_with_logits,
    conv1d,
    downsample_mask,
    dropout,
    embedding_lookup,
    global_average_pool,
    glorot,
    load_checkpoint,
    mul,
    relu,
    reshape,
    restore_parameters,
    save_checkpoint,
    sinusoidal_positions,
)

logger = logging.getLogger(__name__)

OUTPUT_INIT_SCALE = 0.1


class Variant(str, Enum):
    FUNCTION = "Function"
    SCRIPT = "Script"


_MODEL_DEFAULTS: Dict[Variant, Dict[str, Any]] = {
    Variant.FUNCTION: dict(embed_dim=256, ffn_dim=512, max_len=512, use_conv_frontend=False),
    Variant.SCRIPT: dict(embed_dim=128, ffn_dim=256, max_len=4096, use_conv_frontend=True),
}

_TRAIN_DEFAULTS: Dict[Variant, Dict[str, Any]] = {
    Variant.FUNCTION: dict(epochs=16, batch_size=128),
    Variant.SCRIPT: dict(epochs=10, batch_size=16),
}


class ModelConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    variant: Variant = Variant.FUNCTION
    embed_dim: int = Field(default=256, ge=2)
    num_layers: int = Field(default=1, ge=1)
    num_heads: int = Field(default=4, ge=1)
    ffn_dim: int = Field(default=512, ge=1)
    dropout_rate: float = Field(default=0.1, ge=0.0, lt=1.0)
    max_len: int = Field(default=512, ge=1)
    use_conv_frontend: bool = False
    dense_head_dims: Tuple[int, ...] = ()

    @model_validator(mode="before")
    @classmethod
    def _default_head(cls, data: Any) -> Any:
        if isinstance(data, dict) and not data.get("dense_head_dims"):
            d = int(data.get("embed_dim", 256))
            data = {**data, "dense_head_dims": (d, max(1, d // 2))}
        return data

    @model_validator(mode="after")
    def _check(self) -> "ModelConfig":
        if self.embed_dim % 2:
            raise ValueError("embed_dim must be even for sinusoidal positions")
        if self.embed_dim % self.num_heads:
            raise ValueError("embed_dim must be divisible by num_heads")
        if any(h < 1 for h in self.dense_head_dims):
            raise ValueError("dense_head_dims must be positive")
        return self

    @classmethod
    def for_variant(cls, variant: Variant, **overrides: Any) -> "ModelConfig":
        values: Dict[str, Any] = {"variant": variant, **_MODEL_DEFAULTS[variant]}
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


class TrainConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    epochs: int = Field(default=16, ge=1)
    batch_size: int = Field(default=128, ge=1)
    seed: int = 0
    lr: float = Field(default=1e-3, gt=0.0)
    beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    eps: float = Field(default=1e-8, gt=0.0)
    # padded tokens per forward pass; None processes each batch at once
    max_tokens_per_chunk: Optional[int] = Field(default=None, ge=1)

    @classmethod
    def for_variant(cls, variant: Variant, **overrides: Any) -> "TrainConfig":
        values: Dict[str, Any] = dict(_TRAIN_DEFAULTS[variant])
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


def pad_batch(
    sequences: Sequence[Sequence[int]], max_len: Optional[int] = None
) -> Tuple[np.ndarray, np.ndarray]:
    """Right-pad with PAD (0) to the longest sequence, after truncating to ``max_len``."""
    seqs = [list(s)[:max_len] if max_len else list(s) for s in sequences]
    width = max((len(s) for s in seqs), default=0)
    width = max(width, 1)
    ids = np.zeros((len(seqs), width), dtype=np.int64)
    mask = np.zeros((len(seqs), width), dtype=bool)
    for i, s in enumerate(seqs):
        ids[i, : len(s)] = s
        mask[i, : len(s)] = True
    return ids, mask


class EncoderLayer(Module):
    def __init__(self, d: int, heads: int, ffn: int, rng: np.random.Generator):
        self.attn = MultiHeadAttention(d, heads, rng)
        self.norm1 = LayerNorm(d)
        self.ff1 = Linear(d, ffn, rng)
        self.ff2 = Linear(ffn, d, rng)
        self.norm2 = LayerNorm(d)

    def __call__(
        self, x: Tensor, mask: np.ndarray, rate: float, rng: np.random.Generator, train: bool
    ) -> Tensor:
        a = self.attn(x, mask)
        x = self.norm1(add(x, dropout(a, rate, rng, train)))
        f = self.ff2(relu(self.ff1(x)))
        return self.norm2(add(x, dropout(f, rate, rng, train)))


class TransformerClassifier(Module):
    def __init__(self, config: ModelConfig, vocab_size: int, seed: int = 0):
        if vocab_size < 3:
            raise ValueError("vocab_size must cover PAD, UNK and at least one opcode")
        self.config = config
        self.vocab_size = vocab_size
        self.seed = seed
        init_seq, dropout_seq = np.random.SeedSequence(seed).spawn(2)
        rng = np.random.default_rng(init_seq)
        self.dropout_rng = np.random.default_rng(dropout_seq)

        d = config.embed_dim
        self.embedding = Parameter(rng.normal(0.0, 1.0, size=(vocab_size, d)))
        if config.use_conv_frontend:
            self.conv_weight = Parameter(glorot(rng, 2 * d, d))
            self.conv_bias = Parameter(np.zeros(d))
        self.layers = [
            EncoderLayer(d, config.num_heads, config.ffn_dim, rng) for _ in range(config.num_layers)
        ]
        dims = (d,) + tuple(config.dense_head_dims)
        self.head = [Linear(dims[i], dims[i + 1], rng) for i in range(len(dims) - 1)]
        self.out = Linear(dims[-1], 1, rng, init_scale=OUTPUT_INIT_SCALE)

    def _check_ids(self, ids: np.ndarray) -> None:
        if ids.size == 0:
            return
        bad = ids[(ids < 0) | (ids >= self.vocab_size)]
        if bad.size:
            raise UnknownTokenID(int(bad[0]), self.vocab_size)

    def forward(self, ids: np.ndarray, mask: np.ndarray, train: bool = False) -> Tensor:
        """Logits of shape (B,) for a padded (B, L) batch; ``mask`` is True on real tokens."""
        ids = np.asarray(ids, dtype=np.int64)
        mask = np.asarray(mask, dtype=bool)
        if ids.ndim != 2 or ids.shape != mask.shape:
            raise ShapeMismatch(f"ids {ids.shape} and mask {mask.shape} must be equal 2-D shapes")
        self._check_ids(ids)
        b, length = ids.shape
        rate = self.config.dropout_rate

        x = embedding_lookup(self.embedding, ids)
        x = add(x, sinusoidal_positions(length, self.config.embed_dim))
        x = mul(x, mask[:, :, None].astype(np.float64))
        if self.config.use_conv_frontend:
            x = conv1d(x, self.conv_weight, self.conv_bias)
            mask = downsample_mask(mask)
        for layer in self.layers:
            x = layer(x, mask, rate, self.dropout_rng, train)
        h = global_average_pool(x, mask)
        for dense in self.head:
            h = dropout(relu(dense(h)), rate, self.dropout_rng, train)
        return reshape(self.out(h), (b,))

    def predict_proba(self, sequences: Sequence[Sequence[int]], batch_size: int = 64) -> np.ndarray:
        out: List[np.ndarray] = []
        for start in range(0, len(sequences), batch_size):
            ids, mask = pad_batch(sequences[start : start + batch_size], self.config.max_len)
            logits = self.forward(ids, mask, train=False).data
            out.append(np.exp(-np.logaddexp(0.0, -logits)))
        return np.concatenate(out) if out else np.zeros(0)

    # -- persistence ---------------------------------------------------------

    def sidecar(self, vocab_digest: str) -> Dict[str, Any]:
        return {
            "model": self.config.model_dump(mode="json"),
            "vocabSize": self.vocab_size,
            "vocabDigest": vocab_digest,
            "seed": self.seed,
        }

    def save(self, ckpt_path: str, config_path: str, vocab_digest: str) -> None:
        save_checkpoint(ckpt_path, self.named_parameters(), meta={"vocabDigest": vocab_digest})
        with open(config_path, "w", encoding="utf-8") as f:
            json.dump(self.sidecar(vocab_digest), f, sort_keys=True, indent=2)
            f.write("\n")

    @classmethod
    def load(
        cls, ckpt_path: str, config_path: str
    ) -> Tuple["TransformerClassifier", Dict[str, Any]]:
        with open(config_path, "r", encoding="utf-8") as f:
            side = json.load(f)
        model = cls(ModelConfig(**side["model"]), int(side["vocabSize"]), int(side.get("seed", 0)))
        tensors, _ = load_checkpoint(ckpt_path)
        restore_parameters(model, tensors)
        return model, side


@dataclass
class TrainResult:
    loss_history: List[float] = field(default_factory=list)
    steps: int = 0


def _chunks(order: Sequence[int], lengths: Sequence[int], budget: Optional[int]) -> List[List[int]]:
    """Split one batch into length-sorted chunks of at most ``budget`` padded tokens."""
    if budget is None:
        return [list(order)]
    by_len = sorted(order, key=lambda i: lengths[i])
    chunks: List[List[int]] = []
    cur: List[int] = []
    for i in by_len:
        width = max([lengths[j] for j in cur] + [lengths[i], 1])
        if cur and width * (len(cur) + 1) > budget:
            chunks.append(cur)
            cur = []
        cur.append(i)
    if cur:
        chunks.append(cur)
    return chunks


def train(
    model: TransformerClassifier,
    sequences: Sequence[Sequence[int]],
    labels: Sequence[int],
    cfg: TrainConfig,
) -> TrainResult:
    """Mini-batch Adam on binary cross-entropy; deterministic for a fixed ``cfg.seed``."""
    n = len(sequences)
    if n == 0:
        raise EmptyDataset("no training examples")
    if len(labels) != n:
        raise ShapeMismatch(f"{n} sequences but {len(labels)} labels")
    y = np.asarray(labels, dtype=np.float64)
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ValueError("labels must be 0 or 1")

    max_len = model.config.max_len
    seqs = [list(s)[:max_len] for s in sequences]
    lengths = [len(s) for s in seqs]
    params = model.parameters()
    rng = np.random.default_rng(cfg.seed)
    result = TrainResult()

    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = [int(i) for i in order[start : start + cfg.batch_size]]
            model.zero_grad()
            batch_loss = 0.0
            for chunk in _chunks(batch, lengths, cfg.max_tokens_per_chunk):
                ids, mask = pad_batch([seqs[i] for i in chunk])
                logits = model.forward(ids, mask, train=True)
                loss = bce_with_logits(logits, y[chunk], denom=len(batch))
                loss.backward()
                batch_loss += float(loss.data)
            adam_step(params, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
            result.steps += 1
            total += batch_loss * len(batch)
        result.loss_history.append(total / n)
        logger.info("epoch %d/%d loss %.6f", epoch + 1, cfg.epochs, result.loss_history[-1])
    return result


def threshold_labels(probabilities: Sequence[float], threshold: float = 0.5) -> np.ndarray:
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must be in [0, 1]")
    return (np.asarray(probabilities, dtype=np.float64) >= threshold).astype(np.int64)


def predict_labels(
    model: TransformerClassifier,
    sequences: Sequence[Sequence[int]],
    threshold: float = 0.5,
) -> np.ndarray:
    """1 (FP) where P(FP) >= threshold."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must be in [0, 1]")
    return threshold_labels(model.predict_proba(sequences), threshold)
