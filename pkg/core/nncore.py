"""core.nncore

A small reverse-mode autodiff kernel on numpy float64 arrays, with the layers
and optimizer the transformer classifier needs.

Every op returns a new Tensor holding a closure that pushes its output gradient
to its parents. ``Tensor.backward()`` runs those closures in reverse
topological order. Any op that produces NaN/Inf raises NonFiniteValue.
"""

from __future__ import annotations

import json
import math
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from core.errors import NonFiniteValue, OddDimension, ShapeMismatch

CHECKPOINT_FORMAT = "fpguard-checkpoint"
CHECKPOINT_VERSION = 1

ArrayLike = Union[np.ndarray, float, Sequence[float]]
RngLike = Union[None, int, np.random.Generator]


class Tensor:
    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        parents: Tuple["Tensor", ...] = (),
        backward: Optional[Callable[[np.ndarray], None]] = None,
        op: str = "",
    ):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self._parents = parents
        self._backward = backward
        self.op = op

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op or 'leaf'})"

    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        if grad is None:
            if self.data.size != 1:
                raise ShapeMismatch("backward() without a gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order: List[Tensor] = []
        seen = set()
        stack: List[Tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))

        self.grad = grad if self.grad is None else self.grad + grad
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


class Parameter(Tensor):
    """Trainable tensor with Adam moment buffers."""

    def __init__(self, data: ArrayLike):
        super().__init__(np.array(data, dtype=np.float64), requires_grad=True)
        self.m = np.zeros_like(self.data)
        self.v = np.zeros_like(self.data)
        self.step = 0


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    t.grad = g.copy() if t.grad is None else t.grad + g


def _make(
    op: str,
    data: np.ndarray,
    parents: Tuple[Tensor, ...],
    backward: Callable[[np.ndarray], None],
) -> Tensor:
    if not np.all(np.isfinite(data)):
        raise NonFiniteValue(op)
    if not any(p.requires_grad for p in parents):
        return Tensor(data, op=op)
    return Tensor(data, requires_grad=True, parents=parents, backward=backward, op=op)


def as_tensor(x: Union[Tensor, ArrayLike]) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatch(f"{op}: cannot broadcast {a.shape} with {b.shape}")


# ---------------------------------------------------------------------------
# Elementwise and structural ops
# ---------------------------------------------------------------------------


def add(a: Union[Tensor, ArrayLike], b: Union[Tensor, ArrayLike]) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")

    def backward(g: np.ndarray) -> None:
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(g, b.shape))

    return _make("add", a.data + b.data, (a, b), backward)


def mul(a: Union[Tensor, ArrayLike], b: Union[Tensor, ArrayLike]) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")

    def backward(g: np.ndarray) -> None:
        _accum(a, _unbroadcast(g * b.data, a.shape))
        _accum(b, _unbroadcast(g * a.data, b.shape))

    return _make("mul", a.data * b.data, (a, b), backward)


def scale(a: Tensor, c: float) -> Tensor:
    def backward(g: np.ndarray) -> None:
        _accum(a, g * c)

    return _make("scale", a.data * c, (a,), backward)


def matmul(a: Union[Tensor, ArrayLike], b: Union[Tensor, ArrayLike]) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeMismatch(f"matmul: {a.shape} @ {b.shape}")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError:
        raise ShapeMismatch(f"matmul: {a.shape} @ {b.shape}")

    def backward(g: np.ndarray) -> None:
        _accum(a, _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape))
        _accum(b, _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape))

    return _make("matmul", out, (a, b), backward)


def reshape(a: Tensor, shape: Tuple[int, ...]) -> Tensor:
    src = a.shape

    def backward(g: np.ndarray) -> None:
        _accum(a, g.reshape(src))

    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeMismatch(f"reshape: {src} -> {shape}")
    return _make("reshape", out, (a,), backward)


def transpose(a: Tensor, axes: Tuple[int, ...]) -> Tensor:
    inverse = tuple(np.argsort(axes))

    def backward(g: np.ndarray) -> None:
        _accum(a, np.transpose(g, inverse))

    return _make("transpose", np.transpose(a.data, axes), (a,), backward)


def relu(a: Tensor) -> Tensor:
    pos = a.data > 0

    def backward(g: np.ndarray) -> None:
        _accum(a, g * pos)

    return _make("relu", a.data * pos, (a,), backward)


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    return np.exp(-np.logaddexp(0.0, -x))


def sigmoid(a: Tensor) -> Tensor:
    y = _stable_sigmoid(a.data)

    def backward(g: np.ndarray) -> None:
        _accum(a, g * y * (1.0 - y))

    return _make("sigmoid", y, (a,), backward)


def softmax(a: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
    """Softmax over the last axis.

    ``mask`` broadcasts against the input, True = keep; dropped entries get weight 0
    and a row with nothing kept is all zeros.
    """
    x = a.data
    if mask is not None:
        keep = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
        x = np.where(keep, x, -np.inf)
    m = np.max(x, axis=-1, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    e = np.exp(x - m)
    s = e.sum(axis=-1, keepdims=True)
    y = np.divide(e, s, out=np.zeros_like(e), where=s > 0)

    def backward(g: np.ndarray) -> None:
        _accum(a, y * (g - np.sum(g * y, axis=-1, keepdims=True)))

    return _make("softmax", y, (a,), backward)


def layer_norm(a: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    x = a.data
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeMismatch(f"layer_norm: features {d}, gamma {gamma.shape}, beta {beta.shape}")
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    inv = 1.0 / np.sqrt((xc**2).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv

    def backward(g: np.ndarray) -> None:
        lead = tuple(range(g.ndim - 1))
        _accum(gamma, (g * xhat).sum(axis=lead))
        _accum(beta, g.sum(axis=lead))
        dxhat = g * gamma.data
        dx = inv / d * (
            d * dxhat
            - dxhat.sum(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True)
        )
        _accum(a, dx)

    return _make("layer_norm", xhat * gamma.data + beta.data, (a, gamma, beta), backward)


def dropout(a: Tensor, rate: float, rng: RngLike = None, train: bool = True) -> Tensor:
    """Inverted dropout: kept units are scaled by 1/(1-rate) at train time only."""
    if not 0.0 <= rate < 1.0:
        raise ValueError("dropout rate must be in [0, 1)")
    if not train or rate == 0.0:
        return a
    gen = np.random.default_rng(rng)
    keep = (gen.random(a.shape) >= rate) / (1.0 - rate)

    def backward(g: np.ndarray) -> None:
        _accum(a, g * keep)

    return _make("dropout", a.data * keep, (a,), backward)


def embedding_lookup(table: Tensor, ids: np.ndarray) -> Tensor:
    ids = np.asarray(ids, dtype=np.int64)
    v = table.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= v):
        raise ShapeMismatch(f"embedding_lookup: ids outside [0, {v})")

    def backward(g: np.ndarray) -> None:
        acc = np.zeros_like(table.data)
        np.add.at(acc, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        _accum(table, acc)

    return _make("embedding_lookup", table.data[ids], (table,), backward)


def conv1d(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Kernel 2, stride 2 along axis 1 of (B, L, d_in); odd L is zero-padded at the end.

    ``weight`` has shape (2 * d_in, d_out): rows [0, d_in) see the even position,
    rows [d_in, 2 * d_in) the odd one.
    """
    b, length, d_in = x.shape
    if weight.shape[0] != 2 * d_in or bias.shape != (weight.shape[1],):
        raise ShapeMismatch(f"conv1d: input {x.shape}, weight {weight.shape}, bias {bias.shape}")
    padded = length + (length % 2)
    xp = x.data
    if padded != length:
        xp = np.concatenate([xp, np.zeros((b, 1, d_in))], axis=1)
    pairs = xp.reshape(b, padded // 2, 2 * d_in)
    out = pairs @ weight.data + bias.data

    def backward(g: np.ndarray) -> None:
        _accum(weight, np.einsum("bti,bto->io", pairs, g))
        _accum(bias, g.sum(axis=(0, 1)))
        dp = (g @ weight.data.T).reshape(b, padded, d_in)
        _accum(x, dp[:, :length, :])

    return _make("conv1d", out, (x, weight, bias), backward)


def downsample_mask(mask: np.ndarray) -> np.ndarray:
    """Mask after conv1d: a pair is real if either member is."""
    m = np.asarray(mask, dtype=bool)
    if m.shape[1] % 2:
        m = np.concatenate([m, np.zeros((m.shape[0], 1), dtype=bool)], axis=1)
    return m[:, 0::2] | m[:, 1::2]


def global_average_pool(x: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
    """Mean over axis 1 of (B, L, d), counting only positions where ``mask`` is True."""
    b, length, _ = x.shape
    if mask is None:
        m = np.ones((b, length), dtype=np.float64)
    else:
        m = np.asarray(mask, dtype=np.float64)
    if m.shape != (b, length):
        raise ShapeMismatch(f"global_average_pool: mask {m.shape} for input {x.shape}")
    count = np.maximum(m.sum(axis=1, keepdims=True), 1.0)
    w = (m / count)[:, :, None]

    def backward(g: np.ndarray) -> None:
        _accum(x, g[:, None, :] * w)

    return _make("global_average_pool", (x.data * w).sum(axis=1), (x,), backward)


def bce_with_logits(logits: Tensor, targets: np.ndarray, denom: Optional[float] = None) -> Tensor:
    """Summed binary cross-entropy on raw logits divided by ``denom`` (default: batch size)."""
    z = logits.data
    y = np.asarray(targets, dtype=np.float64)
    if z.shape != y.shape:
        raise ShapeMismatch(f"bce_with_logits: logits {z.shape}, targets {y.shape}")
    n = float(denom if denom is not None else max(z.size, 1))
    loss = np.sum(np.maximum(z, 0.0) - z * y + np.logaddexp(0.0, -np.abs(z))) / n

    def backward(g: np.ndarray) -> None:
        _accum(logits, g * (_stable_sigmoid(z) - y) / n)

    return _make("bce_with_logits", np.asarray(loss), (logits,), backward)


def sum_all(a: Tensor) -> Tensor:
    def backward(g: np.ndarray) -> None:
        _accum(a, np.broadcast_to(g, a.shape).copy())

    return _make("sum", np.asarray(a.data.sum()), (a,), backward)


# ---------------------------------------------------------------------------
# Layers
# ---------------------------------------------------------------------------


class Module:
    """Parameter container; parameters are discovered from attributes in definition order."""

    def named_parameters(self, prefix: str = "") -> List[Tuple[str, Parameter]]:
        out: List[Tuple[str, Parameter]] = []
        for name, value in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(value, Parameter):
                out.append((full, value))
            elif isinstance(value, Module):
                out.extend(value.named_parameters(full + "."))
            elif isinstance(value, list) and value and isinstance(value[0], Module):
                for i, item in enumerate(value):
                    out.extend(item.named_parameters(f"{full}.{i}."))
        return out

    def parameters(self) -> List[Parameter]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, init_scale: float = 1.0):
        self.weight = Parameter(glorot(rng, d_in, d_out) * init_scale)
        self.bias = Parameter(np.zeros(d_out))

    def __call__(self, x: Tensor) -> Tensor:
        return add(matmul(x, self.weight), self.bias)


class LayerNorm(Module):
    def __init__(self, d: int, eps: float = 1e-5):
        self.gamma = Parameter(np.ones(d))
        self.beta = Parameter(np.zeros(d))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gamma, self.beta, self.eps)


class MultiHeadAttention(Module):
    def __init__(self, d: int, heads: int, rng: np.random.Generator):
        if heads < 1 or d % heads:
            raise ShapeMismatch(f"embedding dim {d} is not divisible by {heads} heads")
        self.d = d
        self.heads = heads
        self.q = Linear(d, d, rng)
        self.k = Linear(d, d, rng)
        self.v = Linear(d, d, rng)
        self.o = Linear(d, d, rng)
        self.last_weights: Optional[np.ndarray] = None

    def _split(self, x: Tensor) -> Tensor:
        b, length, _ = x.shape
        return transpose(reshape(x, (b, length, self.heads, self.d // self.heads)), (0, 2, 1, 3))

    def __call__(self, x: Tensor, key_mask: Optional[np.ndarray] = None) -> Tensor:
        """x: (B, L, d); key_mask: (B, L), True for real tokens."""
        if x.data.ndim != 3 or x.shape[-1] != self.d:
            raise ShapeMismatch(f"attention input {x.shape}, expected (B, L, {self.d})")
        b, length, _ = x.shape
        q, k, v = self._split(self.q(x)), self._split(self.k(x)), self._split(self.v(x))
        scores = scale(matmul(q, transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(self.d // self.heads))
        mask = None if key_mask is None else np.asarray(key_mask, dtype=bool)[:, None, None, :]
        weights = softmax(scores, mask)
        self.last_weights = weights.data
        ctx = transpose(matmul(weights, v), (0, 2, 1, 3))
        return self.o(reshape(ctx, (b, length, self.d)))


def multi_head_attention(
    x: Tensor, attn: MultiHeadAttention, key_mask: Optional[np.ndarray] = None
) -> Tensor:
    return attn(x, key_mask)


def sinusoidal_positions(length: int, d: int) -> np.ndarray:
    if d % 2:
        raise OddDimension(d)
    pos = np.arange(length, dtype=np.float64)[:, None]
    i = np.arange(0, d, 2, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, i / d)
    pe = np.zeros((length, d), dtype=np.float64)
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle)
    return pe


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------


def adam_step(
    params: Iterable[Parameter],
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    for p in params:
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        p.step += 1
        p.m = beta1 * p.m + (1.0 - beta1) * g
        p.v = beta2 * p.v + (1.0 - beta2) * g * g
        m_hat = p.m / (1.0 - beta1**p.step)
        v_hat = p.v / (1.0 - beta2**p.step)
        p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + eps)
        if not np.all(np.isfinite(p.data)):
            raise NonFiniteValue("adam_step")


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


NamedParameters = Sequence[Tuple[str, Parameter]]


def checkpoint_dict(
    named: NamedParameters, meta: Optional[Dict[str, Any]] = None
) -> Dict[str, Any]:
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "meta": meta or {},
        "tensors": {
            name: {"shape": list(p.shape), "data": [float(x) for x in p.data.reshape(-1)]}
            for name, p in named
        },
    }


def save_checkpoint(
    path: str, named: NamedParameters, meta: Optional[Dict[str, Any]] = None
) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(checkpoint_dict(named, meta), f, sort_keys=True, separators=(",", ":"))
        f.write("\n")


def load_checkpoint(path: str) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    with open(path, "r", encoding="utf-8") as f:
        payload = json.load(f)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a checkpoint file")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {payload.get('version')!r}")
    tensors = {
        name: np.array(t["data"], dtype=np.float64).reshape(tuple(t["shape"]))
        for name, t in payload["tensors"].items()
    }
    return tensors, payload.get("meta") or {}


def restore_parameters(module: Module, tensors: Dict[str, np.ndarray]) -> None:
    for name, p in module.named_parameters():
        if name not in tensors:
            raise ValueError(f"checkpoint has no tensor {name!r}")
        if tensors[name].shape != p.shape:
            raise ShapeMismatch(f"{name}: checkpoint {tensors[name].shape}, model {p.shape}")
        p.data = tensors[name].copy()
