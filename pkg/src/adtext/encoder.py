"""BERT-style encoder: embeddings, post-norm self-attention blocks, pooler, and heads."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import Iterator, Sequence

import numpy as np

from . import tensor as T
from .errors import ConfigError, InvalidIdError, ShapeError
from .tensor import Parameter, Tensor
from .tokenizer import Encoding

MASK_VALUE = -1e9
LN_EPS = 1e-12
INIT_STD = 0.02


@dataclass(frozen=True)
class ModelConfig:
    hidden_size: int = 64
    num_layers: int = 2
    num_heads: int = 4
    max_seq: int = 64
    vocab_size: int = 4000
    intermediate_size: int = 256
    num_classes: int = 12
    dropout_rate: float = 0.1

    def __post_init__(self):
        for f in fields(self):
            if f.name != "dropout_rate" and int(getattr(self, f.name)) < 1:
                raise ConfigError(f"{f.name} must be positive")
        if self.hidden_size % self.num_heads:
            raise ConfigError(f"hidden_size {self.hidden_size} not divisible by num_heads {self.num_heads}")
        if self.max_seq < 2:
            raise ConfigError("max_seq must be >= 2")
        if self.num_classes < 2:
            raise ConfigError("num_classes must be >= 2")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError("dropout_rate must lie in [0, 1)")

    @property
    def head_size(self) -> int:
        return self.hidden_size // self.num_heads

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


def _truncated_normal(rng: np.random.Generator, shape, std: float) -> np.ndarray:
    out = rng.standard_normal(shape)
    bad = np.abs(out) > 2.0
    while bad.any():
        out[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(out) > 2.0
    return out * std


def param_shapes(cfg: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Names and shapes of every weight, in the canonical (serialization) order."""
    h, i = cfg.hidden_size, cfg.intermediate_size
    shapes = [
        ("embeddings.token", (cfg.vocab_size, h)),
        ("embeddings.position", (cfg.max_seq, h)),
    ]
    for layer in range(cfg.num_layers):
        p = f"layers.{layer}."
        for proj in ("query", "key", "value", "output"):
            shapes.append((p + f"attention.{proj}.weight", (h, h)))
            # a key bias only shifts each query's scores by a constant, which softmax ignores
            if proj != "key":
                shapes.append((p + f"attention.{proj}.bias", (h,)))
        shapes += [
            (p + "attention_norm.gain", (h,)),
            (p + "attention_norm.bias", (h,)),
            (p + "ffn.in.weight", (h, i)),
            (p + "ffn.in.bias", (i,)),
            (p + "ffn.out.weight", (i, h)),
            (p + "ffn.out.bias", (h,)),
            (p + "ffn_norm.gain", (h,)),
            (p + "ffn_norm.bias", (h,)),
        ]
    shapes += [
        ("pooler.weight", (h, h)),
        ("pooler.bias", (h,)),
        ("classifier.weight", (h, cfg.num_classes)),
        ("classifier.bias", (cfg.num_classes,)),
        ("mlm.bias", (cfg.vocab_size,)),
    ]
    return shapes


class ModelParams:
    """Ordered collection of named :class:`Parameter` objects."""

    def __init__(self, config: ModelConfig, params: dict[str, Parameter]):
        expected = param_shapes(config)
        if [n for n, _ in expected] != list(params):
            raise ShapeError("parameter names do not match the model configuration")
        for name, shape in expected:
            if params[name].shape != shape:
                raise ShapeError(f"{name}: expected shape {shape}, got {params[name].shape}")
        self.config = config
        self._params = params

    @classmethod
    def initialize(cls, config: ModelConfig, seed: int = 0, dtype=np.float32) -> "ModelParams":
        rng = np.random.default_rng(seed)
        params = {}
        for name, shape in param_shapes(config):
            if name.endswith(".gain"):
                value = np.ones(shape)
            elif len(shape) == 1:
                value = np.zeros(shape)
            else:
                value = _truncated_normal(rng, shape, INIT_STD)
            params[name] = Parameter(value, name, dtype=dtype)
        return cls(config, params)

    @classmethod
    def from_arrays(cls, config: ModelConfig, arrays: dict[str, np.ndarray], dtype=np.float32) -> "ModelParams":
        return cls(config, {n: Parameter(np.array(a, dtype=dtype), n) for n, a in arrays.items()})

    def __getitem__(self, name: str) -> Parameter:
        return self._params[name]

    def __iter__(self) -> Iterator[Parameter]:
        return iter(self._params.values())

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    @property
    def dtype(self):
        return self._params["embeddings.token"].dtype

    def arrays(self) -> dict[str, np.ndarray]:
        return {n: p.data for n, p in self._params.items()}

    def copy(self, dtype=None) -> "ModelParams":
        dtype = dtype or self.dtype
        return ModelParams.from_arrays(self.config, {n: a.copy() for n, a in self.arrays().items()}, dtype)

    def zero_grad(self) -> None:
        for p in self:
            p.zero_grad()

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self)


def batch_arrays(batch: Sequence[Encoding], max_seq: int) -> tuple[np.ndarray, np.ndarray]:
    if not batch:
        raise ShapeError("empty batch")
    for enc in batch:
        if len(enc.ids) != max_seq:
            raise ShapeError(f"encoding length {len(enc.ids)} does not match max_seq {max_seq}")
    ids = np.array([enc.ids for enc in batch], dtype=np.int64)
    mask = np.array([enc.attention_mask for enc in batch], dtype=np.int64)
    return ids, mask


def _dense(x: Tensor, params: ModelParams, prefix: str) -> Tensor:
    return T.add(T.matmul(x, params[prefix + ".weight"]), params[prefix + ".bias"])


def encode_tensors(
    ids: np.ndarray,
    mask: np.ndarray,
    params: ModelParams,
    rng: np.random.Generator | None = None,
    keep_attention: bool = False,
) -> tuple[Tensor, list[np.ndarray]]:
    """Run the encoder stack on id/mask arrays; returns hidden states [b, s, h].

    ``rng`` switches dropout on (train mode); ``None`` means eval mode.
    """
    cfg = params.config
    b, s = ids.shape
    if s > cfg.max_seq:
        raise ShapeError(f"sequence length {s} exceeds max_seq {cfg.max_seq}")
    nh, d = cfg.num_heads, cfg.head_size
    rate = cfg.dropout_rate

    x = T.embedding(params["embeddings.token"], ids)
    x = T.add(x, T.take(params["embeddings.position"], slice(0, s)))
    x = T.dropout(x, rate, rng)

    # additive key mask, broadcast over heads and query positions
    key_mask = np.where(mask[:, None, None, :] > 0, 0.0, MASK_VALUE).astype(params.dtype)
    attention = []

    def heads(t: Tensor) -> Tensor:
        return T.transpose(T.reshape(t, (b, s, nh, d)), (0, 2, 1, 3))

    for layer in range(cfg.num_layers):
        p = f"layers.{layer}."
        q = heads(_dense(x, params, p + "attention.query"))
        k = heads(T.matmul(x, params[p + "attention.key.weight"]))
        v = heads(_dense(x, params, p + "attention.value"))
        scores = T.scale(T.matmul(q, T.transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(d))
        weights = T.softmax(T.add_constant(scores, key_mask))
        if keep_attention:
            attention.append(weights.data)
        ctx = T.reshape(T.transpose(T.matmul(weights, v), (0, 2, 1, 3)), (b, s, cfg.hidden_size))
        attn_out = T.dropout(_dense(ctx, params, p + "attention.output"), rate, rng)
        x = T.layer_norm(T.add(x, attn_out), params[p + "attention_norm.gain"], params[p + "attention_norm.bias"], LN_EPS)

        ff = T.gelu(_dense(x, params, p + "ffn.in"))
        ff = T.dropout(_dense(ff, params, p + "ffn.out"), rate, rng)
        x = T.layer_norm(T.add(x, ff), params[p + "ffn_norm.gain"], params[p + "ffn_norm.bias"], LN_EPS)

    return x, attention


def pool(hidden: Tensor, params: ModelParams) -> Tensor:
    cls_state = T.take(hidden, (slice(None), 0))
    return T.tanh(_dense(cls_state, params, "pooler"))


def classifier_logits(pooled: Tensor, params: ModelParams) -> Tensor:
    return _dense(pooled, params, "classifier")


def _mode_rng(mode: str, seed: int) -> np.random.Generator | None:
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    return np.random.default_rng(seed) if mode == "train" else None


def forward_encode(
    batch: Sequence[Encoding], params: ModelParams, mode: str = "eval", seed: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """Hidden states [b, max_seq, hidden] and pooled [CLS] vectors [b, hidden]."""
    ids, mask = batch_arrays(batch, params.config.max_seq)
    hidden, _ = encode_tensors(ids, mask, params, _mode_rng(mode, seed))
    return hidden.data, pool(hidden, params).data


def attention_weights(batch: Sequence[Encoding], params: ModelParams) -> list[np.ndarray]:
    """Per-layer eval-mode attention weights, each [b, heads, max_seq, max_seq]."""
    ids, mask = batch_arrays(batch, params.config.max_seq)
    _, att = encode_tensors(ids, mask, params, None, keep_attention=True)
    return att


def classify_tensor(ids, mask, params, rng=None) -> Tensor:
    hidden, _ = encode_tensors(ids, mask, params, rng)
    return classifier_logits(pool(hidden, params), params)


def classify(batch: Sequence[Encoding], params: ModelParams) -> np.ndarray:
    """Eval-mode class logits [b, num_classes]."""
    ids, mask = batch_arrays(batch, params.config.max_seq)
    return classify_tensor(ids, mask, params).data


def _flatten_positions(batch_size: int, masked_positions: Sequence[Sequence[int]], mask: np.ndarray):
    if len(masked_positions) != batch_size:
        raise ShapeError(f"{len(masked_positions)} position lists for a batch of {batch_size}")
    rows, cols = [], []
    for b, positions in enumerate(masked_positions):
        length = int(mask[b].sum())
        for pos in positions:
            if not 0 < pos < length - 1:
                raise InvalidIdError(f"masked position {pos} outside the maskable range of example {b}")
            rows.append(b)
            cols.append(pos)
    return np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64)


def mlm_tensor(ids, mask, masked_positions, params, rng=None) -> Tensor:
    rows, cols = _flatten_positions(ids.shape[0], masked_positions, mask)
    if rows.size == 0:
        return Tensor(np.zeros((0, params.config.vocab_size), dtype=params.dtype))
    hidden, _ = encode_tensors(ids, mask, params, rng)
    picked = T.take(hidden, (rows, cols))
    table_t = T.transpose(params["embeddings.token"], (1, 0))
    return T.add(T.matmul(picked, table_t), params["mlm.bias"])


def mlm_forward(
    batch: Sequence[Encoding],
    masked_positions: Sequence[Sequence[int]],
    params: ModelParams,
    mode: str = "eval",
    seed: int = 0,
) -> np.ndarray:
    """Vocabulary logits [total_masked, vocab_size] through the tied embedding table."""
    ids, mask = batch_arrays(batch, params.config.max_seq)
    return mlm_tensor(ids, mask, masked_positions, params, _mode_rng(mode, seed)).data

