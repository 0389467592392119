"""Transformer building blocks on top of the tape-based tensor core.

Parameters live in a flat, insertion-ordered ``ParamStore`` keyed by
hierarchical names ("enc0.attn.q.w", ...), which keeps checkpointing,
optimizer state, and finite-difference sweeps trivial.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor

NEG_INF = -1e9


@dataclass
class TransformerConfig:
    n_layers: int = 1
    hidden: int = 64
    n_heads: int = 2
    ffn: int = 128
    max_len: int = 64
    dropout: float = 0.1

    def __post_init__(self):
        for field in ("n_layers", "hidden", "n_heads", "ffn", "max_len"):
            if getattr(self, field) < 1:
                raise ValueError(f"{field} must be >= 1, got {getattr(self, field)}")
        if self.hidden % self.n_heads != 0:
            raise ValueError(
                f"hidden ({self.hidden}) must be divisible by n_heads ({self.n_heads})"
            )

    @property
    def head_dim(self) -> int:
        return self.hidden // self.n_heads


class ParamStore:
    """Flat named-parameter container with seeded initializers."""

    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.tensors: dict[str, Tensor] = {}

    def _register(self, name: str, data: np.ndarray) -> Tensor:
        if name in self.tensors:
            raise ValueError(f"duplicate parameter name: {name}")
        t = Tensor(data, requires_grad=True)
        self.tensors[name] = t
        return t

    def linear(self, name: str, fan_in: int, fan_out: int, bias: bool = True):
        bound = 1.0 / np.sqrt(fan_in)
        self._register(f"{name}.w", self.rng.uniform(-bound, bound, (fan_in, fan_out)))
        if bias:
            self._register(f"{name}.b", np.zeros(fan_out))

    def embedding(self, name: str, count: int, dim: int) -> Tensor:
        return self._register(name, self.rng.normal(0.0, 0.02, (count, dim)))

    def layer_norm(self, name: str, dim: int):
        self._register(f"{name}.w", np.ones(dim))
        self._register(f"{name}.b", np.zeros(dim))

    def vector(self, name: str, dim: int, scale: float = 0.02) -> Tensor:
        return self._register(name, self.rng.normal(0.0, scale, (dim,)))

    def zeros(self, name: str, shape) -> Tensor:
        return self._register(name, np.zeros(shape))

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def parameters(self) -> dict[str, Tensor]:
        return self.tensors


def linear(store: ParamStore, name: str, x: Tensor) -> Tensor:
    out = T.matmul(x, store[f"{name}.w"])
    if f"{name}.b" in store:
        out = T.add(out, store[f"{name}.b"])
    return out


def ln(store: ParamStore, name: str, x: Tensor) -> Tensor:
    return T.layer_norm(x, store[f"{name}.w"], store[f"{name}.b"])


def pad_mask(ids: np.ndarray, pad_id: int) -> np.ndarray:
    """Additive key mask (B, 1, 1, T): 0 at real tokens, NEG_INF at pads."""
    m = np.where(ids == pad_id, NEG_INF, 0.0).astype(T.default_dtype())
    return m[:, None, None, :]

def causal_mask(t: int) -> np.ndarray:
    m = np.triu(np.full((t, t), NEG_INF, dtype=T.default_dtype()), k=1)
    return m[None, None, :, :]


def _maybe_dropout(x: Tensor, rate: float, train: bool, rng) -> Tensor:
    if train and rate > 0.0:
        return T.dropout(x, rate, rng)
    return x


def attention(store: ParamStore, name: str, q_in: Tensor, kv_in: Tensor,
              mask: np.ndarray, cfg: TransformerConfig, train: bool, rng) -> Tensor:
    b, tq = q_in.shape[0], q_in.shape[1]
    tk = kv_in.shape[1]
    h, dh = cfg.n_heads, cfg.head_dim

    def split_heads(x, t):
        return T.swapaxes(T.reshape(x, (b, t, h, dh)), 1, 2)

    q = split_heads(linear(store, f"{name}.q", q_in), tq)
    k = split_heads(linear(store, f"{name}.k", kv_in), tk)
    v = split_heads(linear(store, f"{name}.v", kv_in), tk)
    scores = T.matmul(q, T.swapaxes(k, 2, 3)) * (1.0 / np.sqrt(dh))
    scores = T.add(scores, Tensor(mask))
    weights = T.softmax(scores, axis=-1)
    weights = _maybe_dropout(weights, cfg.dropout, train, rng)
    ctx = T.reshape(T.swapaxes(T.matmul(weights, v), 1, 2), (b, tq, cfg.hidden))
    return linear(store, f"{name}.o", ctx)


def ffn(store: ParamStore, name: str, x: Tensor) -> Tensor:
    return linear(store, f"{name}.2", T.relu(linear(store, f"{name}.1", x)))


def init_encoder(store: ParamStore, cfg: TransformerConfig, prefix: str = "enc"):
    store.embedding(f"{prefix}.pos", cfg.max_len, cfg.hidden)
    for i in range(cfg.n_layers):
        base = f"{prefix}{i}"
        for proj in ("q", "k", "v", "o"):
            store.linear(f"{base}.attn.{proj}", cfg.hidden, cfg.hidden)
        store.layer_norm(f"{base}.ln1", cfg.hidden)
        store.linear(f"{base}.ffn.1", cfg.hidden, cfg.ffn)
        store.linear(f"{base}.ffn.2", cfg.ffn, cfg.hidden)
        store.layer_norm(f"{base}.ln2", cfg.hidden)


def init_decoder(store: ParamStore, cfg: TransformerConfig, prefix: str = "dec"):
    store.embedding(f"{prefix}.pos", cfg.max_len, cfg.hidden)
    for i in range(cfg.n_layers):
        base = f"{prefix}{i}"
        for blk in ("self", "cross"):
            for proj in ("q", "k", "v", "o"):
                store.linear(f"{base}.{blk}.{proj}", cfg.hidden, cfg.hidden)
        store.layer_norm(f"{base}.ln1", cfg.hidden)
        store.layer_norm(f"{base}.ln2", cfg.hidden)
        store.linear(f"{base}.ffn.1", cfg.hidden, cfg.ffn)
        store.linear(f"{base}.ffn.2", cfg.ffn, cfg.hidden)
        store.layer_norm(f"{base}.ln3", cfg.hidden)


def _embed(store: ParamStore, pos_name: str, ids: np.ndarray, cfg: TransformerConfig,
           train: bool, rng) -> Tensor:
    t = ids.shape[1]
    if t > cfg.max_len:
        raise ValueError(f"sequence length {t} exceeds max_len {cfg.max_len}")
    x = T.add(T.gather_rows(store["tok"], ids), store[pos_name][0:t])
    return _maybe_dropout(x, cfg.dropout, train, rng)


def encoder_forward(store: ParamStore, cfg: TransformerConfig, ids: np.ndarray,
                    pad_id: int, prefix: str = "enc", train: bool = False,
                    rng=None) -> tuple[Tensor, np.ndarray]:
    """Returns per-position hidden states (B, T, D) and the additive key mask."""
    mask = pad_mask(ids, pad_id)
    x = _embed(store, f"{prefix}.pos", ids, cfg, train, rng)
    for i in range(cfg.n_layers):
        base = f"{prefix}{i}"
        a = attention(store, f"{base}.attn", x, x, mask, cfg, train, rng)
        x = ln(store, f"{base}.ln1", T.add(x, _maybe_dropout(a, cfg.dropout, train, rng)))
        f = ffn(store, f"{base}.ffn", x)
        x = ln(store, f"{base}.ln2", T.add(x, _maybe_dropout(f, cfg.dropout, train, rng)))
    return x, mask


def decoder_forward(store: ParamStore, cfg: TransformerConfig, ids: np.ndarray,
                    enc_states: Tensor, enc_mask: np.ndarray, prefix: str = "dec",
                    train: bool = False, rng=None) -> Tensor:
    """Causally masked decoder; hidden states (B, T, D) before the output head."""
    t = ids.shape[1]
    cmask = causal_mask(t)
    x = _embed(store, f"{prefix}.pos", ids, cfg, train, rng)
    for i in range(cfg.n_layers):
        base = f"{prefix}{i}"
        a = attention(store, f"{base}.self", x, x, cmask, cfg, train, rng)
        x = ln(store, f"{base}.ln1", T.add(x, _maybe_dropout(a, cfg.dropout, train, rng)))
        c = attention(store, f"{base}.cross", x, enc_states, enc_mask, cfg, train, rng)
        x = ln(store, f"{base}.ln2", T.add(x, _maybe_dropout(c, cfg.dropout, train, rng)))
        f = ffn(store, f"{base}.ffn", x)
        x = ln(store, f"{base}.ln3", T.add(x, _maybe_dropout(f, cfg.dropout, train, rng)))
    return x
