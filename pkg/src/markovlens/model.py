"""Transformer forward pass: token + positional embeddings, single- or
multi-head causal softmax attention, ReLU feed-forward block, and a linear
prediction head, all in float64 numpy with no layer norm or dropout.

Binary vocabularies use the reduced parameterization: one embedding direction
`e` (token 1 minus token 0, with token 0's embedding absorbed into the
positional encodings), a head vector `a`, and a scalar bias, predicting
P(next = 1) through a sigmoid. Vocabularies with S >= 3 carry full S x d
embedding and head matrices with a softmax head. Weight tying aliases the head
onto the embedding storage, so tied models have d (or S*d) fewer parameters.

All parameters live in one flat float64 vector; named fields are numpy views
into it. This makes flatten/unflatten bit-exact, makes tied reads always see
the current embedding, and gives gradients and Hessians a fixed coordinate
order: [emb, pos_1..pos_N, per layer (W_Q, W_K, W_V, W_O, W_1, W_2), head
(untied only), bias].
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import BinaryIO

import numpy as np


@dataclass(frozen=True)
class ModelConfig:
    embed_dim: int
    attn_dim: int
    ff_dim: int
    context_len: int
    n_layers: int = 1
    vocab_size: int = 2
    tied: bool = False
    n_heads: int = 1

    def __post_init__(self) -> None:
        for name in ("embed_dim", "attn_dim", "ff_dim", "context_len", "n_layers", "n_heads"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.vocab_size < 2:
            raise ValueError("vocab_size must be >= 2")
        if self.attn_dim % self.n_heads != 0:
            raise ValueError("attn_dim must be divisible by n_heads")

    @property
    def is_binary(self) -> bool:
        return self.vocab_size == 2

    def to_dict(self) -> dict:
        return {
            "embed_dim": self.embed_dim,
            "attn_dim": self.attn_dim,
            "ff_dim": self.ff_dim,
            "context_len": self.context_len,
            "n_layers": self.n_layers,
            "vocab_size": self.vocab_size,
            "tied": self.tied,
            "n_heads": self.n_heads,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        return cls(**data)


LAYER_FIELDS = ("W_Q", "W_K", "W_V", "W_O", "W_1", "W_2")


def _layout(config: ModelConfig) -> dict[str, tuple[int, int, tuple[int, ...]]]:
    """Name -> (start, stop, shape) table for the flat parameter vector."""
    d, m, r = config.embed_dim, config.attn_dim, config.ff_dim
    n, s = config.context_len, config.vocab_size
    emb_shape = (d,) if config.is_binary else (s, d)
    bias_shape = () if config.is_binary else (s,)
    shapes: list[tuple[str, tuple[int, ...]]] = [("emb", emb_shape), ("pos", (n, d))]
    for layer in range(config.n_layers):
        for name, shape in (
            ("W_Q", (m, d)),
            ("W_K", (m, d)),
            ("W_V", (m, d)),
            ("W_O", (d, m)),
            ("W_1", (r, d)),
            ("W_2", (d, r)),
        ):
            shapes.append((f"layers.{layer}.{name}", shape))
    if not config.tied:
        shapes.append(("head", emb_shape))
    shapes.append(("bias", bias_shape))
    table = {}
    offset = 0
    for name, shape in shapes:
        size = int(np.prod(shape)) if shape else 1
        table[name] = (offset, offset + size, shape)
        offset += size
    return table


def flat_dim(config: ModelConfig) -> int:
    table = _layout(config)
    return max(stop for _, stop, _ in table.values())


class ParamSet:
    """All trainable weights for one ModelConfig, stored as a flat vector.

    Field accessors return live views; in tied mode `head` is the same storage
    as `emb`, so updating the embedding in place is immediately visible through
    the head.
    """

    def __init__(self, config: ModelConfig, flat: np.ndarray | None = None):
        self.config = config
        self._table = _layout(config)
        dim = flat_dim(config)
        if flat is None:
            flat = np.zeros(dim)
        flat = np.ascontiguousarray(flat, dtype=np.float64)
        if flat.shape != (dim,):
            raise ValueError(f"flat vector must have shape ({dim},), got {flat.shape}")
        self._flat = flat

    # -- views ------------------------------------------------------------
    def _view(self, name: str) -> np.ndarray:
        start, stop, shape = self._table[name]
        return self._flat[start:stop].reshape(shape)

    @property
    def emb(self) -> np.ndarray:
        return self._view("emb")

    @property
    def pos(self) -> np.ndarray:
        return self._view("pos")

    @property
    def head(self) -> np.ndarray:
        if self.config.tied:
            return self._view("emb")
        return self._view("head")

    @property
    def bias(self) -> np.ndarray:
        return self._view("bias")

    def layer(self, index: int, name: str) -> np.ndarray:
        return self._view(f"layers.{index}.{name}")

    # -- flat vector ------------------------------------------------------
    @property
    def dim(self) -> int:
        return self._flat.size

    @property
    def flat(self) -> np.ndarray:
        """Live flat vector (mutating it mutates the parameters)."""
        return self._flat

    def flatten(self) -> np.ndarray:
        return self._flat.copy()

    def with_flat(self, flat: np.ndarray) -> "ParamSet":
        return ParamSet(self.config, flat)

    def copy(self) -> "ParamSet":
        return ParamSet(self.config, self._flat.copy())

    def slices(self) -> dict[str, slice]:
        """Flat-vector slice per named field (tied models have no 'head' slot)."""
        return {name: slice(start, stop) for name, (start, stop, _) in self._table.items()}

    def offsets(self) -> dict[str, list[int]]:
        return {name: [start, stop] for name, (start, stop, _) in self._table.items()}


def init_params(config: ModelConfig, seed: int) -> ParamSet:
    """Gaussian(0, 0.02) weights with zero bias, deterministic per seed."""
    rng = np.random.Generator(np.random.Philox(key=seed))
    flat = rng.normal(0.0, 0.02, size=flat_dim(config))
    params = ParamSet(config, flat)
    params.bias[...] = 0.0
    return params


# -- forward pass ----------------------------------------------------------

@dataclass
class LayerTrace:
    x_in: np.ndarray  # (B, T, d) layer input
    q: np.ndarray  # (B, H, T, mh)
    k: np.ndarray  # (B, H, T, mh)
    v: np.ndarray  # (B, H, T, mh)
    att: np.ndarray  # (B, H, T, T), rows sum to 1, zero above the diagonal
    ctx: np.ndarray  # (B, T, m) merged attention context
    y: np.ndarray  # (B, T, d) after attention + skip
    pre_act: np.ndarray  # (B, T, r) feed-forward pre-activation
    z: np.ndarray  # (B, T, d) layer output


@dataclass
class ForwardTrace:
    tokens: np.ndarray  # (B, T)
    x0: np.ndarray  # (B, T, d) input embeddings
    layers: list[LayerTrace] = field(default_factory=list)
    logits: np.ndarray | None = None  # (B, T) binary / (B, T, S) general
    preds: np.ndarray | None = None  # same shape as logits

    @property
    def attention_weights(self) -> np.ndarray:
        """First-layer attention pattern, shape (B, H, T, T)."""
        return self.layers[0].att


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax_lastaxis_canonical(logits: np.ndarray) -> np.ndarray:
    """Softmax over the last axis with a label-order-independent denominator.

    The exponentials are sorted before summation, so relabeling the vocabulary
    permutes the outputs bit-exactly.
    """
    shifted = logits - logits.max(axis=-1, keepdims=True)
    ex = np.exp(shifted)
    denom = np.sort(ex, axis=-1).sum(axis=-1, keepdims=True)
    return ex / denom


def _split_heads(x: np.ndarray, n_heads: int) -> np.ndarray:
    b, t, m = x.shape
    return x.reshape(b, t, n_heads, m // n_heads).transpose(0, 2, 1, 3)


def _merge_heads(x: np.ndarray) -> np.ndarray:
    b, h, t, mh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, t, h * mh)


def forward(params: ParamSet, tokens: np.ndarray) -> ForwardTrace:
    """Run the model on a (B, T) or (T,) token array and record every
    intermediate needed for the backward pass."""
    config = params.config
    tokens = np.asarray(tokens, dtype=np.int64)
    single = tokens.ndim == 1
    if single:
        tokens = tokens[None, :]
    b, t = tokens.shape
    if t > config.context_len:
        raise ValueError(f"sequence length {t} exceeds context {config.context_len}")
    if tokens.min() < 0 or tokens.max() >= config.vocab_size:
        raise ValueError("token out of range")

    if config.is_binary:
        x = tokens[:, :, None] * params.emb[None, None, :] + params.pos[None, :t, :]
    else:
        x = params.emb[tokens] + params.pos[None, :t, :]

    trace = ForwardTrace(tokens=tokens, x0=x)
    scale = 1.0 / np.sqrt(config.embed_dim)
    causal = np.triu(np.ones((t, t), dtype=bool), k=1)

    h = x
    for layer in range(config.n_layers):
        w_q, w_k, w_v = (params.layer(layer, n) for n in ("W_Q", "W_K", "W_V"))
        w_o, w_1, w_2 = (params.layer(layer, n) for n in ("W_O", "W_1", "W_2"))
        q = _split_heads(h @ w_q.T, config.n_heads)
        k = _split_heads(h @ w_k.T, config.n_heads)
        v = _split_heads(h @ w_v.T, config.n_heads)
        scores = (q @ k.swapaxes(-1, -2)) * scale
        scores = np.where(causal[None, None], -np.inf, scores)
        scores -= scores.max(axis=-1, keepdims=True)
        att = np.exp(scores)
        att /= att.sum(axis=-1, keepdims=True)
        ctx = _merge_heads(att @ v)
        y = h + ctx @ w_o.T
        pre_act = y @ w_1.T
        z = y + np.maximum(pre_act, 0.0) @ w_2.T
        trace.layers.append(LayerTrace(h, q, k, v, att, ctx, y, pre_act, z))
        h = z

    if config.is_binary:
        logits = h @ params.head + params.bias[()]
        preds = sigmoid(logits)
    else:
        logits = h @ params.head.T + params.bias[None, None, :]
        preds = softmax_lastaxis_canonical(logits)
    trace.logits = logits
    trace.preds = preds
    return trace


def predict_next(params: ParamSet, prefix: np.ndarray) -> np.ndarray:
    """Distribution of the next token after `prefix`, as a probability vector."""
    prefix = np.asarray(prefix, dtype=np.int64)
    if prefix.ndim != 1 or prefix.size < 1:
        raise ValueError("prefix must be a nonempty 1-d token array")
    trace = forward(params, prefix)
    if params.config.is_binary:
        f = float(trace.preds[0, -1])
        return np.array([1.0 - f, f])
    return trace.preds[0, -1].copy()


# -- serialization -----------------------------------------------------------

_MAGIC = "markovlens-params"


def save_params(params: ParamSet, fp: BinaryIO | str) -> None:
    """Write a JSON header line plus the raw little-endian float64 payload."""
    header = {
        "format": _MAGIC,
        "version": 1,
        "config": params.config.to_dict(),
        "tied": params.config.tied,
        "dtype": "<f8",
        "length": params.dim,
        "offsets": params.offsets(),
    }
    payload = params.flat.astype("<f8", copy=False).tobytes()
    if isinstance(fp, str):
        with open(fp, "wb") as handle:
            save_params(params, handle)
        return
    fp.write(json.dumps(header, sort_keys=True).encode("utf-8"))
    fp.write(b"\n")
    fp.write(payload)


def load_params(fp: BinaryIO | str) -> ParamSet:
    if isinstance(fp, str):
        with open(fp, "rb") as handle:
            return load_params(handle)
    raw = fp.read()
    newline = raw.index(b"\n")
    header = json.loads(raw[:newline].decode("utf-8"))
    if header.get("format") != _MAGIC:
        raise ValueError("not a markovlens parameter file")
    config = ModelConfig.from_dict(header["config"])
    flat = np.frombuffer(raw[newline + 1 :], dtype="<f8").astype(np.float64)
    if flat.size != header["length"]:
        raise ValueError("parameter payload length mismatch")
    return ParamSet(config, flat)
