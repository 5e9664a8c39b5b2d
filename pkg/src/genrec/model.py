"""Encoder-decoder Transformer over serialized user/item token sequences.

The encoder input at position j is the sum of a token embedding, a learned
positional embedding, and either the user-ID or the item-ID embedding of the
word the token came from (special tokens get neither). The two ID tables are
separate parameters. The decoder sees token + positional embeddings only and
generates the masked item's tokens auto-regressively.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from . import numerics as nx
from .numerics import Parameter
from .tokenizer import PAD_ID

NEG_INF = -1e9


@dataclass(frozen=True)
class GenRecConfig:
    vocab_size: int
    num_users: int
    num_items: int
    d_model: int = 64
    num_encoder_layers: int = 2
    num_decoder_layers: int = 2
    num_heads: int = 4
    ffn_dim: int = 256
    max_length: int = 512
    dropout: float = 0.1
    positions: str = "from_end"  # or "absolute"
    pos_init: str = "sinusoidal"  # or "normal"
    pos_scale: float = 0.1

    def __post_init__(self):
        for f in ("vocab_size", "num_users", "num_items", "d_model", "num_encoder_layers",
                  "num_decoder_layers", "num_heads", "ffn_dim"):
            if getattr(self, f) < 1:
                raise ValueError(f"{f} must be at least 1")
        if self.d_model % self.num_heads:
            raise ValueError(f"d_model {self.d_model} not divisible by num_heads {self.num_heads}")
        if self.max_length < 4:
            raise ValueError("max_length must be at least 4")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.positions not in ("from_end", "absolute"):
            raise ValueError(f"positions must be 'from_end' or 'absolute', got {self.positions!r}")
        if self.pos_init not in ("sinusoidal", "normal"):
            raise ValueError(f"pos_init must be 'sinusoidal' or 'normal', got {self.pos_init!r}")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        types = {f.name: f.type for f in fields(cls)}
        conv = {"float": float, "int": int, "str": str}
        return cls(**{k: conv[types[k]](v) for k, v in d.items() if k in types})


def _attn_shapes(prefix, d):
    return {f"{prefix}.{p}.{k}": s for p in "qkvo" for k, s in (("w", (d, d)), ("b", (d,)))}


def _ln_shapes(prefix, d):
    return {f"{prefix}.g": (d,), f"{prefix}.b": (d,)}


def _ffn_shapes(prefix, d, f):
    return {f"{prefix}.w1": (d, f), f"{prefix}.b1": (f,), f"{prefix}.w2": (f, d), f"{prefix}.b2": (d,)}


def param_shapes(config):
    """Ordered mapping of parameter name to shape."""
    c, d = config, config.d_model
    shapes = {
        "emb.token": (c.vocab_size, d),
        "emb.pos": (c.max_length, d),
        "emb.user": (c.num_users, d),
        "emb.item": (c.num_items, d),
    }
    for i in range(c.num_encoder_layers):
        p = f"enc.{i}"
        shapes.update(_ln_shapes(f"{p}.ln1", d))
        shapes.update(_attn_shapes(f"{p}.self", d))
        shapes.update(_ln_shapes(f"{p}.ln2", d))
        shapes.update(_ffn_shapes(f"{p}.ffn", d, c.ffn_dim))
    shapes.update(_ln_shapes("enc.ln_f", d))
    for i in range(c.num_decoder_layers):
        p = f"dec.{i}"
        shapes.update(_ln_shapes(f"{p}.ln1", d))
        shapes.update(_attn_shapes(f"{p}.self", d))
        shapes.update(_ln_shapes(f"{p}.ln2", d))
        shapes.update(_attn_shapes(f"{p}.cross", d))
        shapes.update(_ln_shapes(f"{p}.ln3", d))
        shapes.update(_ffn_shapes(f"{p}.ffn", d, c.ffn_dim))
    shapes.update(_ln_shapes("dec.ln_f", d))
    shapes["lm_head.w"] = (d, c.vocab_size)
    return shapes


def param_count(config):
    return int(sum(np.prod(s) for s in param_shapes(config).values()))


def sinusoidal_table(n, d):
    pos = np.arange(n)[:, None]
    freq = np.exp(-np.log(10_000.0) * (np.arange(0, d, 2) / d))
    table = np.zeros((n, d))
    table[:, 0::2] = np.sin(pos * freq)
    table[:, 1::2] = np.cos(pos * freq[: d // 2])
    return table


@dataclass
class Batch:
    """Padded encoder inputs. ``user_idx``/``item_idx`` are -1 where untagged."""

    ids: np.ndarray
    user_idx: np.ndarray
    item_idx: np.ndarray
    pad_mask: np.ndarray  # True at padding

    def __len__(self):
        return self.ids.shape[0]


def collate(seqs):
    """Pad a list of ``TokenSequence`` to a common length."""
    n = max(len(s.ids) for s in seqs)
    ids = np.full((len(seqs), n), PAD_ID, dtype=np.int64)
    uidx = np.full((len(seqs), n), -1, dtype=np.int64)
    iidx = np.full((len(seqs), n), -1, dtype=np.int64)
    for b, s in enumerate(seqs):
        ids[b, :len(s.ids)] = s.ids
        for j, tag in enumerate(s.tags):
            if tag.kind == "user":
                uidx[b, j] = tag.index
            elif tag.kind == "item":
                iidx[b, j] = tag.index
    return Batch(ids, uidx, iidx, ids == PAD_ID)


def pad_targets(targets, length=None):
    n = length or max(len(t) for t in targets)
    out = np.full((len(targets), n), PAD_ID, dtype=np.int64)
    for b, t in enumerate(targets):
        out[b, :len(t)] = t
    return out


class GenRecModel:
    def __init__(self, config, seed=0, dtype=np.float32, params=None):
        self.config = config
        self.dtype = np.dtype(dtype)
        self.training = False
        self.rng = None  # dropout randomness; set by the training loop
        if params is None:
            params = self._init_params(np.random.default_rng(seed))
        self.params = params

    def _init_params(self, rng):
        params = {}
        for name, shape in param_shapes(self.config).items():
            leaf = name.rsplit(".", 1)[-1]
            if name == "emb.pos" and self.config.pos_init == "sinusoidal":
                data = sinusoidal_table(*shape) * self.config.pos_scale
            elif leaf == "g":
                data = np.ones(shape)
            elif leaf.startswith("b"):
                data = np.zeros(shape)
            else:
                data = rng.normal(0.0, 0.02, size=shape)
            params[name] = Parameter(name, data, dtype=self.dtype)
        return params

    def parameters(self):
        return list(self.params.values())

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def train(self, mode=True):
        self.training = mode
        return self

    def eval(self):
        return self.train(False)

    def _dropout(self, x):
        if not self.training:
            return x
        return nx.dropout(x, self.config.dropout, self.rng)

    # building blocks

    def _linear(self, x, prefix):
        return x @ self.params[f"{prefix}.w"] + self.params[f"{prefix}.b"]

    def _ln(self, x, prefix):
        return nx.layer_norm(x, self.params[f"{prefix}.g"], self.params[f"{prefix}.b"])

    def _split_heads(self, x):
        b, n, d = x.shape
        h = self.config.num_heads
        return x.reshape(b, n, h, d // h).transpose(1, 2)

    def _attention(self, q_in, kv_in, prefix, key_valid, causal=False):
        """Multi-head attention. ``key_valid`` is a bool array [B, Lk]."""
        b, lq, d = q_in.shape
        lk = kv_in.shape[1]
        h = self.config.num_heads
        q = self._split_heads(self._linear(q_in, f"{prefix}.q"))
        k = self._split_heads(self._linear(kv_in, f"{prefix}.k"))
        v = self._split_heads(self._linear(kv_in, f"{prefix}.v"))
        scores = (q @ k.transpose(-2, -1)) * (1.0 / np.sqrt(d // h))
        allowed = np.broadcast_to(key_valid[:, None, None, :], (b, 1, lq, lk))
        if causal:
            allowed = allowed & np.tril(np.ones((lq, lk), dtype=bool))
        bias = np.where(allowed, 0.0, NEG_INF).astype(self.dtype)
        probs = nx.softmax(scores + bias)
        # rows with no visible key attend to nothing rather than uniformly to padding
        probs = probs * allowed.astype(self.dtype)
        probs = self._dropout(probs)
        ctx = (probs @ v).transpose(1, 2).reshape(b, lq, d)
        return self._linear(ctx, f"{prefix}.o")

    def _ffn(self, x, prefix):
        hidden = nx.gelu(x @ self.params[f"{prefix}.w1"] + self.params[f"{prefix}.b1"])
        hidden = self._dropout(hidden)
        return hidden @ self.params[f"{prefix}.w2"] + self.params[f"{prefix}.b2"]

    # public forward pieces

    def embed(self, batch):
        """Token + positional + (user or item) ID embedding, shape [B, L, d]."""
        c = self.config
        n = batch.ids.shape[1]
        if n > c.max_length:
            raise ValueError(f"sequence length {n} exceeds max_length {c.max_length}")
        x = nx.embedding(self.params["emb.token"], batch.ids)
        x = x + nx.embedding(self.params["emb.pos"], self._positions(batch))
        is_user = (batch.user_idx >= 0)
        is_item = (batch.item_idx >= 0)
        if np.any(is_user & is_item):
            raise ValueError("a token cannot carry both a user and an item tag")
        if is_user.any():
            u = nx.embedding(self.params["emb.user"], np.where(is_user, batch.user_idx, 0))
            x = x + u * is_user[..., None].astype(self.dtype)
        if is_item.any():
            t = nx.embedding(self.params["emb.item"], np.where(is_item, batch.item_idx, 0))
            x = x + t * is_item[..., None].astype(self.dtype)
        return x

    def _positions(self, batch):
        # "from_end" counts back from [END], so the slots around an appended
        # [MASK] share positions regardless of history length
        n = batch.ids.shape[1]
        if self.config.positions == "absolute":
            return np.arange(n)
        true_len = (~batch.pad_mask).sum(axis=1, keepdims=True)
        return np.clip(true_len - 1 - np.arange(n), 0, None)

    def encode(self, x, pad_mask):
        valid = ~pad_mask
        for i in range(self.config.num_encoder_layers):
            p = f"enc.{i}"
            h = self._ln(x, f"{p}.ln1")
            x = x + self._attention(h, h, f"{p}.self", valid)
            x = x + self._ffn(self._ln(x, f"{p}.ln2"), f"{p}.ffn")
        return self._ln(x, "enc.ln_f")

    def decode(self, prefix_ids, enc_states, enc_pad_mask):
        """Next-token logits [B, T, V] for each position of ``prefix_ids`` [B, T]."""
        prefix_ids = np.asarray(prefix_ids)
        t = prefix_ids.shape[1]
        if t > self.config.max_length:
            raise ValueError(f"decoder prefix length {t} exceeds max_length {self.config.max_length}")
        y = nx.embedding(self.params["emb.token"], prefix_ids)
        y = y + nx.embedding(self.params["emb.pos"], np.arange(t))
        self_valid = np.ones(prefix_ids.shape, dtype=bool)
        enc_valid = ~enc_pad_mask
        for i in range(self.config.num_decoder_layers):
            p = f"dec.{i}"
            h = self._ln(y, f"{p}.ln1")
            y = y + self._attention(h, h, f"{p}.self", self_valid, causal=True)
            y = y + self._attention(self._ln(y, f"{p}.ln2"), enc_states, f"{p}.cross", enc_valid)
            y = y + self._ffn(self._ln(y, f"{p}.ln3"), f"{p}.ffn")
        y = self._ln(y, "dec.ln_f")
        return y @ self.params["lm_head.w"]

    def encode_batch(self, batch):
        return self.encode(self.embed(batch), batch.pad_mask)

    def loss(self, batch, targets):
        """Teacher-forced cross-entropy; ``targets`` are [BEG] .. [END] id lists."""
        if any(len(t) < 2 for t in targets):
            raise ValueError("every target needs at least [BEG] and one token")
        tgt = pad_targets(targets)
        enc = self.encode_batch(batch)
        logits = self.decode(tgt[:, :-1], enc, batch.pad_mask)
        return nx.cross_entropy(logits, tgt[:, 1:], ignore_index=PAD_ID)

    def training_loss(self, example):
        return self.loss(collate([example.input]), [example.target_tokens])
