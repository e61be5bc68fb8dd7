"""Frozen decoder-only transformer and its vocabulary embedding table.

The backbone stands in for a pretrained language model: pre-norm blocks
(causal self-attention + gelu MLP), learned positional embeddings, and a
final layer norm. Every parameter is created with trainable=False, either
from a seeded Gaussian or from a checkpoint, so training can never touch it.
The vocabulary table doubles as the prototype source for patch
reprogramming, and a deterministic FNV-1a hash tokenizer replaces a real
BPE vocabulary.
"""

import re
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .checkpoint import load_checkpoint
from .errors import CheckpointError, ConfigError, ShapeError
from .tensor import ParamDict, Tensor

INIT_STD = 0.02
NEG_MASK = -1e30  # additive pre-softmax mask; exp() underflows cleanly

_TOKEN_RE = re.compile(r"[a-z0-9_]+")

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_U64 = 1 << 64


def fnv1a_64(text):
    """FNV-1a 64-bit hash of a UTF-8 string; stable across platforms."""
    h = FNV_OFFSET
    for byte in text.encode("utf-8"):
        h ^= byte
        h = (h * FNV_PRIME) % _U64
    return h


def tokenize(text, vocab_size):
    """Lowercase, split on whitespace/punctuation, hash to ids in [1, V).

    Id 0 is reserved for padding and never produced.
    """
    return [1 + fnv1a_64(tok) % (vocab_size - 1) for tok in _TOKEN_RE.findall(text.lower())]


@dataclass
class BackboneConfig:
    vocab_size: int = 1000
    hidden: int = 128
    n_layers: int = 4
    n_heads: int = 4
    max_seq: int = 256
    seed: int = 0

    def __post_init__(self):
        if self.hidden % self.n_heads != 0:
            raise ConfigError(
                f"hidden dim {self.hidden} not divisible by n_heads {self.n_heads}"
            )
        if min(self.vocab_size, self.hidden, self.n_layers, self.n_heads, self.max_seq) < 1:
            raise ConfigError("all backbone dimensions must be >= 1")


@dataclass
class PromptText:
    dataset_desc: str
    task_desc: str
    stats_desc: str

    def joined(self):
        return " ".join((self.dataset_desc, self.task_desc, self.stats_desc))


class Backbone:
    """Frozen GPT-style stack operating directly on embedding sequences."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.params = ParamDict()
        rng = np.random.default_rng(cfg.seed)
        d = cfg.hidden

        def gauss(name, shape):
            return self.params.add(name, rng.normal(0.0, INIT_STD, size=shape), trainable=False)

        def ones(name, shape):
            return self.params.add(name, np.ones(shape), trainable=False)

        def zeros(name, shape):
            return self.params.add(name, np.zeros(shape), trainable=False)

        self.vocab = gauss("backbone.vocab", (cfg.vocab_size, d))
        self.pos = gauss("backbone.pos", (cfg.max_seq, d))
        self.blocks = []
        for i in range(cfg.n_layers):
            pre = f"backbone.block{i}."
            self.blocks.append(
                {
                    "ln1_g": ones(pre + "ln1_g", (d,)),
                    "ln1_b": zeros(pre + "ln1_b", (d,)),
                    "w_q": gauss(pre + "w_q", (d, d)),
                    "b_q": zeros(pre + "b_q", (d,)),
                    "w_k": gauss(pre + "w_k", (d, d)),
                    "b_k": zeros(pre + "b_k", (d,)),
                    "w_v": gauss(pre + "w_v", (d, d)),
                    "b_v": zeros(pre + "b_v", (d,)),
                    "w_proj": gauss(pre + "w_proj", (d, d)),
                    "b_proj": zeros(pre + "b_proj", (d,)),
                    "ln2_g": ones(pre + "ln2_g", (d,)),
                    "ln2_b": zeros(pre + "ln2_b", (d,)),
                    "w_fc": gauss(pre + "w_fc", (d, 4 * d)),
                    "b_fc": zeros(pre + "b_fc", (4 * d,)),
                    "w_out": gauss(pre + "w_out", (4 * d, d)),
                    "b_out": zeros(pre + "b_out", (d,)),
                }
            )
        self.ln_f_g = ones("backbone.ln_f_g", (d,))
        self.ln_f_b = zeros("backbone.ln_f_b", (d,))
        self._mask_cache = {}

    @classmethod
    def from_checkpoint(cls, path):
        """Build a backbone whose config and weights come from a checkpoint."""
        meta, tensors = load_checkpoint(path)
        if "backbone_config" not in meta:
            raise CheckpointError("checkpoint manifest lacks 'backbone_config'")
        cfg = BackboneConfig(**meta["backbone_config"])
        model = cls(cfg)
        for p in model.params:
            if p.name not in tensors:
                raise CheckpointError(f"checkpoint missing parameter {p.name}")
            arr, _ = tensors[p.name]
            if arr.shape != p.tensor.data.shape:
                raise CheckpointError(
                    f"shape mismatch for {p.name}: {arr.shape} vs {p.tensor.data.shape}"
                )
            p.tensor.data[...] = arr
        return model

    def _causal_mask(self, length):
        if length not in self._mask_cache:
            m = np.triu(np.full((length, length), NEG_MASK), k=1)
            self._mask_cache[length] = m[None, None]
        return self._mask_cache[length]

    def embed_tokens(self, ids):
        """Rows of the frozen vocabulary table; returns a constant [L, D] Tensor."""
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= self.cfg.vocab_size):
            raise IndexError(f"token ids must lie in [0, {self.cfg.vocab_size})")
        rows = self.vocab.tensor.data[ids] if ids.size else np.zeros((0, self.cfg.hidden))
        return Tensor._wrap(rows.copy(), ())

    def forward(self, x):
        """Run the stack on [n, L, D] (or [L, D]) embeddings; same-shape output."""
        squeeze = x.data.ndim == 2
        if squeeze:
            x = T.reshape(x, (1,) + x.data.shape)
        n, length, d = x.data.shape
        if length > self.cfg.max_seq:
            raise ShapeError(f"sequence length {length} exceeds max_seq {self.cfg.max_seq}")
        heads = self.cfg.n_heads
        dh = d // heads
        scale = 1.0 / np.sqrt(dh)
        pos = Tensor._wrap(self.pos.tensor.data[:length][None], ())
        h = T.add(x, pos)
        mask = Tensor._wrap(self._causal_mask(length), ())
        def split_heads(z):
            return T.transpose(T.reshape(z, (n, length, heads, dh)), (0, 2, 1, 3))

        for blk in self.blocks:
            a = T.layer_norm(h, blk["ln1_g"].tensor, blk["ln1_b"].tensor)
            q = split_heads(T.add(T.matmul(a, blk["w_q"].tensor), blk["b_q"].tensor))
            k = split_heads(T.add(T.matmul(a, blk["w_k"].tensor), blk["b_k"].tensor))
            v = split_heads(T.add(T.matmul(a, blk["w_v"].tensor), blk["b_v"].tensor))
            scores = T.mul(T.matmul(q, T.swap_last(k)), scale)
            att = T.softmax(T.add(scores, mask), axis=-1)
            ctx = T.matmul(att, v)  # [n, heads, L, dh]
            ctx = T.reshape(T.transpose(ctx, (0, 2, 1, 3)), (n, length, d))
            h = T.add(h, T.add(T.matmul(ctx, blk["w_proj"].tensor), blk["b_proj"].tensor))
            m = T.layer_norm(h, blk["ln2_g"].tensor, blk["ln2_b"].tensor)
            m = T.gelu(T.add(T.matmul(m, blk["w_fc"].tensor), blk["b_fc"].tensor))
            h = T.add(h, T.add(T.matmul(m, blk["w_out"].tensor), blk["b_out"].tensor))
        h = T.layer_norm(h, self.ln_f_g.tensor, self.ln_f_b.tensor)
        if squeeze:
            h = T.reshape(h, (length, d))
        return h

    def forward_with_prefix(self, prefix, body):
        """Concatenate prefix and body along the sequence, keep body outputs.

        Shapes: prefix [n, L_pref, D] (possibly L_pref=0), body [n, P, D];
        2-D inputs are treated as a single sequence. Output matches body.
        """
        squeeze = body.data.ndim == 2
        if squeeze:
            body = T.reshape(body, (1,) + body.data.shape)
            if prefix is not None and prefix.data.ndim == 2:
                prefix = T.reshape(prefix, (1,) + prefix.data.shape)
        p = body.data.shape[1]
        if prefix is None or prefix.data.shape[1] == 0:
            seq = body
        else:
            seq = T.concat([prefix, body], axis=1)
        out = self.forward(seq)
        out = out[:, -p:, :]
        if squeeze:
            out = T.reshape(out, out.data.shape[1:])
        return out
