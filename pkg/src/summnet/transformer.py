"""Transformer encoder/decoder for the summarization objective.

Scaled dot-product attention softmax(Q K^T / sqrt(d_k)) V with boolean
masks (True = attention allowed), multi-head attention via per-head
projections, sinusoidal positional encoding, and post-sublayer add&norm.
The decoder stacks masked self-attention, cross-attention over the
encoder output, and a position-wise feed-forward per layer; a final
linear layer produces vocabulary logits. Trained with the same mean-NLL
objective as the recurrent models (no pointer, no coverage).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .seq2seq import _uniform, _zeros, sequence_loss, step_loss
from .text_pipeline import START, STOP, UNK

MASKED_SCORE = -1e30  # additive; exp underflows to exactly 0 after softmax
NORM_EPS = 1e-6


@dataclass(frozen=True)
class TransformerConfig:
    d_model: int = 64
    heads: int = 4
    layers: int = 2
    ffn: int = 128
    max_len: int = 256

    def __post_init__(self):
        if min(self.d_model, self.heads, self.layers + 1, self.ffn, self.max_len) <= 0:
            raise ValueError("transformer sizes must be positive")
        if self.d_model % self.heads:
            raise ValueError(f"d_model {self.d_model} not divisible by {self.heads} heads")


def positional_encoding(length: int, d_model: int, max_len: int | None = None) -> np.ndarray:
    """Sinusoidal position matrix: PE(pos,2i)=sin(pos/10000^(2i/d)), odd slots cos."""
    if max_len is not None and length > max_len:
        raise ValueError(f"sequence length {length} exceeds max {max_len}")
    pe = np.zeros((length, d_model))
    pos = np.arange(length)[:, None]
    idx = np.arange(0, d_model, 2)
    angles = pos / np.power(10000.0, idx / d_model)
    pe[:, 0::2] = np.sin(angles)
    pe[:, 1::2] = np.cos(angles[:, : d_model // 2])
    return pe


def causal_mask(n: int) -> np.ndarray:
    """Lower-triangular boolean mask: position t may attend to positions <= t."""
    return np.tril(np.ones((n, n), dtype=bool))


def scaled_dot_attention(Q, K, V, mask=None):
    """softmax(Q K^T / sqrt(d_k)) V; masked positions get -inf before softmax."""
    if K.shape[0] != V.shape[0]:
        raise ag.AutogradError("K and V must have equal row counts")
    d_k = Q.shape[-1]
    scores = ag.scale(Q @ ag.transpose(K), 1.0 / math.sqrt(d_k))
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != scores.shape:
            raise ag.AutogradError(f"mask shape {mask.shape} does not match scores {scores.shape}")
        if not mask.any(axis=1).all():
            raise ag.AutogradError("a query row has no allowed keys")
        scores = scores + Tensor(np.where(mask, 0.0, MASKED_SCORE))
    return ag.softmax(scores) @ V


class MultiHeadParams:
    """Per-head Q/K/V projections plus the output projection."""

    def __init__(self, d_model, heads, rng):
        d_k = d_model // heads
        self.heads = heads
        self.d_k = d_k
        self.W_q = [_uniform(rng, (d_model, d_k)) for _ in range(heads)]
        self.W_k = [_uniform(rng, (d_model, d_k)) for _ in range(heads)]
        self.W_v = [_uniform(rng, (d_model, d_k)) for _ in range(heads)]
        self.W_o = _uniform(rng, (heads * d_k, d_model))

    def params(self, prefix):
        out = {f"{prefix}.W_o": self.W_o}
        for i in range(self.heads):
            out[f"{prefix}.W_q{i}"] = self.W_q[i]
            out[f"{prefix}.W_k{i}"] = self.W_k[i]
            out[f"{prefix}.W_v{i}"] = self.W_v[i]
        return out


def multi_head(Q, K, V, params: MultiHeadParams, mask=None):
    """Heads run independently on projected inputs, then concat and project."""
    outs = [scaled_dot_attention(Q @ params.W_q[i], K @ params.W_k[i],
                                 V @ params.W_v[i], mask)
            for i in range(params.heads)]
    return ag.concat(outs, axis=1) @ params.W_o


class LayerNorm:
    def __init__(self, d_model):
        self.gamma = Tensor(np.ones(d_model), requires_grad=True)
        self.beta = _zeros(d_model)

    def __call__(self, x):
        mu = ag.tmean(x, axis=-1, keepdims=True)
        centered = x - mu
        var = ag.tmean(centered * centered, axis=-1, keepdims=True)
        return centered / ag.sqrt(var + NORM_EPS) * self.gamma + self.beta

    def params(self, prefix):
        return {f"{prefix}.gamma": self.gamma, f"{prefix}.beta": self.beta}


class FeedForward:
    def __init__(self, d_model, ffn, rng):
        self.W1 = _uniform(rng, (d_model, ffn))
        self.b1 = _zeros(ffn)
        self.W2 = _uniform(rng, (ffn, d_model))
        self.b2 = _zeros(d_model)

    def __call__(self, x):
        return ag.relu(x @ self.W1 + self.b1) @ self.W2 + self.b2

    def params(self, prefix):
        return {f"{prefix}.W1": self.W1, f"{prefix}.b1": self.b1,
                f"{prefix}.W2": self.W2, f"{prefix}.b2": self.b2}


class EncoderLayer:
    def __init__(self, cfg, rng):
        self.attn = MultiHeadParams(cfg.d_model, cfg.heads, rng)
        self.norm1 = LayerNorm(cfg.d_model)
        self.ff = FeedForward(cfg.d_model, cfg.ffn, rng)
        self.norm2 = LayerNorm(cfg.d_model)

    def __call__(self, x):
        x = self.norm1(x + multi_head(x, x, x, self.attn))
        return self.norm2(x + self.ff(x))

    def params(self, prefix):
        out = self.attn.params(f"{prefix}.attn")
        out.update(self.norm1.params(f"{prefix}.norm1"))
        out.update(self.ff.params(f"{prefix}.ff"))
        out.update(self.norm2.params(f"{prefix}.norm2"))
        return out


class DecoderLayer:
    def __init__(self, cfg, rng):
        self.self_attn = MultiHeadParams(cfg.d_model, cfg.heads, rng)
        self.norm1 = LayerNorm(cfg.d_model)
        self.cross_attn = MultiHeadParams(cfg.d_model, cfg.heads, rng)
        self.norm2 = LayerNorm(cfg.d_model)
        self.ff = FeedForward(cfg.d_model, cfg.ffn, rng)
        self.norm3 = LayerNorm(cfg.d_model)

    def __call__(self, x, z, self_mask):
        x = self.norm1(x + multi_head(x, x, x, self.self_attn, self_mask))
        x = self.norm2(x + multi_head(x, z, z, self.cross_attn))
        return self.norm3(x + self.ff(x))

    def params(self, prefix):
        out = self.self_attn.params(f"{prefix}.self")
        out.update(self.norm1.params(f"{prefix}.norm1"))
        out.update(self.cross_attn.params(f"{prefix}.cross"))
        out.update(self.norm2.params(f"{prefix}.norm2"))
        out.update(self.ff.params(f"{prefix}.ff"))
        out.update(self.norm3.params(f"{prefix}.norm3"))
        return out


class TransformerModel:
    variant = "transformer"

    def __init__(self, vocab_size, config: TransformerConfig | None = None, seed=0,
                 **cfg_kwargs):
        self.vocab_size = vocab_size
        self.config = config or TransformerConfig(**cfg_kwargs)
        self.seed = seed
        rng = np.random.default_rng(seed)
        cfg = self.config
        self.enc_embedding = _uniform(rng, (vocab_size, cfg.d_model))
        self.dec_embedding = _uniform(rng, (vocab_size, cfg.d_model))
        self.enc_layers = [EncoderLayer(cfg, rng) for _ in range(cfg.layers)]
        self.dec_layers = [DecoderLayer(cfg, rng) for _ in range(cfg.layers)]
        self.W_out = _uniform(rng, (cfg.d_model, vocab_size))
        self.b_out = _zeros(vocab_size)

    def config_dict(self):
        cfg = self.config
        return {"vocab_size": self.vocab_size, "seed": self.seed,
                "d_model": cfg.d_model, "heads": cfg.heads, "layers": cfg.layers,
                "ffn": cfg.ffn, "max_len": cfg.max_len}

    def params(self) -> dict[str, Tensor]:
        out = {"enc_embedding": self.enc_embedding,
               "dec_embedding": self.dec_embedding,
               "W_out": self.W_out, "b_out": self.b_out}
        for i, layer in enumerate(self.enc_layers):
            out.update(layer.params(f"enc{i}"))
        for i, layer in enumerate(self.dec_layers):
            out.update(layer.params(f"dec{i}"))
        return out

    def zero_grad(self):
        for t in self.params().values():
            t.grad = None

    def _embed(self, table, ids):
        ids = list(ids)
        pe = positional_encoding(len(ids), self.config.d_model, self.config.max_len)
        return ag.embedding_lookup(table, ids) + Tensor(pe)

    def encoder_forward(self, ids):
        """Input ids to a (len, d_model) sequence of continuous representations."""
        if not len(ids):
            raise ValueError("cannot encode an empty sequence")
        x = self._embed(self.enc_embedding, ids)
        for layer in self.enc_layers:
            x = layer(x)
        return x

    def decoder_forward(self, target_ids, z):
        """Per-position vocabulary logits under causal self-attention."""
        if not len(target_ids):
            raise ValueError("cannot decode an empty target")
        x = self._embed(self.dec_embedding, target_ids)
        mask = causal_mask(len(target_ids))
        for layer in self.dec_layers:
            x = layer(x, z, mask)
        return x @ self.W_out + self.b_out

    def pair_loss(self, pair):
        z = self.encoder_forward(pair.article_ids)
        inputs = [START] + list(pair.summary_ids)
        targets = list(pair.summary_ids) + [STOP]
        logits = self.decoder_forward(inputs, z)
        probs = ag.softmax(logits)
        losses = [step_loss(probs[t], y) for t, y in enumerate(targets)]
        return sequence_loss(losses)

    def decode_session(self, article_ids, article_ext_ids=None, n_oov=0):
        return _TransformerSession(self, article_ids)


class _TransformerSession:
    """Prefix-recomputing stepper (desk scale; no incremental cache)."""

    def __init__(self, model: TransformerModel, article_ids):
        self.model = model
        self.out_size = model.vocab_size
        self.vocab_size = model.vocab_size
        self.z = model.encoder_forward(list(article_ids))

    def initial_state(self):
        return ()

    def step(self, state, prev_id):
        if prev_id >= self.model.vocab_size:
            prev_id = UNK
        prefix = state + (prev_id,)
        logits = self.model.decoder_forward(list(prefix), self.z)
        probs = ag.softmax(logits[len(prefix) - 1]).data
        return probs, None, prefix
