"""Baseline summarizer: bidirectional LSTM encoder, unidirectional LSTM
decoder, additive attention, vocabulary softmax, and mean NLL loss.

Attention scores per source position i at decoder step t are
    e_i = v . tanh(W_h h_i + W_s s_t [+ w_c c_i] + b)
where s_t concatenates the decoder hidden and cell states; the coverage
term is only used by the pointer+coverage variant. The vocabulary
distribution is softmax(V' (V [s_t, h*_t] + b) + b').

A model instance is single-threaded during training; a frozen parameter
snapshot (values only) can serve concurrent decoding.
"""

from __future__ import annotations

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .text_pipeline import START, STOP, UNK

PROB_FLOOR = 1e-12  # probability floor applied before every log
INIT_SCALE = 0.1    # uniform(-0.1, 0.1) for matrices, zeros for biases


def _uniform(rng, shape):
    return Tensor(rng.uniform(-INIT_SCALE, INIT_SCALE, shape), requires_grad=True)


def _zeros(shape):
    return Tensor(np.zeros(shape), requires_grad=True)


class LstmCell:
    """Standard gate stack: i,f,o = sigmoid(W [x,h] + b), g = tanh(.),
    c' = f*c + i*g, h' = o*tanh(c'). Forget bias starts at 1."""

    def __init__(self, input_size, hidden_size, rng):
        self.input_size = input_size
        self.hidden_size = hidden_size
        both = input_size + hidden_size
        self.W_i = _uniform(rng, (hidden_size, both))
        self.W_f = _uniform(rng, (hidden_size, both))
        self.W_o = _uniform(rng, (hidden_size, both))
        self.W_g = _uniform(rng, (hidden_size, both))
        self.b_i = _zeros(hidden_size)
        self.b_f = Tensor(np.ones(hidden_size), requires_grad=True)
        self.b_o = _zeros(hidden_size)
        self.b_g = _zeros(hidden_size)

    def step(self, x, h_prev, c_prev):
        xh = ag.concat([x, h_prev])
        i = ag.sigmoid(self.W_i @ xh + self.b_i)
        f = ag.sigmoid(self.W_f @ xh + self.b_f)
        o = ag.sigmoid(self.W_o @ xh + self.b_o)
        g = ag.tanh(self.W_g @ xh + self.b_g)
        c = f * c_prev + i * g
        h = o * ag.tanh(c)
        return h, c

    def params(self, prefix):
        return {f"{prefix}.{k}": v for k, v in
                [("W_i", self.W_i), ("W_f", self.W_f), ("W_o", self.W_o),
                 ("W_g", self.W_g), ("b_i", self.b_i), ("b_f", self.b_f),
                 ("b_o", self.b_o), ("b_g", self.b_g)]}


def lstm_step(cell: LstmCell, x, h_prev, c_prev):
    return cell.step(x, h_prev, c_prev)


class AttentionParams:
    """Learnable pieces of the additive attention scorer (w_c lives here but
    only contributes when a coverage vector is passed in)."""

    def __init__(self, enc_dim, state_dim, attn_dim, rng):
        self.W_h = _uniform(rng, (enc_dim, attn_dim))
        self.W_s = _uniform(rng, (state_dim, attn_dim))
        self.v = _uniform(rng, (attn_dim,))
        self.b = _zeros(attn_dim)
        self.w_c = _uniform(rng, (attn_dim,))

    def params(self, prefix):
        return {f"{prefix}.{k}": v for k, v in
                [("W_h", self.W_h), ("W_s", self.W_s), ("v", self.v),
                 ("b", self.b), ("w_c", self.w_c)]}


def attention_scores(h, s_t, params: AttentionParams, coverage=None,
                     h_features=None):
    """Scores e and distribution a over source positions for one decoder step.

    `h` is the (n, enc_dim) matrix of encoder states; `h_features` may carry
    the precomputed h @ W_h to avoid repeating it every step.
    """
    if h_features is None:
        h_features = h @ params.W_h
    feats = h_features + (s_t @ params.W_s) + params.b
    if coverage is not None:
        n = coverage.shape[0]
        if n != h.shape[0]:
            raise ag.AutogradError("coverage length does not match encoder states")
        feats = feats + ag.reshape(coverage, (n, 1)) * params.w_c
    e = ag.tanh(feats) @ params.v
    return e, ag.softmax(e)


def context_vector(a_t, h):
    """Attention-weighted sum of encoder states."""
    if a_t.shape[0] != h.shape[0]:
        raise ag.AutogradError("attention length does not match encoder states")
    return a_t @ h


class OutputProjection:
    """Two-layer map from [s_t, h*_t] to a distribution over the vocabulary."""

    def __init__(self, in_dim, mid_dim, vocab_size, rng):
        self.V = _uniform(rng, (in_dim, mid_dim))
        self.b = _zeros(mid_dim)
        self.V2 = _uniform(rng, (mid_dim, vocab_size))
        self.b2 = _zeros(vocab_size)

    def params(self, prefix):
        return {f"{prefix}.{k}": v for k, v in
                [("V", self.V), ("b", self.b), ("V2", self.V2), ("b2", self.b2)]}


def vocab_distribution(s_t, hstar_t, proj: OutputProjection):
    z = ag.concat([s_t, hstar_t]) @ proj.V + proj.b
    return ag.softmax(z @ proj.V2 + proj.b2)


def step_loss(p, target_id: int):
    """Negative log-likelihood of the target under p, floored at 1e-12."""
    if not 0 <= target_id < p.shape[-1]:
        raise IndexError(f"target id {target_id} out of range for {p.shape[-1]}")
    return -ag.log(ag.clip_min(p[target_id], PROB_FLOOR))


def sequence_loss(step_losses):
    """Arithmetic mean of the per-step losses."""
    if not step_losses:
        raise ValueError("sequence_loss requires at least one step")
    return ag.tmean(ag.stack(step_losses))


class EncoderStates:
    """Per-token encoder states (forward||backward) plus the decoder init."""

    def __init__(self, h, h_fwd, h_bwd, dec_h0, dec_c0):
        self.h = h            # (n, 2*hidden)
        self.h_fwd = h_fwd    # list of (hidden,) tensors, source order
        self.h_bwd = h_bwd    # list of (hidden,) tensors, source order
        self.dec_h0 = dec_h0
        self.dec_c0 = dec_c0
        self.h_features = None  # cache for h @ W_h

    def __len__(self):
        return self.h.shape[0]


class Seq2SeqModel:
    variant = "baseline"

    def __init__(self, vocab_size, emb_dim=32, hidden=64, seed=0):
        self.vocab_size = vocab_size
        self.emb_dim = emb_dim
        self.hidden = hidden
        self.seed = seed
        rng = np.random.default_rng(seed)
        self._init_params(rng)

    def _init_params(self, rng):
        h, e = self.hidden, self.emb_dim
        self.embedding = _uniform(rng, (self.vocab_size, e))
        self.enc_fwd = LstmCell(e, h, rng)
        self.enc_bwd = LstmCell(e, h, rng)
        self.dec = LstmCell(e, h, rng)
        self.W_reduce_h = _uniform(rng, (2 * h, h))
        self.b_reduce_h = _zeros(h)
        self.W_reduce_c = _uniform(rng, (2 * h, h))
        self.b_reduce_c = _zeros(h)
        self.attn = AttentionParams(enc_dim=2 * h, state_dim=2 * h, attn_dim=2 * h, rng=rng)
        self.proj = OutputProjection(in_dim=4 * h, mid_dim=h, vocab_size=self.vocab_size, rng=rng)

    def config_dict(self):
        return {"vocab_size": self.vocab_size, "emb_dim": self.emb_dim,
                "hidden": self.hidden, "seed": self.seed}

    def params(self) -> dict[str, Tensor]:
        out = {"embedding": self.embedding}
        out.update(self.enc_fwd.params("enc_fwd"))
        out.update(self.enc_bwd.params("enc_bwd"))
        out.update(self.dec.params("dec"))
        out.update({"W_reduce_h": self.W_reduce_h, "b_reduce_h": self.b_reduce_h,
                    "W_reduce_c": self.W_reduce_c, "b_reduce_c": self.b_reduce_c})
        out.update(self.attn.params("attn"))
        out.update(self.proj.params("proj"))
        return out

    def zero_grad(self):
        for t in self.params().values():
            t.grad = None

    # forward pieces -------------------------------------------------

    def encode(self, article_ids) -> EncoderStates:
        ids = list(article_ids)
        if not ids:
            raise ValueError("cannot encode an empty article")
        embs = ag.embedding_lookup(self.embedding, ids)
        n, h = len(ids), self.hidden
        zero = Tensor(np.zeros(h))
        fwd, state = [], (zero, zero)
        for i in range(n):
            state = self.enc_fwd.step(embs[i], *state)
            fwd.append(state[0])
        h_fwd_final, c_fwd_final = state
        bwd_rev, state = [], (zero, zero)
        for i in reversed(range(n)):
            state = self.enc_bwd.step(embs[i], *state)
            bwd_rev.append(state[0])
        h_bwd_final, c_bwd_final = state
        bwd = bwd_rev[::-1]
        hmat = ag.concat([ag.stack(fwd), ag.stack(bwd)], axis=1)
        dec_h0 = ag.concat([h_fwd_final, h_bwd_final]) @ self.W_reduce_h + self.b_reduce_h
        dec_c0 = ag.concat([c_fwd_final, c_bwd_final]) @ self.W_reduce_c + self.b_reduce_c
        return EncoderStates(hmat, fwd, bwd, dec_h0, dec_c0)

    def decode_step(self, enc: EncoderStates, h_prev, c_prev, x_emb, coverage=None):
        """One teacher-forced decoder step; returns the pieces later stages need."""
        h_dec, c_dec = self.dec.step(x_emb, h_prev, c_prev)
        s_t = ag.concat([h_dec, c_dec])
        if enc.h_features is None:
            enc.h_features = enc.h @ self.attn.W_h
        e_t, a_t = attention_scores(enc.h, s_t, self.attn, coverage=coverage,
                                    h_features=enc.h_features)
        hstar = context_vector(a_t, enc.h)
        p_vocab = vocab_distribution(s_t, hstar, self.proj)
        return {"h": h_dec, "c": c_dec, "s_t": s_t, "a_t": a_t,
                "hstar": hstar, "p_vocab": p_vocab}

    def pair_loss(self, pair):
        """Mean NLL of the reference summary under teacher forcing."""
        enc = self.encode(pair.article_ids)
        inputs = [START] + list(pair.summary_ids)
        targets = list(pair.summary_ids) + [STOP]
        h_t, c_t = enc.dec_h0, enc.dec_c0
        losses = []
        for x_id, y_id in zip(inputs, targets):
            x_emb = ag.embedding_lookup(self.embedding, [x_id])[0]
            step = self.decode_step(enc, h_t, c_t, x_emb)
            h_t, c_t = step["h"], step["c"]
            losses.append(step_loss(step["p_vocab"], y_id))
        return sequence_loss(losses)

    # decoding interface ----------------------------------------------

    def decode_session(self, article_ids, article_ext_ids=None, n_oov=0):
        return _BaselineSession(self, article_ids)


class _BaselineSession:
    """Stateless stepper for greedy/beam decoding over the plain vocabulary."""

    def __init__(self, model, article_ids):
        self.model = model
        self.out_size = model.vocab_size
        self.vocab_size = model.vocab_size
        self.enc = model.encode(list(article_ids))

    def initial_state(self):
        return (self.enc.dec_h0, self.enc.dec_c0)

    def step(self, state, prev_id):
        model = self.model
        if prev_id >= model.vocab_size:
            prev_id = UNK
        h_t, c_t = state
        x_emb = ag.embedding_lookup(model.embedding, [prev_id])[0]
        out = model.decode_step(self.enc, h_t, c_t, x_emb)
        return out["p_vocab"].data, out["a_t"].data, (out["h"], out["c"])
