"""Pointer-generator mixture distribution and the coverage mechanism,
layered on the baseline encoder/decoder/attention stack.

The generation gate is p_gen = sigmoid(w_h* . h*_t + w_s . s_t + w_x . x_t + b)
and the output distribution over the extended vocabulary is
    P_final(w) = p_gen * P_vocab(w) + (1 - p_gen) * sum_{i: w_i = w} a_i.
Coverage keeps c_t = sum of previous attention distributions; a step's
attention consumes the pre-update c_t and its penalty is
sum_i min(a_i, c_i), added to the step NLL before averaging.
"""

from __future__ import annotations

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .seq2seq import (PROB_FLOOR, Seq2SeqModel, _uniform, _zeros, sequence_loss,
                      step_loss)
from .text_pipeline import START, STOP, UNK


class PointerHead:
    """Weights of the generate-vs-copy gate."""

    def __init__(self, ctx_dim, state_dim, input_dim, rng):
        self.w_hstar = _uniform(rng, (ctx_dim,))
        self.w_s = _uniform(rng, (state_dim,))
        self.w_x = _uniform(rng, (input_dim,))
        self.b = _zeros(())

    def params(self, prefix):
        return {f"{prefix}.{k}": v for k, v in
                [("w_hstar", self.w_hstar), ("w_s", self.w_s),
                 ("w_x", self.w_x), ("b", self.b)]}


def generation_probability(hstar_t, s_t, x_t, head: PointerHead):
    return ag.sigmoid(head.w_hstar @ hstar_t + head.w_s @ s_t
                      + head.w_x @ x_t + head.b)


def final_distribution(p_gen, p_vocab, a_t, article_ext_ids, n_oov: int):
    """Mix generate and copy probabilities over the extended vocabulary.

    OOV slots receive only the copy term; attention mass on duplicate source
    positions of the same word accumulates.
    """
    vocab_size = p_vocab.shape[0]
    out_size = vocab_size + n_oov
    ext = np.asarray(article_ext_ids, dtype=np.intp)
    if ext.size != a_t.shape[0]:
        raise ag.AutogradError("attention length does not match article ids")
    if ext.size and ext.max() >= out_size:
        raise ag.AutogradError("extended id out of range")
    gen_part = p_gen * p_vocab
    if n_oov:
        gen_part = ag.concat([gen_part, Tensor(np.zeros(n_oov))])
    copy_part = ag.scatter_add(ag.sub(1.0, p_gen) * a_t, ext, out_size)
    return gen_part + copy_part


class CoverageState:
    """Running sum of attention distributions (c_0 is the zero vector)."""

    def __init__(self, source_len: int):
        self.c = Tensor(np.zeros(source_len))
        self.t = 0

    def updated(self, a_t) -> "CoverageState":
        if a_t.shape[0] != self.c.shape[0]:
            raise ag.AutogradError("attention length does not match coverage")
        nxt = CoverageState.__new__(CoverageState)
        nxt.c = self.c + a_t
        nxt.t = self.t + 1
        return nxt


def coverage_update(state: CoverageState, a_t) -> CoverageState:
    return state.updated(a_t)


def coverage_loss(a_t, c_t):
    """sum_i min(a_i, c_i); lies in [0, 1] when a_t is a distribution."""
    if a_t.shape != c_t.shape:
        raise ag.AutogradError("coverage loss requires equal lengths")
    return ag.tsum(ag.minimum(a_t, c_t))


def total_loss(step_nll, step_covloss):
    """Mean over steps of (nll_t + covloss_t)."""
    if len(step_nll) != len(step_covloss):
        raise ValueError("per-step loss lists must align")
    if not step_nll:
        raise ValueError("total_loss requires at least one step")
    return ag.tmean(ag.stack(step_nll) + ag.stack(step_covloss))


class PointerModel(Seq2SeqModel):
    """Pointer-generator summarizer; with use_coverage it is the
    pointer+coverage variant (coverage may also be warm-started via the
    training loop's cov_start_iteration)."""

    def __init__(self, vocab_size, emb_dim=32, hidden=64, seed=0, use_coverage=False):
        self.use_coverage = use_coverage
        super().__init__(vocab_size, emb_dim=emb_dim, hidden=hidden, seed=seed)

    @property
    def variant(self):
        return "pointer-coverage" if self.use_coverage else "pointer"

    def _init_params(self, rng):
        super()._init_params(rng)
        h, e = self.hidden, self.emb_dim
        self.ptr = PointerHead(ctx_dim=2 * h, state_dim=2 * h, input_dim=e, rng=rng)

    def config_dict(self):
        out = super().config_dict()
        out["use_coverage"] = self.use_coverage
        return out

    def params(self):
        out = super().params()
        out.update(self.ptr.params("ptr"))
        return out

    def pair_loss(self, pair, coverage=None):
        """Teacher-forced loss over the extended vocabulary; with coverage
        active the per-step coverage penalty is added before averaging."""
        if coverage is None:
            coverage = self.use_coverage
        enc = self.encode(pair.article_ids)
        n_oov = len(pair.article_oovs)
        inputs = [START] + list(pair.summary_ids)
        targets = list(pair.summary_ext_ids) + [STOP]
        h_t, c_t = enc.dec_h0, enc.dec_c0
        cov = CoverageState(len(enc)) if coverage else None
        nlls, covlosses = [], []
        for x_id, y_id in zip(inputs, targets):
            x_emb = ag.embedding_lookup(self.embedding, [x_id])[0]
            step = self.decode_step(enc, h_t, c_t, x_emb,
                                    coverage=cov.c if cov else None)
            h_t, c_t = step["h"], step["c"]
            p_gen = generation_probability(step["hstar"], step["s_t"], x_emb, self.ptr)
            p_final = final_distribution(p_gen, step["p_vocab"], step["a_t"],
                                         pair.article_ext_ids, n_oov)
            nlls.append(step_loss(p_final, y_id))
            if cov is not None:
                covlosses.append(coverage_loss(step["a_t"], cov.c))
                cov = cov.updated(step["a_t"])
        if cov is not None:
            return total_loss(nlls, covlosses)
        return sequence_loss(nlls)

    def decode_session(self, article_ids, article_ext_ids=None, n_oov=0):
        if article_ext_ids is None:
            article_ext_ids = list(article_ids)
        return _PointerSession(self, article_ids, article_ext_ids, n_oov)


class _PointerSession:
    """Decoding stepper emitting extended-vocabulary distributions."""

    def __init__(self, model: PointerModel, article_ids, article_ext_ids, n_oov):
        self.model = model
        self.ext_ids = list(article_ext_ids)
        self.n_oov = n_oov
        self.out_size = model.vocab_size + n_oov
        self.vocab_size = model.vocab_size
        self.enc = model.encode(list(article_ids))

    def initial_state(self):
        cov = CoverageState(len(self.enc)) if self.model.use_coverage else None
        return (self.enc.dec_h0, self.enc.dec_c0, cov)

    def step(self, state, prev_id):
        model = self.model
        if prev_id >= model.vocab_size:
            prev_id = UNK  # copied OOVs have no embedding row
        h_t, c_t, cov = state
        x_emb = ag.embedding_lookup(model.embedding, [prev_id])[0]
        step = model.decode_step(self.enc, h_t, c_t, x_emb,
                                 coverage=cov.c if cov else None)
        p_gen = generation_probability(step["hstar"], step["s_t"], x_emb, model.ptr)
        p_final = final_distribution(p_gen, step["p_vocab"], step["a_t"],
                                     self.ext_ids, self.n_oov)
        new_cov = cov.updated(step["a_t"]) if cov else None
        return p_final.data, step["a_t"].data, (step["h"], step["c"], new_cov)
