"""Greedy and beam-search generation for all model variants.

Models expose a decode session with `initial_state()` and
`step(state, prev_id) -> (probs, attention, new_state)`; pointer sessions
emit distributions over the extended vocabulary so copied OOV tokens can
surface verbatim via map_extended_tokens.

Beam search ranks candidates by cumulative log-probability (STOP competes
inside the top-k like any token, so beam_size=1 reproduces greedy exactly);
hypotheses that select STOP finish and release their slot, and anything
still alive at max_length is force-finished. The returned hypothesis
maximizes logP / len^alpha, ties broken by the lexicographically smaller
id sequence.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from .text_pipeline import START, STOP, UNK

LOG_FLOOR = 1e-12


@dataclass(frozen=True)
class DecodeConfig:
    beam_size: int = 4
    min_length: int = 2
    max_length: int = 100
    length_norm: float = 0.0  # alpha in logP / len^alpha

    def __post_init__(self):
        if self.beam_size < 1:
            raise ValueError("beam_size must be at least 1")
        if not 0 <= self.min_length <= self.max_length:
            raise ValueError("need 0 <= min_length <= max_length")


@dataclass
class Hypothesis:
    ids: tuple = ()
    logp: float = 0.0
    finished: bool = False
    attention: list = field(default_factory=list)
    state: object = None

    def score(self, alpha: float) -> float:
        return self.logp / max(1, len(self.ids)) ** alpha


def _sort_key(hyp: Hypothesis):
    # total order: higher logp first, then lexicographically smaller ids
    return (-hyp.logp, hyp.ids)


def greedy_decode(model, article_ids, article_ext_ids=None, n_oov=0,
                  config: DecodeConfig | None = None) -> list[int]:
    """Argmax token per step; stops at STOP (suppressed before min_length)
    or max_length."""
    config = config or DecodeConfig()
    with ag.no_grad():
        sess = model.decode_session(article_ids, article_ext_ids, n_oov)
        state = sess.initial_state()
        prev = START
        ids: list[int] = []
        for _ in range(config.max_length):
            probs, _, state = sess.step(state, prev)
            logs = np.log(np.maximum(probs, LOG_FLOOR))
            if len(ids) < config.min_length:
                logs[STOP] = -np.inf
            nxt = int(np.argmax(logs))
            if nxt == STOP:
                break
            ids.append(nxt)
            prev = nxt
    return ids


def beam_search(model, article_ids, article_ext_ids=None, n_oov=0,
                config: DecodeConfig | None = None) -> Hypothesis:
    """Best finished hypothesis under the length-normalized objective."""
    config = config or DecodeConfig()
    k = config.beam_size
    with ag.no_grad():
        sess = model.decode_session(article_ids, article_ext_ids, n_oov)
        alive = [Hypothesis(state=sess.initial_state())]
        finished: list[Hypothesis] = []
        for _ in range(config.max_length):
            if not alive:
                break
            candidates = []
            for hyp in alive:
                prev = hyp.ids[-1] if hyp.ids else START
                probs, attn, new_state = sess.step(hyp.state, prev)
                logs = np.log(np.maximum(probs, LOG_FLOOR))
                if len(hyp.ids) < config.min_length:
                    logs[STOP] = -np.inf
                # per-hypothesis top-k suffices: nothing below it can make
                # the global top-k; stable sort keeps lowest-id-first ties,
                # matching greedy's argmax
                top = np.argsort(-logs, kind="stable")[:k]
                for tok in top:
                    tok = int(tok)
                    candidates.append(Hypothesis(
                        ids=hyp.ids + (tok,),
                        logp=hyp.logp + float(logs[tok]),
                        attention=hyp.attention + [attn] if attn is not None else hyp.attention,
                        state=new_state))
            candidates.sort(key=_sort_key)
            alive = []
            for cand in candidates[:k]:
                if cand.ids[-1] == STOP:
                    finished.append(Hypothesis(ids=cand.ids[:-1], logp=cand.logp,
                                               finished=True, attention=cand.attention))
                else:
                    alive.append(cand)
        for hyp in alive:  # force-finish whatever ran out of length budget
            finished.append(Hypothesis(ids=hyp.ids, logp=hyp.logp, finished=True,
                                       attention=hyp.attention))
        if not finished:  # max_length == 0
            return Hypothesis(finished=True)
        alpha = config.length_norm
        return min(finished, key=lambda h: (-h.score(alpha), h.ids))


def map_extended_tokens(ids, vocab, article_oovs=()) -> list[str]:
    """Render (possibly extended) ids as token strings; UNK becomes "[UNK]"."""
    out = []
    limit = len(vocab) + len(article_oovs)
    for idx in ids:
        if not 0 <= idx < limit:
            raise IndexError(f"id {idx} out of range for extended vocab of {limit}")
        if idx == UNK:
            out.append("[UNK]")
        elif idx < len(vocab):
            out.append(vocab.token_of(idx))
        else:
            out.append(article_oovs[idx - len(vocab)])
    return out
