"""Tokenization, vocabulary construction, markers, and extended-vocab encoding.

The tokenizer is a deterministic rule-based splitter: lowercase, punctuation
split off as single-character tokens, clitics ("'s", "n't", ...) split from
their host word, whitespace collapsed. Sentence/paragraph markers are the
reserved tokens <s> </s> <p> </p>; articles are segmented into sentences on
terminal punctuation and into paragraphs on blank lines.

All types here are immutable after construction and safe to share across
concurrent readers.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field

import numpy as np


class CorpusError(ValueError):
    """Malformed corpus input (bad JSONL record, bad split fractions...)."""


_CLITIC = re.compile(r"^(n't|'(?:s|m|d|ll|re|ve))$")
_CLITIC_NT = re.compile(r"(?<=\w)(n't)\b")
_CLITIC_APO = re.compile(r"'(s|m|d|ll|re|ve)\b")
_PIECE = re.compile(r"\w+|[^\w\s]")


def tokenize(text: str) -> list[str]:
    """Lowercase and split text into word, punctuation, and clitic tokens."""
    text = text.lower()
    text = _CLITIC_NT.sub(r" \1", text)
    text = _CLITIC_APO.sub(r" '\1", text)
    tokens = []
    for chunk in text.split():
        if _CLITIC.match(chunk):
            tokens.append(chunk)
        else:
            tokens.extend(_PIECE.findall(chunk))
    return tokens


def join_tokens(tokens) -> str:
    return " ".join(tokens)


_TERMINALS = {".", "!", "?"}


def segment(text: str) -> tuple[list[list[str]], set[int]]:
    """Split raw text into tokenized sentences plus paragraph break positions.

    Sentences end at terminal punctuation (., !, ?); paragraphs are separated
    by blank lines. Returns (sentences, breaks) ready for add_markers.
    """
    sentences: list[list[str]] = []
    breaks: set[int] = set()
    for para in re.split(r"\n\s*\n", text):
        tokens = tokenize(para)
        if not tokens:
            continue
        if sentences:
            breaks.add(len(sentences))
        current: list[str] = []
        for tok in tokens:
            current.append(tok)
            if tok in _TERMINALS:
                sentences.append(current)
                current = []
        if current:
            sentences.append(current)
    return sentences, breaks


PAD, UNK, START, STOP, SENT_OPEN, SENT_CLOSE, PARA_OPEN, PARA_CLOSE = range(8)
SPECIALS = ("<pad>", "<unk>", "<start>", "<stop>", "<s>", "</s>", "<p>", "</p>")


def add_markers(sentences, paragraph_breaks=()) -> list[str]:
    """Wrap sentences in <s>...</s> and paragraph groups in <p>...</p>.

    `paragraph_breaks` holds sentence indices at which a new paragraph
    starts; valid positions are strictly inside [1, len(sentences)).
    """
    sentences = list(sentences)
    if not sentences:
        return []
    breaks = sorted(set(paragraph_breaks))
    for b in breaks:
        if not 0 < b < len(sentences):
            raise IndexError(f"paragraph break {b} out of range for {len(sentences)} sentences")
    bounds = [0] + breaks + [len(sentences)]
    out: list[str] = []
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        out.append(SPECIALS[PARA_OPEN])
        for sent in sentences[lo:hi]:
            if not sent:
                raise ValueError("empty sentence cannot be marked")
            out.append(SPECIALS[SENT_OPEN])
            out.extend(sent)
            out.append(SPECIALS[SENT_CLOSE])
        out.append(SPECIALS[PARA_CLOSE])
    return out


class Vocabulary:
    """Bidirectional token<->id map with reserved specials at the lowest ids.

    Corpus tokens follow the specials ordered by descending frequency, ties
    broken lexicographically, truncated to max_size entries in total.
    """

    def __init__(self, tokens: list[str], counts: dict[str, int], max_size: int):
        self.tokens = list(SPECIALS) + list(tokens)
        self.counts = dict(counts)
        self.max_size = max_size
        self.index = {tok: i for i, tok in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ValueError("duplicate tokens in vocabulary")

    @classmethod
    def build(cls, corpus, max_size: int) -> "Vocabulary":
        """Count tokens over an iterable of token sequences and keep the top ones."""
        if max_size <= len(SPECIALS):
            raise ValueError(f"max_size must exceed the {len(SPECIALS)} specials")
        counts: dict[str, int] = {}
        specials = set(SPECIALS)
        for seq in corpus:
            for tok in seq:
                if tok not in specials:
                    counts[tok] = counts.get(tok, 0) + 1
        ranked = sorted(counts, key=lambda t: (-counts[t], t))
        kept = ranked[: max_size - len(SPECIALS)]
        return cls(kept, {t: counts[t] for t in kept}, max_size)

    def __len__(self):
        return len(self.tokens)

    def id_of(self, token: str) -> int:
        return self.index.get(token, UNK)

    def token_of(self, idx: int) -> str:
        return self.tokens[idx]

    def content_hash(self) -> str:
        return hashlib.sha256("\n".join(self.tokens).encode("utf-8")).hexdigest()

    def save(self, path):
        """One "token<TAB>count" line per non-special token, ordered by id."""
        with open(path, "w", encoding="utf-8") as fh:
            for tok in self.tokens[len(SPECIALS):]:
                fh.write(f"{tok}\t{self.counts.get(tok, 0)}\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        tokens, counts = [], {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                try:
                    tok, cnt = line.split("\t")
                    counts[tok] = int(cnt)
                except ValueError as exc:
                    raise CorpusError(f"bad vocabulary line {lineno}: {line!r}") from exc
                tokens.append(tok)
        return cls(tokens, counts, max_size=len(tokens) + len(SPECIALS))


@dataclass(frozen=True)
class EncodedPair:
    """An (article, summary) pair encoded against a vocabulary.

    article_ext_ids gives each article OOV a temporary id >= len(vocab),
    assigned in order of first appearance; summary_ext_ids reuses those ids
    for summary tokens that appear among the article OOVs.
    """
    article_ids: tuple
    article_ext_ids: tuple
    article_oovs: tuple
    summary_ids: tuple
    summary_ext_ids: tuple


def encode_pair(article, summary, vocab: Vocabulary) -> EncodedPair:
    size = len(vocab)
    article_ids, article_ext, oovs = [], [], []
    oov_index: dict[str, int] = {}
    for tok in article:
        idx = vocab.id_of(tok)
        article_ids.append(idx)
        if idx == UNK:
            if tok not in oov_index:
                oov_index[tok] = len(oovs)
                oovs.append(tok)
            article_ext.append(size + oov_index[tok])
        else:
            article_ext.append(idx)
    summary_ids, summary_ext = [], []
    for tok in summary:
        idx = vocab.id_of(tok)
        summary_ids.append(idx)
        if idx == UNK and tok in oov_index:
            summary_ext.append(size + oov_index[tok])
        else:
            summary_ext.append(idx)
    return EncodedPair(tuple(article_ids), tuple(article_ext), tuple(oovs),
                       tuple(summary_ids), tuple(summary_ext))


def decode_ids(ids, vocab: Vocabulary, article_oovs=()) -> list[str]:
    """Map (possibly extended) ids back to token surfaces."""
    out = []
    for idx in ids:
        if idx < len(vocab):
            out.append(vocab.token_of(idx))
        else:
            out.append(article_oovs[idx - len(vocab)])
    return out


def ingest_jsonl(path) -> list[tuple[str, str]]:
    """Read (article, summary) text pairs from a JSONL file, one record per line."""
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"line {lineno}: invalid JSON ({exc})") from exc
            for fieldname in ("article", "summary"):
                if fieldname not in record:
                    raise CorpusError(f"line {lineno}: missing field {fieldname!r}")
            pairs.append((record["article"], record["summary"]))
    return pairs


@dataclass(frozen=True)
class CorpusSplit:
    train: list
    dev: list
    test: list
    fractions: tuple = (0.92, 0.042, 0.038)


def split_corpus(pairs, fractions=(0.92, 0.042, 0.038), seed=0) -> CorpusSplit:
    """Deterministic shuffled split; train and dev sizes floor, test takes the rest."""
    if len(fractions) != 3 or any(f <= 0 for f in fractions):
        raise CorpusError(f"fractions must be three positive ratios, got {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise CorpusError(f"fractions must sum to 1, got sum {sum(fractions)}")
    pairs = list(pairs)
    order = np.random.default_rng(seed).permutation(len(pairs))
    shuffled = [pairs[i] for i in order]
    n_train = int(len(pairs) * fractions[0])
    n_dev = int(len(pairs) * fractions[1])
    return CorpusSplit(train=shuffled[:n_train],
                       dev=shuffled[n_train:n_train + n_dev],
                       test=shuffled[n_train + n_dev:],
                       fractions=tuple(fractions))


def prepare_pair(article_text: str, summary_text: str, vocab: Vocabulary,
                 markers: str = "both") -> EncodedPair:
    """Tokenize, optionally insert markers, and encode one raw pair.

    markers: which side gets sentence/paragraph markers — "both", "article",
    "summary", or "none".
    """
    article = marked_tokens(article_text) if markers in ("both", "article") else tokenize(article_text)
    summary = marked_tokens(summary_text) if markers in ("both", "summary") else tokenize(summary_text)
    return encode_pair(article, summary, vocab)


def marked_tokens(text: str) -> list[str]:
    sentences, breaks = segment(text)
    return add_markers(sentences, breaks)
