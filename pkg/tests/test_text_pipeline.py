import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from summnet import text_pipeline as tp
from summnet.text_pipeline import (CorpusError, EncodedPair, Vocabulary, add_markers,
                                   decode_ids, encode_pair, ingest_jsonl, join_tokens,
                                   split_corpus, tokenize)


class TestTokenize:
    def test_lowercase_and_punct_split(self):
        assert tokenize("Hello World.") == ["hello", "world", "."]

    def test_empty(self):
        assert tokenize("") == []

    def test_clitics_and_numbers(self):
        assert tokenize("It's 70 mph winds,") == ["it", "'s", "70", "mph", "winds", ","]

    def test_nt_clitic(self):
        assert tokenize("Don't stop") == ["do", "n't", "stop"]

    def test_whitespace_collapsed(self):
        assert tokenize("a \t b\n\nc") == ["a", "b", "c"]

    def test_tokens_are_lowercase_and_whitespace_free(self):
        for tok in tokenize('She said: "It isn\'t 100% done!"'):
            assert tok and tok == tok.lower() and not any(c.isspace() for c in tok)

    @given(st.text(max_size=60))
    @settings(max_examples=300, deadline=None)
    def test_idempotent_on_joined_output(self, text):
        once = tokenize(text)
        assert tokenize(join_tokens(once)) == once


class TestAddMarkers:
    def test_single_sentence(self):
        assert add_markers([["a"]]) == ["<p>", "<s>", "a", "</s>", "</p>"]

    def test_paragraph_break(self):
        got = add_markers([["a"], ["b"]], {1})
        assert got == ["<p>", "<s>", "a", "</s>", "</p>",
                       "<p>", "<s>", "b", "</s>", "</p>"]

    def test_empty(self):
        assert add_markers([]) == []

    def test_break_out_of_range(self):
        with pytest.raises(IndexError):
            add_markers([["a"], ["b"]], {2})

    def test_order_preserved_no_breaks(self):
        got = add_markers([["a", "b"], ["c"]])
        assert got == ["<p>", "<s>", "a", "b", "</s>", "<s>", "c", "</s>", "</p>"]


class TestVocabulary:
    def test_frequency_then_lexicographic(self):
        v = Vocabulary.build([["a", "b", "b"]], max_size=10)
        assert v.tokens[: len(tp.SPECIALS)] == list(tp.SPECIALS)
        assert v.tokens[len(tp.SPECIALS):] == ["b", "a"]

    def test_empty_corpus_specials_only(self):
        v = Vocabulary.build([], max_size=20)
        assert len(v) == len(tp.SPECIALS)

    def test_truncation_drops_lowest_frequency(self):
        corpus = [["x", "x", "x", "y", "y", "z"]]
        v = Vocabulary.build(corpus, max_size=len(tp.SPECIALS) + 2)
        assert "z" not in v.index
        assert len(v) == len(tp.SPECIALS) + 2

    def test_max_size_too_small_errors(self):
        with pytest.raises(ValueError):
            Vocabulary.build([["a"]], max_size=len(tp.SPECIALS))

    def test_specials_have_fixed_order(self):
        v = Vocabulary.build([], max_size=9)
        assert v.id_of("<pad>") == 0 and v.id_of("<unk>") == 1
        assert v.id_of("<start>") == 2 and v.id_of("<stop>") == 3
        assert v.id_of("<s>") == 4 and v.id_of("</s>") == 5
        assert v.id_of("<p>") == 6 and v.id_of("</p>") == 7

    def test_lookup_round_trips(self):
        v = Vocabulary.build([["red", "green", "blue", "red"]], max_size=20)
        for tok in v.tokens:
            assert v.token_of(v.id_of(tok)) == tok
        assert sorted(v.index.values()) == list(range(len(v)))

    def test_markers_in_corpus_not_duplicated(self):
        v = Vocabulary.build([["<s>", "a", "</s>"]], max_size=20)
        assert len(v) == len(tp.SPECIALS) + 1

    def test_save_load_round_trip(self, tmp_path):
        v = Vocabulary.build([["a", "b", "b", "c"]], max_size=11)
        path = tmp_path / "vocab.tsv"
        v.save(path)
        loaded = Vocabulary.load(path)
        assert loaded.tokens == v.tokens
        assert loaded.counts == v.counts
        assert loaded.content_hash() == v.content_hash()


@pytest.fixture
def vocab():
    return Vocabulary.build([["storm", "hits", "the", "coast", "the"]], max_size=30)


class TestEncodePair:
    def test_oov_gets_temp_id(self, vocab):
        pair = encode_pair(["storm", "hits", "xanadu"], [], vocab)
        V = len(vocab)
        assert pair.article_ext_ids == (vocab.id_of("storm"), vocab.id_of("hits"), V + 0)
        assert pair.article_oovs == ("xanadu",)
        assert pair.article_ids[2] == tp.UNK

    def test_all_in_vocab(self, vocab):
        pair = encode_pair(["storm", "hits"], ["the", "coast"], vocab)
        assert pair.article_ids == pair.article_ext_ids
        assert pair.article_oovs == ()

    def test_summary_oov_uses_article_temp_id(self, vocab):
        pair = encode_pair(["storm", "xanadu"], ["xanadu", "nowhere"], vocab)
        V = len(vocab)
        assert pair.summary_ext_ids == (V + 0, tp.UNK)
        assert pair.summary_ids == (tp.UNK, tp.UNK)

    def test_first_appearance_ordering(self, vocab):
        pair = encode_pair(["zeta", "alpha", "zeta"], [], vocab)
        assert pair.article_oovs == ("zeta", "alpha")
        V = len(vocab)
        assert pair.article_ext_ids == (V, V + 1, V)

    def test_invariants_and_decode_round_trip(self, vocab):
        article = ["storm", "blorp", "hits", "blorp", "qux"]
        pair = encode_pair(article, ["qux", "storm"], vocab)
        assert len(pair.article_ids) == len(pair.article_ext_ids)
        for a, e in zip(pair.article_ids, pair.article_ext_ids):
            if a != tp.UNK:
                assert a == e
            else:
                assert e >= len(vocab) and e - len(vocab) < len(pair.article_oovs)
        assert decode_ids(pair.article_ext_ids, vocab, pair.article_oovs) == article
        assert len(pair.summary_ext_ids) == len(pair.summary_ids)


class TestIngestJsonl:
    def test_valid_file(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        rows = [{"article": "a b", "summary": "a"}, {"article": "c", "summary": "c"}]
        path.write_text("\n".join(json.dumps(r) for r in rows))
        assert ingest_jsonl(path) == [("a b", "a"), ("c", "c")]

    def test_missing_field_names_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"article": "a", "summary": "s"}\n{"article": "b"}\n')
        with pytest.raises(CorpusError, match="line 2"):
            ingest_jsonl(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        assert ingest_jsonl(path) == []

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            ingest_jsonl(tmp_path / "nope.jsonl")

    def test_invalid_json_names_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"article": "a", "summary": "s"}\nnot json\n')
        with pytest.raises(CorpusError, match="line 2"):
            ingest_jsonl(path)


class TestSplitCorpus:
    def test_documented_sizes(self):
        pairs = [(str(i), str(i)) for i in range(100)]
        split = split_corpus(pairs, (0.92, 0.042, 0.038), seed=3)
        assert (len(split.train), len(split.dev), len(split.test)) == (92, 4, 4)

    def test_partition(self):
        pairs = [(str(i), str(i)) for i in range(37)]
        split = split_corpus(pairs, (0.5, 0.25, 0.25), seed=1)
        combined = split.train + split.dev + split.test
        assert len(combined) == 37
        assert sorted(combined) == sorted(pairs)

    def test_deterministic(self):
        pairs = [(str(i), str(i)) for i in range(50)]
        a = split_corpus(pairs, seed=9)
        b = split_corpus(pairs, seed=9)
        assert a.train == b.train and a.dev == b.dev and a.test == b.test

    def test_zero_fraction_rejected(self):
        with pytest.raises(CorpusError):
            split_corpus([("a", "b")], (1.0, 0.0, 0.0), seed=0)

    def test_bad_sum_rejected(self):
        with pytest.raises(CorpusError):
            split_corpus([("a", "b")], (0.5, 0.3, 0.3), seed=0)


class TestSegmentAndPrepare:
    def test_segment_sentences_and_paragraphs(self):
        sents, breaks = tp.segment("One two. Three!\n\nFour?")
        assert sents == [["one", "two", "."], ["three", "!"], ["four", "?"]]
        assert breaks == {2}

    def test_prepare_pair_markers_flag(self, vocab):
        with_markers = tp.prepare_pair("storm hits.", "the coast.", vocab, markers="both")
        assert with_markers.article_ids[0] == tp.PARA_OPEN
        bare = tp.prepare_pair("storm hits.", "the coast.", vocab, markers="none")
        assert bare.article_ids[0] == vocab.id_of("storm")
