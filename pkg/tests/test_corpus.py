import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pscs.corpus import (EmptyQueryError, PAD_ID, UNK_ID, QueryTokens, RawPair,
                         Vocabulary, build_vocabulary, encode_query,
                         extract_query, filter_pair, split_subtokens)


class TestExtractQuery:
    def test_strips_doc_tag_and_period(self):
        assert extract_query("Removes last camel word. See {@link X}.") == \
            "removes last camel word"

    def test_empty_annotation(self):
        assert extract_query("") == ""

    def test_strips_parenthetical(self):
        # cross-checked by hand against the bracket-strip + punctuation rules
        assert extract_query("Resolve (DNS) service ip address") == \
            "resolve service ip address"

    def test_first_sentence_boundary_requires_whitespace(self):
        assert extract_query("Reads v1.2 of the header. Ignores the rest.") == \
            "reads v1 2 of the header"

    def test_question_and_bang_end_sentences(self):
        assert extract_query("Is it there? Then stop.") == "is it there"
        assert extract_query("Go! Now.") == "go"

    def test_nested_brackets_removed_outermost_first(self):
        assert extract_query("Keep {outer [inner] parts} none") == "keep none"

    def test_unclosed_bracket_swallows_tail(self):
        assert extract_query("Reads the value (unterminated") == "reads the value"

    def test_period_inside_braces_does_not_end_sentence(self):
        assert extract_query("{@code a. b} Returns the id. More.") == "returns the id"


class TestFilterPair:
    def test_two_words_rejected(self):
        assert filter_pair(RawPair(id="1", code="x", annotation="sets x")) is False

    def test_empty_rejected(self):
        assert filter_pair(RawPair(id="1", code="x", annotation="")) is False

    def test_long_sentence_kept(self):
        pair = RawPair(id="1", code="x",
                       annotation="get the result of an xml path expression")
        assert filter_pair(pair) is True

    def test_depends_only_on_first_sentence(self):
        pair = RawPair(id="1", code="x", annotation="sets x. But this tail is long.")
        assert filter_pair(pair) is False


class TestSplitSubtokens:
    def test_camel_case(self):
        assert split_subtokens("setTimer") == ["set", "timer"]

    def test_single_letter(self):
        assert split_subtokens("x") == ["x"]

    def test_acronym_hyphen_and_digits(self):
        # hand segmentation: hyphen split, acronym boundary, digits kept in run
        assert split_subtokens("parseHTTPResponse-v2") == \
            ["parse", "http", "response", "v2"]

    def test_underscores(self):
        assert split_subtokens("snake_case_name") == ["snake", "case", "name"]

    def test_all_punctuation_token(self):
        assert split_subtokens("+") == []

    def test_digit_to_upper_boundary(self):
        assert split_subtokens("base64Encode") == ["base64", "encode"]

    @given(st.text(alphabet=st.characters(min_codepoint=97, max_codepoint=122),
                   min_size=1, max_size=12))
    def test_lowercase_round_trip(self, token):
        assert split_subtokens(token) == [token]

    @given(st.text(alphabet=st.characters(categories=("Lu", "Ll", "Nd"))
                   | st.sampled_from("-_"), min_size=1, max_size=16))
    @settings(max_examples=200)
    def test_idempotent_and_lowercase(self, token):
        out = split_subtokens(token)
        assert all(t == t.lower() and t for t in out)
        for t in out:
            assert split_subtokens(t) == [t]


class TestVocabulary:
    def test_build_orders_by_frequency_then_lexicographic(self):
        stream = ["b", "a", "b", "a", "c", "b"]
        vocab = build_vocabulary(stream, min_count=1, max_size=10)
        assert vocab.tokens == ["b", "a", "c"]
        assert vocab.lookup("b") == 2
        assert vocab.lookup("zzz") == UNK_ID

    def test_min_count_and_max_size(self):
        stream = ["a"] * 3 + ["b"] * 2 + ["c"]
        vocab = build_vocabulary(stream, min_count=2, max_size=1)
        assert vocab.tokens == ["a"]
        assert vocab.lookup("b") == UNK_ID

    def test_empty_stream(self):
        vocab = build_vocabulary([], min_count=1)
        assert vocab.size == 2

    def test_round_trip_and_determinism(self, tmp_path):
        stream = ["tok%d" % (i % 7) for i in range(50)]
        v1 = build_vocabulary(stream, min_count=1)
        v2 = build_vocabulary(stream, min_count=1)
        p1, p2 = tmp_path / "v1.txt", tmp_path / "v2.txt"
        v1.save(p1)
        v2.save(p2)
        assert p1.read_bytes() == p2.read_bytes()
        loaded = Vocabulary.load(p1)
        assert loaded.kind == v1.kind
        assert loaded.tokens == v1.tokens
        for i in range(2, loaded.size):
            assert loaded.lookup(loaded.token_of(i)) == i

    def test_header_validation(self, tmp_path):
        bad = tmp_path / "bad.txt"
        bad.write_text("count:0\nkind:word\n")
        with pytest.raises(ValueError):
            Vocabulary.load(bad)


class TestEncodeQuery:
    @pytest.fixture
    def vocab(self):
        return Vocabulary(kind="word", tokens=["w%d" % i for i in range(20)]
                          + ["add", "header"])

    def test_padding_and_mask(self, vocab):
        out = encode_query("add header", vocab, 4)
        assert out.ids.tolist() == [vocab.lookup("add"), vocab.lookup("header"),
                                    PAD_ID, PAD_ID]
        assert out.mask.tolist() == [True, True, False, False]

    def test_unknown_token_maps_to_unk(self, vocab):
        out = encode_query("qqqq", vocab, 2)
        assert out.ids.tolist() == [UNK_ID, PAD_ID]
        assert out.mask.tolist() == [True, False]

    def test_truncation_to_q(self, vocab):
        sentence = " ".join("w%d" % i for i in range(21))
        out = encode_query(sentence, vocab, 20)
        assert out.ids.shape == (20,)
        assert out.mask.all()

    def test_empty_sentence_rejected(self, vocab):
        with pytest.raises(EmptyQueryError):
            encode_query("   ", vocab, 4)

    def test_requires_word_vocab(self):
        with pytest.raises(ValueError):
            encode_query("a b c", Vocabulary(kind="node", tokens=[]), 4)

    @given(st.lists(st.sampled_from(["add", "header", "request", "sent"]),
                    min_size=1, max_size=8))
    def test_length_always_q_and_mask_consistent(self, words):
        vocab = Vocabulary(kind="word", tokens=["add", "header", "request", "sent"])
        out = encode_query(" ".join(words), vocab, 6)
        assert out.ids.shape == (6,)
        assert out.mask.shape == (6,)
        assert ((out.ids == PAD_ID) == ~out.mask).all()
