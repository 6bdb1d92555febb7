import pytest
from hypothesis import given, strategies as st

from consgraph.corpus import (
    ResponseSet,
    detokenize,
    normalize_ws,
    tokenize,
    tokenize_words,
)
from consgraph.errors import EmptyResponse


def test_tokenize_detaches_sentence_punctuation():
    assert tokenize("Born on January 27, 1982.") == [
        "Born", "on", "January", "27", ",", "1982", ".",
    ]


def test_tokenize_keeps_symbols_and_intra_word_punctuation():
    assert tokenize("x = 5") == ["x", "=", "5"]
    assert tokenize("Spartak Moscow's youth") == ["Spartak", "Moscow's", "youth"]
    assert tokenize("a well-known 3.5 average") == ["a", "well-known", "3.5", "average"]


def test_tokenize_empty_raises():
    with pytest.raises(EmptyResponse):
        tokenize("   ")


def test_detokenize_reattaches_punctuation():
    assert detokenize(["Born", "on", "1982", "."]) == "Born on 1982."
    assert detokenize([]) == ""


def test_round_trip_on_fixture(bio_response_set):
    for text, tokens in zip(bio_response_set.responses, bio_response_set.token_seqs):
        assert normalize_ws(detokenize(tokens)) == normalize_ws(text)


word = st.from_regex(r"[A-Za-z0-9][A-Za-z0-9'\-]*[.,;:!?]{0,2}", fullmatch=True)


@given(st.lists(word, min_size=1, max_size=30))
def test_round_trip_property(words):
    text = " ".join(words)
    assert detokenize(tokenize(text)) == text


@given(st.lists(word, min_size=1, max_size=15))
def test_tokenize_deterministic(words):
    text = " ".join(words)
    assert tokenize(text) == tokenize(text)


def test_response_set_requires_responses():
    with pytest.raises(EmptyResponse):
        ResponseSet(prompt_id="x", prompt="", responses=[])


def test_tokenize_words_allows_empty():
    assert tokenize_words("") == []
