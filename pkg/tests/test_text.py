from __future__ import annotations

from hypothesis import given, strategies as st

from schemaqa.text import STOPWORDS, keyword_tokens, tokenize


def test_tokenize_lowercases_and_splits():
    assert tokenize("Bolt-EV, case #20335!") == ["bolt", "ev", "case", "20335"]


def test_tokenize_drops_single_characters():
    assert tokenize("V1 a b cd") == ["v1", "cd"]


def test_keyword_tokens_drop_stopwords_numbers_and_duplicates():
    assert keyword_tokens("The vehicle model of the vehicle in 2015") == ["vehicle", "model"]


@given(st.text())
def test_keyword_tokens_are_a_deduplicated_subset_of_tokens(text):
    toks = tokenize(text)
    kws = keyword_tokens(text)
    assert len(kws) == len(set(kws))
    assert set(kws) <= set(toks)
    assert not any(k in STOPWORDS or k.isdigit() for k in kws)
    assert all(t == t.lower() and len(t) >= 2 for t in toks)
