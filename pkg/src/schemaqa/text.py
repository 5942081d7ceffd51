"""Tokenization shared by keyword derivation and the mock embedder."""
from __future__ import annotations

import re

_SPLIT = re.compile(r"[^0-9a-z]+")

# Function words that carry no retrieval signal in keyword sets.
STOPWORDS = frozenset(
    """
    a an and are as at be been by did do does each for from had has have how in
    into is it its of on or that the their there this to was were what when where
    which who whom why will with any all not no yes if than then them they those
    these such can could would should may might our your his her he she we you
    """.split()
)


def tokenize(text: str) -> list[str]:
    """Lowercase, split on non-alphanumerics, drop tokens shorter than 2."""
    return [tok for tok in _SPLIT.split(text.lower()) if len(tok) >= 2]


def keyword_tokens(text: str) -> list[str]:
    """Tokens suitable as keywords: stopwords and pure numbers removed, order kept, deduplicated."""
    seen: dict[str, None] = {}
    for tok in tokenize(text):
        if tok in STOPWORDS or tok.isdigit():
            continue
        seen.setdefault(tok, None)
    return list(seen)
