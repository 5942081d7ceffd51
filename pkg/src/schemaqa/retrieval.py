"""Keyword-indexed attribute retrieval with squared, range-normalized cosine scores."""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import DimensionMismatch, EmbeddingError, EmptyIndex, EmptyInput, EmptyKeywordSet, SchemaQAError, ZeroVector
from .schema_graph import AttributeNode, SchemaGraph, SchemaSpec
from .text import keyword_tokens

Embedder = Callable[[str], np.ndarray]

JOINED = "joined"
MAX_KEYWORD = "max"


@dataclass(frozen=True)
class RetrievalConfig:
    tau: float = 0.5
    frequency_min: float = 0.05
    doc_freq_max: int = 1
    keyword_join: str = JOINED

    def __post_init__(self):
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError(f"tau must lie in [0, 1], got {self.tau}")
        if not 0.0 < self.frequency_min <= 1.0:
            raise ValueError(f"frequency_min must lie in (0, 1], got {self.frequency_min}")
        if self.doc_freq_max < 0:
            raise ValueError("doc_freq_max must be >= 0")
        if self.keyword_join not in (JOINED, MAX_KEYWORD):
            raise ValueError(f"unknown keyword_join {self.keyword_join!r}")


@dataclass(frozen=True)
class KeywordSet:
    attribute: AttributeNode
    unique_keywords: tuple[str, ...]
    frequent_keywords: tuple[str, ...]
    source_description: str = ""

    @property
    def keywords(self) -> tuple[str, ...]:
        return tuple(dict.fromkeys(self.unique_keywords + self.frequent_keywords))

    def text(self) -> str:
        return ", ".join(self.keywords)


@dataclass(frozen=True)
class IndexEntry:
    keywords: KeywordSet
    embedding: np.ndarray

    @property
    def attribute(self) -> AttributeNode:
        return self.keywords.attribute


class KeywordIndex:
    def __init__(self, entries: Iterable[IndexEntry]):
        self.entries: tuple[IndexEntry, ...] = tuple(entries)
        dims = {e.embedding.shape for e in self.entries}
        if len(dims) > 1:
            raise DimensionMismatch(f"index embeddings have mixed shapes {sorted(dims)}")
        for e in self.entries:
            if abs(float(np.linalg.norm(e.embedding)) - 1.0) > 1e-6:
                raise ValueError(f"embedding of {e.attribute} is not unit norm")

    @property
    def dimension(self) -> int | None:
        return self.entries[0].embedding.shape[0] if self.entries else None

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def entry(self, attribute: AttributeNode) -> IndexEntry:
        for e in self.entries:
            if e.attribute == attribute:
                return e
        raise KeyError(str(attribute))

    def save(self, path) -> None:
        data = [
            {
                "table": e.attribute.table,
                "column": e.attribute.column,
                "unique_keywords": list(e.keywords.unique_keywords),
                "frequent_keywords": list(e.keywords.frequent_keywords),
                "embedding": [float(x) for x in e.embedding],
            }
            for e in self.entries
        ]
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(data, fh)

    @classmethod
    def load(cls, path, graph: SchemaGraph) -> "KeywordIndex":
        """Reload a cached index; no embedder calls are made."""
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        entries = []
        for item in data:
            node = graph.node(item["table"], item["column"])
            ks = KeywordSet(node, tuple(item["unique_keywords"]), tuple(item["frequent_keywords"]))
            entries.append(IndexEntry(ks, np.asarray(item["embedding"], dtype=float)))
        return cls(entries)


# ---------------------------------------------------------------------------
# keyword derivation


def _frequent_tokens(
    column_values: Mapping[tuple[str, str], Sequence[str]], frequency_min: float, doc_freq_max: int
) -> dict[tuple[str, str], tuple[str, ...]]:
    per_column: dict[tuple[str, str], Counter] = {}
    for ident, values in column_values.items():
        counts: Counter = Counter()
        for value in values:
            counts.update(set(keyword_tokens(value)))
        per_column[ident] = counts
    columns_with: Counter = Counter()
    for counts in per_column.values():
        columns_with.update(counts.keys())
    out = {}
    for ident, counts in per_column.items():
        n = len(column_values[ident])
        picked = [
            tok for tok, c in counts.items()
            if n and c / n >= frequency_min and columns_with[tok] - 1 <= doc_freq_max
        ]
        picked.sort(key=lambda tok: (-counts[tok], tok))
        out[ident] = tuple(picked)
    return out


def derive_keyword_sets(
    spec: SchemaSpec,
    column_values: Mapping[tuple[str, str], Sequence[str]] | None = None,
    config: RetrievalConfig = RetrievalConfig(),
) -> list[KeywordSet]:
    """Keyword sets for every declared column.

    Uniqueness keywords come from declared keywords, the column name and its
    description. Frequency keywords are value tokens covering at least
    ``frequency_min`` of a column's samples and seen in at most
    ``doc_freq_max`` other columns. ``column_values`` is keyed by
    ``(table, column)``.
    """
    column_values = column_values or {}
    frequent = _frequent_tokens(column_values, config.frequency_min, config.doc_freq_max)
    sets = []
    for table in spec.tables:
        for col in table.columns:
            node = AttributeNode(col.name, table.name, col.primary_key)
            unique: dict[str, None] = {}
            for text in (*col.unique_keywords, col.name, col.description):
                for tok in keyword_tokens(text):
                    unique.setdefault(tok, None)
            freq: dict[str, None] = {}
            for text in col.frequent_keywords:
                for tok in keyword_tokens(text):
                    freq.setdefault(tok, None)
            for tok in frequent.get(node.ident, ()):
                freq.setdefault(tok, None)
            ks = KeywordSet(node, tuple(unique), tuple(t for t in freq if t not in unique), col.description)
            if not ks.keywords:
                raise EmptyKeywordSet(f"column {node} yields no keywords")
            sets.append(ks)
    return sets


def _unit(vec, what: str) -> np.ndarray:
    arr = np.asarray(vec, dtype=float).ravel()
    norm = float(np.linalg.norm(arr))
    if norm == 0.0 or not np.isfinite(norm):
        raise EmbeddingError(f"embedding for {what} has zero or non-finite norm")
    return arr / norm


def build_keyword_index(
    spec: SchemaSpec,
    column_values: Mapping[tuple[str, str], Sequence[str]] | None,
    embedder: Embedder,
    config: RetrievalConfig = RetrievalConfig(),
) -> KeywordIndex:
    entries = []
    dim = None
    for ks in derive_keyword_sets(spec, column_values, config):
        try:
            vec = _unit(embedder(ks.text()), str(ks.attribute))
        except EmbeddingError:
            raise
        except SchemaQAError as exc:
            raise EmbeddingError(f"embedding keywords of {ks.attribute} failed: {exc}") from exc
        if dim is None:
            dim = vec.shape[0]
        elif vec.shape[0] != dim:
            raise EmbeddingError(f"embedder returned dimension {vec.shape[0]} for {ks.attribute}, expected {dim}")
        entries.append(IndexEntry(ks, vec))
    return KeywordIndex(entries)


# ---------------------------------------------------------------------------
# scoring


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatch(f"cannot compare vectors of shape {a.shape} and {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ZeroVector("cosine similarity is undefined for a zero vector")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def normalize_scores(raw: Sequence[float]) -> list[float]:
    """Square the similarities and min-max scale them to [0, 1].

    When every squared score is equal the result is all ones.
    """
    arr = np.asarray(raw, dtype=float)
    if arr.size == 0:
        raise EmptyInput("normalize_scores needs at least one score")
    sq = arr * arr
    lo, hi = sq.min(), sq.max()
    if hi == lo:
        return [1.0] * arr.size
    return [float(x) for x in np.clip((sq - lo) / (hi - lo), 0.0, 1.0)]


@dataclass(frozen=True)
class ScoredAttribute:
    attribute: AttributeNode
    raw_similarity: float
    normalized_score: float


def _embed_checked(embedder: Embedder, text: str) -> np.ndarray:
    try:
        return np.asarray(embedder(text), dtype=float)
    except EmbeddingError:
        raise
    except SchemaQAError as exc:
        raise EmbeddingError(f"embedding {text!r} failed: {exc}") from exc


def score_attributes(
    segment: str, index: KeywordIndex, embedder: Embedder, keyword_join: str = JOINED
) -> list[ScoredAttribute]:
    if not len(index):
        raise EmptyIndex("keyword index is empty")
    query = _embed_checked(embedder, segment)
    raws = []
    for entry in index:
        if keyword_join == MAX_KEYWORD:
            raws.append(max(cosine_similarity(query, _embed_checked(embedder, kw)) for kw in entry.keywords.keywords))
        else:
            raws.append(cosine_similarity(query, entry.embedding))
    norm = normalize_scores(raws)
    scored = [ScoredAttribute(e.attribute, r, n) for e, r, n in zip(index, raws, norm)]
    scored.sort(key=lambda s: (-s.normalized_score, s.attribute.table, s.attribute.column))
    return scored


def select_candidates(scored: Sequence[ScoredAttribute], config: RetrievalConfig = RetrievalConfig()) -> list[AttributeNode]:
    """Attributes scoring at least ``tau``; the top attribute alone when none does."""
    if not scored:
        raise EmptyInput("no scored attributes to select from")
    picked = [s.attribute for s in scored if s.normalized_score >= config.tau]
    return picked or [scored[0].attribute]


def corpus_column_values(corpus) -> dict[tuple[str, str], list[str]]:
    """``(table, column) -> values`` for every column of a loaded corpus."""
    out = {}
    for name, table in corpus.items():
        for i, col in enumerate(table.columns):
            out[(name, col)] = [row[i] for row in table.rows if row[i].strip()]
    return out
