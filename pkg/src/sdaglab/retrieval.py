"""Okapi BM25 over an inverted index and dense cosine retrieval."""
from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field

from .corpus import Corpus
from .embeddings import EmbeddingProvider, cosine_similarity, embed_text

_TOKEN_RE = re.compile(r"[0-9a-z]+")

DEFAULT_K1 = 0.9
DEFAULT_B = 0.4


def analyze(text: str) -> list[str]:
    """Lowercase and split on non-alphanumeric characters, dropping empties."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class RetrievedSet:
    """Top-k retrieval result: (doc_id, score) pairs in non-increasing score order."""

    question_id: str
    entries: tuple[tuple[str, float], ...]
    k: int
    short: bool = False

    def __post_init__(self):
        if len(self.entries) > self.k:
            raise ValueError(f"{len(self.entries)} entries exceed k={self.k}")
        scores = [score for _, score in self.entries]
        if any(a < b for a, b in zip(scores, scores[1:])):
            raise ValueError("entry scores must be non-increasing")
        ids = [doc_id for doc_id, _ in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError("entry document ids must be distinct")

    def doc_ids(self) -> list[str]:
        return [doc_id for doc_id, _ in self.entries]


@dataclass(frozen=True)
class Bm25Index:
    postings: dict[str, tuple[tuple[str, int], ...]]
    doc_lengths: dict[str, int]
    avg_doc_length: float
    doc_count: int
    k1: float
    b: float
    _doc_terms: dict[str, dict[str, int]] = field(repr=False, default_factory=dict)


def build_bm25_index(corpus: Corpus, k1: float = DEFAULT_K1, b: float = DEFAULT_B) -> Bm25Index:
    if len(corpus) == 0:
        raise ValueError("cannot index an empty corpus")
    if k1 < 0:
        raise ValueError("k1 must be >= 0")
    if not 0.0 <= b <= 1.0:
        raise ValueError("b must lie in [0, 1]")
    postings: dict[str, list[tuple[str, int]]] = {}
    doc_lengths: dict[str, int] = {}
    doc_terms: dict[str, dict[str, int]] = {}
    for doc in corpus:
        tokens = analyze(doc.text)
        counts = Counter(tokens)
        doc_lengths[doc.id] = len(tokens)
        doc_terms[doc.id] = dict(counts)
        for term, tf in counts.items():
            postings.setdefault(term, []).append((doc.id, tf))
    doc_count = len(doc_lengths)
    avg_doc_length = sum(doc_lengths.values()) / doc_count
    return Bm25Index(
        postings={term: tuple(entries) for term, entries in postings.items()},
        doc_lengths=doc_lengths,
        avg_doc_length=avg_doc_length,
        doc_count=doc_count,
        k1=k1,
        b=b,
        _doc_terms=doc_terms,
    )


def _idf(index: Bm25Index, term: str) -> float:
    # non-negative Lucene-style variant: ln(1 + (N - n + 0.5) / (n + 0.5))
    n = len(index.postings.get(term, ()))
    if n == 0:
        return 0.0
    return math.log(1.0 + (index.doc_count - n + 0.5) / (n + 0.5))


def _score_terms(index: Bm25Index, terms: list[str], doc_id: str) -> float:
    doc_tf = index._doc_terms[doc_id]
    length_norm = index.k1 * (
        1.0 - index.b + index.b * index.doc_lengths[doc_id] / index.avg_doc_length
    )
    score = 0.0
    for term in terms:
        tf = doc_tf.get(term, 0)
        if tf == 0:
            continue
        score += _idf(index, term) * tf * (index.k1 + 1.0) / (tf + length_norm)
    return score


def bm25_score(index: Bm25Index, question: str, doc_id: str) -> float:
    """Okapi score of one document for a question, summed over question terms."""
    if doc_id not in index.doc_lengths:
        raise KeyError(f"document {doc_id!r} is not in the index")
    return _score_terms(index, analyze(question), doc_id)


def bm25_rank(index: Bm25Index, question: str) -> list[tuple[str, float]]:
    """Score every indexed document (zero scores included), ties by ascending id."""
    terms = analyze(question)
    ranked = [(doc_id, _score_terms(index, terms, doc_id)) for doc_id in index.doc_lengths]
    ranked.sort(key=lambda pair: (-pair[1], pair[0]))
    return ranked


def retrieve(
    ranker: Bm25Index | EmbeddingProvider,
    question: str,
    corpus: Corpus,
    k: int,
    *,
    question_id: str = "",
) -> RetrievedSet:
    """Return the top-k documents for a question under BM25 or dense cosine.

    Every corpus document is scored and the sort breaks ties by ascending
    document id. A corpus smaller than k returns every document, flagged
    ``short=True``.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if isinstance(ranker, Bm25Index):
        if set(ranker.doc_lengths) != {doc.id for doc in corpus}:
            raise ValueError("index was built over a different corpus")
        ranked = bm25_rank(ranker, question)
    else:
        query_vec = embed_text(ranker, question)
        ranked = [
            (doc.id, cosine_similarity(query_vec, embed_text(ranker, doc.text))) for doc in corpus
        ]
        ranked.sort(key=lambda pair: (-pair[1], pair[0]))
    return RetrievedSet(
        question_id=question_id,
        entries=tuple(ranked[:k]),
        k=k,
        short=len(corpus) < k,
    )
