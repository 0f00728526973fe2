"""Adversarial pools, selection strategies, injection, and filter plugins.

Selection follows the configured strategy against the centroid of the benign
retrieved documents; injection either replaces slots of the retrieved set
(placement controlled) or adds documents to the corpus so retrieval itself
decides their fate.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .corpus import Corpus, CorpusFormatError, Document
from .embeddings import EmbeddingProvider, embed_text, euclidean_distance, mean_pool
from .retrieval import RetrievedSet
from .seeding import rng_for

STRATEGIES = ("random", "near", "far")
SETTINGS = ("in_set", "in_corpus")
PLACEMENTS = ("end", "start", "random")


@dataclass(frozen=True)
class AdversarialPool:
    """Candidate adversarial documents for one question."""

    question_id: str
    target_answer: str
    candidates: tuple[Document, ...]

    def __post_init__(self):
        if not self.candidates:
            raise ValueError(f"pool for {self.question_id!r} is empty")
        texts = [doc.text for doc in self.candidates]
        if len(set(texts)) != len(texts):
            raise ValueError(f"pool for {self.question_id!r} has duplicate candidate texts")
        for doc in self.candidates:
            if doc.origin != "adversarial" or doc.pool_question_id != self.question_id:
                raise ValueError(
                    f"pool candidate {doc.id!r} must be adversarial and tagged with "
                    f"question {self.question_id!r}"
                )


@dataclass(frozen=True)
class AttackSpec:
    """How many adversarial documents to use, picked how, injected where."""

    strategy: str = "random"
    n_docs: int = 1
    setting: str = "in_set"
    placement: str | None = "end"
    seed: int = 42
    embedding_provider: str = "hash"

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.setting not in SETTINGS:
            raise ValueError(f"unknown setting {self.setting!r}")
        if self.n_docs < 1:
            raise ValueError("n_docs must be >= 1")
        if self.setting == "in_set":
            if self.placement not in PLACEMENTS:
                raise ValueError(f"in_set placement must be one of {PLACEMENTS}")
        elif self.placement is not None:
            raise ValueError("placement applies only to the in_set setting")


def load_pools(path: str | Path) -> list[AdversarialPool]:
    """Load JSON-lines pools: question_id, target_answer, candidates (texts)."""
    pools: list[AdversarialPool] = []
    seen: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"malformed JSON ({exc.msg})", path=path, line=line_no) from exc
            try:
                question_id = str(obj["question_id"])
                candidates = tuple(
                    Document(
                        id=f"adv:{question_id}#{i}",
                        text=str(text),
                        origin="adversarial",
                        pool_question_id=question_id,
                    )
                    for i, text in enumerate(obj["candidates"])
                )
                pool = AdversarialPool(
                    question_id=question_id,
                    target_answer=str(obj["target_answer"]),
                    candidates=candidates,
                )
            except KeyError as exc:
                raise CorpusFormatError(f"missing key {exc.args[0]!r}", path=path, line=line_no) from exc
            except ValueError as exc:
                raise CorpusFormatError(str(exc), path=path, line=line_no) from exc
            if pool.question_id in seen:
                raise CorpusFormatError(
                    f"duplicate pool for question {pool.question_id!r}", path=path, line=line_no
                )
            seen[pool.question_id] = line_no
            pools.append(pool)
    return pools


def select_adversarial(
    pool: AdversarialPool,
    benign_docs: Sequence[Document],
    spec: AttackSpec,
    provider: EmbeddingProvider | None = None,
) -> list[Document]:
    """Pick N pool candidates: uniformly, or nearest/farthest to the benign centroid.

    Distances are Euclidean in the provider's embedding space; ties break by
    candidate id.
    """
    if spec.n_docs > len(pool.candidates):
        raise ValueError(
            f"requested {spec.n_docs} documents from a pool of {len(pool.candidates)}"
        )
    if spec.strategy == "random":
        rng = rng_for(spec.seed, "select", pool.question_id)
        picks = rng.choice(len(pool.candidates), size=spec.n_docs, replace=False)
        return [pool.candidates[int(i)] for i in picks]

    if not benign_docs:
        raise ValueError(f"{spec.strategy} strategy needs a non-empty benign set")
    if provider is None:
        raise ValueError(f"{spec.strategy} strategy needs an embedding provider")
    centroid = mean_pool([embed_text(provider, doc.text) for doc in benign_docs])
    scored = [
        (euclidean_distance(embed_text(provider, doc.text), centroid), doc.id, doc)
        for doc in pool.candidates
    ]
    reverse = spec.strategy == "far"
    scored.sort(key=lambda item: (-item[0] if reverse else item[0], item[1]))
    return [doc for _, _, doc in scored[: spec.n_docs]]


def inject_in_set(
    retrieved: RetrievedSet,
    corpus: Corpus,
    adversarial: Sequence[Document],
    placement: str,
    seed: int,
) -> list[Document]:
    """Replace retrieved slots with adversarial documents at the given placement.

    The total stays at the retrieved count; the lowest-ranked benign documents
    are evicted and benign relative order is preserved.
    """
    if placement not in PLACEMENTS:
        raise ValueError(f"unknown placement {placement!r}")
    if not adversarial:
        raise ValueError("need at least one adversarial document")
    k = len(retrieved.entries)
    n_adv = len(adversarial)
    if n_adv > k:
        raise ValueError(f"{n_adv} adversarial documents exceed retrieved size {k}")
    benign = [corpus.get(doc_id) for doc_id in retrieved.doc_ids()][: k - n_adv]

    if placement == "end":
        return benign + list(adversarial)
    if placement == "start":
        return list(adversarial) + benign
    rng = rng_for(seed, "placement", retrieved.question_id)
    positions = sorted(int(i) for i in rng.choice(k, size=n_adv, replace=False))
    result: list[Document] = []
    adv_iter = iter(adversarial)
    benign_iter = iter(benign)
    for i in range(k):
        result.append(next(adv_iter) if i in positions else next(benign_iter))
    return result


def inject_in_corpus(
    corpus: Corpus,
    pools: Sequence[AdversarialPool],
    spec: AttackSpec,
    provider: EmbeddingProvider | None = None,
    benign_docs_by_question: Mapping[str, Sequence[Document]] | None = None,
) -> Corpus:
    """Return a new corpus with each pool's selected documents appended.

    The near/far strategies need the per-question benign retrieved documents
    (from the clean corpus) to compute centroids.
    """
    existing = set(corpus.ids())
    added: list[Document] = []
    for pool in pools:
        benign: Sequence[Document] = ()
        if benign_docs_by_question is not None:
            benign = benign_docs_by_question.get(pool.question_id, ())
        selected = select_adversarial(pool, benign, spec, provider)
        for doc in selected:
            if doc.id in existing:
                raise ValueError(f"adversarial document id {doc.id!r} collides with the corpus")
            existing.add(doc.id)
            added.append(doc)
    return Corpus(documents=corpus.documents + tuple(added), name=corpus.name)


# ------------------------------------------------------------------ filters

FilterPlugin = Callable[[Sequence[Document]], Sequence[Document]]

_FILTERS: dict[str, FilterPlugin] = {}


class FilterError(RuntimeError):
    def __init__(self, plugin: str, message: str):
        self.plugin = plugin
        super().__init__(f"filter {plugin!r}: {message}")


def register_filter(name: str) -> Callable[[FilterPlugin], FilterPlugin]:
    def decorator(fn: FilterPlugin) -> FilterPlugin:
        _FILTERS[name] = fn
        return fn

    return decorator


def get_filter(name: str) -> FilterPlugin:
    if name not in _FILTERS:
        raise KeyError(f"no filter plugin registered under {name!r}")
    return _FILTERS[name]


def filter_names() -> list[str]:
    return sorted(_FILTERS)


@register_filter("none")
def _noop_filter(docs: Sequence[Document]) -> Sequence[Document]:
    return list(docs)


@register_filter("drop_adversarial")
def _drop_adversarial(docs: Sequence[Document]) -> Sequence[Document]:
    # oracle filter for tests and composition demos; real defenses plug in here
    return [doc for doc in docs if doc.origin != "adversarial"]


def pre_generation_filter(docs: Sequence[Document], name: str) -> list[Document]:
    """Apply a registered filter; the result must be a subsequence of the input."""
    plugin = get_filter(name)
    try:
        kept = list(plugin(docs))
    except Exception as exc:
        raise FilterError(name, str(exc)) from exc
    it = iter(doc.id for doc in docs)
    for doc in kept:
        if doc.id not in it:
            raise FilterError(name, "returned documents that are not a subsequence of the input")
    return kept
