"""Embedding providers and vector operations used across retrieval and analysis."""
from __future__ import annotations

import hashlib
import json
import os
import threading
import urllib.error
import urllib.request
from typing import Protocol, Sequence, runtime_checkable

import numpy as np


class TransportError(RuntimeError):
    """Remote embedding endpoint could not be reached or answered abnormally.

    Retriable, unlike the ValueError raised for malformed inputs or payloads.
    """


def as_embedding(values: Sequence[float] | np.ndarray) -> np.ndarray:
    """Validate and return a finite, 1-D float64 embedding vector."""
    vec = np.asarray(values, dtype=np.float64)
    if vec.ndim != 1 or vec.size == 0:
        raise ValueError(f"embedding must be a non-empty 1-D vector, got shape {vec.shape}")
    if not np.all(np.isfinite(vec)):
        raise ValueError("embedding contains non-finite entries")
    return vec


@runtime_checkable
class EmbeddingProvider(Protocol):
    name: str
    dim: int

    def embed(self, text: str) -> np.ndarray: ...


def embed_text(provider: EmbeddingProvider, text: str) -> np.ndarray:
    """Embed one text, enforcing the provider's declared dimension."""
    if not text:
        raise ValueError("cannot embed empty text")
    vec = as_embedding(provider.embed(text))
    if vec.size != provider.dim:
        raise ValueError(
            f"provider {provider.name!r} returned dim {vec.size}, declared {provider.dim}"
        )
    return vec


def mean_pool(vectors: Sequence[np.ndarray]) -> np.ndarray:
    """Component-wise arithmetic mean of equally sized vectors."""
    if len(vectors) == 0:
        raise ValueError("cannot mean-pool an empty list")
    dims = {np.asarray(v).shape for v in vectors}
    if len(dims) != 1:
        raise ValueError(f"mixed embedding dims: {sorted(dims)}")
    return np.mean(np.stack([as_embedding(v) for v in vectors]), axis=0)


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    a = as_embedding(a)
    b = as_embedding(b)
    if a.size != b.size:
        raise ValueError(f"dim mismatch: {a.size} vs {b.size}")
    norm_a = np.linalg.norm(a)
    norm_b = np.linalg.norm(b)
    if norm_a == 0.0 or norm_b == 0.0:
        raise ValueError("cosine similarity is undefined for a zero vector")
    return float(np.dot(a, b) / (norm_a * norm_b))


def euclidean_distance(a: np.ndarray, b: np.ndarray) -> float:
    a = as_embedding(a)
    b = as_embedding(b)
    if a.size != b.size:
        raise ValueError(f"dim mismatch: {a.size} vs {b.size}")
    return float(np.linalg.norm(a - b))


class HashEmbeddingProvider:
    """Deterministic offline embeddings from seeded character n-gram hashing.

    Each n-gram is hashed (keyed by the seed) to a coordinate and a sign; the
    accumulated vector is normalized to unit length. Needs no weights and no
    network, which keeps tests and demos self-contained.
    """

    def __init__(self, dim: int = 32, seed: int = 0, ngram: int = 3, name: str = "hash"):
        if dim < 1:
            raise ValueError("dim must be positive")
        if ngram < 1:
            raise ValueError("ngram must be positive")
        self.name = name
        self.dim = dim
        self.seed = seed
        self.ngram = ngram

    def _grams(self, text: str) -> list[str]:
        if len(text) < self.ngram:
            return [text]
        return [text[i : i + self.ngram] for i in range(len(text) - self.ngram + 1)]

    def embed(self, text: str) -> np.ndarray:
        if not text:
            raise ValueError("cannot embed empty text")
        vec = np.zeros(self.dim, dtype=np.float64)
        for gram in self._grams(text):
            digest = hashlib.blake2b(
                gram.encode("utf-8"), key=str(self.seed).encode("utf-8"), digest_size=8
            ).digest()
            value = int.from_bytes(digest, "little")
            idx = value % self.dim
            sign = 1.0 if (value >> 63) & 1 else -1.0
            vec[idx] += sign
        norm = np.linalg.norm(vec)
        if norm == 0.0:
            # hash collisions cancelled everything; fall back to a fixed coordinate
            fallback = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
            vec[int.from_bytes(fallback, "little") % self.dim] = 1.0
            norm = 1.0
        return vec / norm


class RemoteEmbeddingProvider:
    """HTTP JSON embedding endpoint: POST {"texts": [...]} -> {"vectors": [...], "dim": n}.

    Credentials come from an environment variable (never from config files) and
    in-flight requests are bounded by a semaphore.
    """

    def __init__(
        self,
        url: str,
        dim: int,
        *,
        timeout: float = 10.0,
        auth_env: str | None = None,
        max_in_flight: int = 4,
        name: str = "remote",
    ):
        self.name = name
        self.url = url
        self.dim = dim
        self.timeout = timeout
        self.auth_env = auth_env
        self._slots = threading.Semaphore(max_in_flight)

    def embed(self, text: str) -> np.ndarray:
        return self.embed_batch([text])[0]

    def embed_batch(self, texts: Sequence[str]) -> list[np.ndarray]:
        if not texts or any(not t for t in texts):
            raise ValueError("texts must be non-empty strings")
        body = json.dumps({"texts": list(texts)}).encode("utf-8")
        headers = {"Content-Type": "application/json"}
        if self.auth_env:
            token = os.environ.get(self.auth_env)
            if token:
                headers["Authorization"] = f"Bearer {token}"
        request = urllib.request.Request(self.url, data=body, headers=headers, method="POST")
        with self._slots:
            try:
                with urllib.request.urlopen(request, timeout=self.timeout) as response:
                    payload = json.loads(response.read().decode("utf-8"))
            except (urllib.error.URLError, TimeoutError, OSError) as exc:
                raise TransportError(f"embedding endpoint {self.url} unreachable: {exc}") from exc
        vectors = payload.get("vectors")
        declared = payload.get("dim")
        if not isinstance(vectors, list) or len(vectors) != len(texts):
            raise ValueError("endpoint returned a malformed 'vectors' field")
        if declared != self.dim:
            raise ValueError(f"endpoint dim {declared} does not match configured dim {self.dim}")
        out = []
        for vec in vectors:
            arr = as_embedding(vec)
            if arr.size != self.dim:
                raise ValueError(f"endpoint vector has dim {arr.size}, expected {self.dim}")
            out.append(arr)
        return out


class MemoProvider:
    """In-memory memo keyed by exact text, wrapped around another provider."""

    def __init__(self, inner: EmbeddingProvider):
        self.inner = inner
        self.name = inner.name
        self.dim = inner.dim
        self._memo: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()

    def embed(self, text: str) -> np.ndarray:
        with self._lock:
            hit = self._memo.get(text)
        if hit is not None:
            return hit
        vec = embed_text(self.inner, text)
        with self._lock:
            self._memo[text] = vec
        return vec
