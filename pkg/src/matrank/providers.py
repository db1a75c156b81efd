"""Embedding providers: a deterministic mock, an HTTP client, and a
caching wrapper that makes any provider reproducible.

All vectors are 64-bit floats regardless of what the backing model
computes in; a provider must return the same dimension for every request
it serves. Determinism contract: for a fixed provider and request, every
returned vector is bit-identical for the life of the process (the caching
wrapper enforces this for remote providers).
"""

from __future__ import annotations

import hashlib
import threading
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Literal, Optional, Sequence

import numpy as np
import requests

from .errors import (
    BadSpan,
    BatchItemError,
    DimensionMismatch,
    EmptyBatch,
    EmptyModelOutput,
    MatrankError,
    ProviderError,
    ProviderUnavailable,
)

Pooling = Literal["whole_input", "target_span"]

POOLING_MODES: tuple[str, ...] = ("whole_input", "target_span")

#: Prefixes a remote service may put on its error strings so the client
#: can map them back to typed exceptions.
_REMOTE_ERROR_PREFIXES = {
    "bad_span": BadSpan,
    "empty_model_output": EmptyModelOutput,
}


class EmbeddingVector:
    """A fixed-dimension, finite, read-only float64 vector."""

    __slots__ = ("values",)

    def __init__(self, values):
        arr = np.array(values, dtype=np.float64, copy=True)
        if arr.ndim != 1 or arr.size < 1:
            raise ValueError("an embedding vector must be 1-D with at least one value")
        if not np.all(np.isfinite(arr)):
            raise ValueError("embedding vectors must be finite")
        arr.setflags(write=False)
        self.values = arr

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])

    def __len__(self) -> int:
        return self.dim

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EmbeddingVector):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    def __hash__(self) -> int:
        return hash(self.values.tobytes())

    def __repr__(self) -> str:
        head = ", ".join(f"{v:.4g}" for v in self.values[:4])
        tail = ", ..." if self.dim > 4 else ""
        return f"EmbeddingVector(dim={self.dim}, [{head}{tail}])"


@dataclass(frozen=True)
class EmbeddingRequest:
    """What to embed and how to pool the token vectors.

    ``pooling="whole_input"`` mean-pools every token of ``text``;
    ``pooling="target_span"`` mean-pools only tokens overlapping the
    character range ``span`` (required in that mode, forbidden otherwise).
    """

    text: str
    pooling: str = "whole_input"
    span: Optional[tuple[int, int]] = None

    def __post_init__(self):
        if self.pooling not in POOLING_MODES:
            raise ValueError(f"pooling must be one of {POOLING_MODES}, got {self.pooling!r}")
        if self.span is not None:
            object.__setattr__(self, "span", (int(self.span[0]), int(self.span[1])))
        if self.pooling == "target_span":
            if self.span is None:
                raise BadSpan("target_span pooling requires a span")
            start, end = self.span
            if not (0 <= start < end <= len(self.text)):
                raise BadSpan(
                    f"span {self.span} is not a non-empty in-bounds range of a "
                    f"{len(self.text)}-character text"
                )
        elif self.span is not None:
            raise BadSpan("span is only meaningful with target_span pooling")


@dataclass(frozen=True)
class ProviderKey:
    """Cache identity of a request against one model."""

    model_id: str
    request: EmbeddingRequest

    def hash64(self) -> int:
        """Stable 64-bit hash of (model_id, text, pooling, span)."""
        digest = hashlib.sha256()
        for part in (self.model_id, self.request.text, self.request.pooling):
            encoded = part.encode("utf-8")
            digest.update(len(encoded).to_bytes(8, "little"))
            digest.update(encoded)
        if self.request.span is None:
            digest.update(b"\xff")
        else:
            digest.update(b"\x01")
            digest.update(self.request.span[0].to_bytes(8, "little"))
            digest.update(self.request.span[1].to_bytes(8, "little"))
        return int.from_bytes(digest.digest()[:8], "little")


class EmbeddingProvider(ABC):
    """Source of text embeddings with a fixed dimension."""

    model_id: str

    @abstractmethod
    def embed(self, request: EmbeddingRequest) -> EmbeddingVector:
        """Embed one request. Must be deterministic per request."""

    def embed_batch(self, requests: Sequence[EmbeddingRequest]) -> list[EmbeddingVector]:
        """Embed several requests, preserving order.

        Raises:
            EmptyBatch: for an empty request list.
            BatchItemError: wrapping the first failing request's error
                together with its index.
        """
        if not requests:
            raise EmptyBatch("embed_batch needs at least one request")
        vectors = []
        for index, request in enumerate(requests):
            try:
                vectors.append(self.embed(request))
            except MatrankError as err:
                raise BatchItemError(index, err) from err
        return vectors


class MockProvider(EmbeddingProvider):
    """Deterministic stand-in provider for tests and offline runs.

    Each distinct (model_id, text, pooling, span) seeds a counter-based
    Philox generator with its 64-bit hash; the vector is ``dim`` draws
    from a standard normal, normalized to unit length. Distinct texts
    therefore get distinct, near-orthogonal directions, reproducibly
    across platforms.
    """

    def __init__(self, dim: int = 64, model_id: str | None = None):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = int(dim)
        self.model_id = model_id if model_id is not None else f"mock-{dim}d"
        self.call_count = 0

    def embed(self, request: EmbeddingRequest) -> EmbeddingVector:
        self.call_count += 1
        seed = ProviderKey(self.model_id, request).hash64()
        rng = np.random.Generator(np.random.Philox(key=seed))
        raw = rng.standard_normal(self.dim)
        norm = np.linalg.norm(raw)
        return EmbeddingVector(raw / norm)


def _error_text(response: requests.Response) -> str:
    try:
        return str(response.json()["error"])
    except (ValueError, KeyError, TypeError):
        return response.text[:200]


class RemoteProvider(EmbeddingProvider):
    """HTTP client for an embedding sidecar.

    Wire protocol: ``POST {base_url}/embed`` with JSON body
    ``{"model": str, "text": str, "pooling": str, "span": [start, end]?}``;
    a 200 response carries ``{"model": str, "dim": int, "values": [...]}``
    and any error response carries ``{"error": str}``.

    In-flight requests are bounded by ``max_in_flight`` so a single-GPU
    service is not overloaded.
    """

    def __init__(
        self,
        base_url: str,
        model_id: str,
        timeout: float = 60.0,
        max_in_flight: int = 4,
        session: requests.Session | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.model_id = model_id
        self.timeout = timeout
        self.max_in_flight = max(1, int(max_in_flight))
        self._semaphore = threading.BoundedSemaphore(self.max_in_flight)
        self._session = session if session is not None else requests.Session()
        self._dim: int | None = None
        self._dim_lock = threading.Lock()

    def embed(self, request: EmbeddingRequest) -> EmbeddingVector:
        payload: dict = {
            "model": self.model_id,
            "text": request.text,
            "pooling": request.pooling,
        }
        if request.span is not None:
            payload["span"] = list(request.span)
        try:
            with self._semaphore:
                response = self._session.post(
                    f"{self.base_url}/embed", json=payload, timeout=self.timeout
                )
        except requests.RequestException as err:
            raise ProviderUnavailable(f"embedding service unreachable: {err}") from err

        if response.status_code >= 500:
            raise ProviderUnavailable(
                f"embedding service error {response.status_code}: {_error_text(response)}"
            )
        if response.status_code != 200:
            message = _error_text(response)
            for prefix, exc_type in _REMOTE_ERROR_PREFIXES.items():
                if message.startswith(prefix):
                    raise exc_type(message)
            raise ProviderError(
                f"embedding request rejected ({response.status_code}): {message}"
            )

        try:
            body = response.json()
            values = body["values"]
            dim = int(body["dim"])
        except (ValueError, KeyError, TypeError) as err:
            raise ProviderError(f"malformed embedding response: {err}") from err
        if dim != len(values):
            raise ProviderError(f"response dim {dim} does not match {len(values)} values")
        vector = EmbeddingVector(values)
        self._check_dim(vector.dim)
        return vector

    def embed_batch(self, requests_: Sequence[EmbeddingRequest]) -> list[EmbeddingVector]:
        if not requests_:
            raise EmptyBatch("embed_batch needs at least one request")
        results: list[EmbeddingVector | None] = [None] * len(requests_)
        failures: list[tuple[int, Exception]] = []

        def run(index: int, request: EmbeddingRequest):
            try:
                results[index] = self.embed(request)
            except MatrankError as err:
                failures.append((index, err))

        workers = min(self.max_in_flight, len(requests_))
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for index, request in enumerate(requests_):
                pool.submit(run, index, request)
        if failures:
            index, cause = min(failures, key=lambda pair: pair[0])
            raise BatchItemError(index, cause) from cause
        return [vector for vector in results if vector is not None]

    def _check_dim(self, dim: int):
        with self._dim_lock:
            if self._dim is None:
                self._dim = dim
            elif dim != self._dim:
                raise DimensionMismatch(
                    f"provider {self.model_id} returned dim {dim}, expected {self._dim}"
                )


class CachedProvider(EmbeddingProvider):
    """Wrap a provider with an in-memory map and an optional persistent
    cache, guaranteeing bit-identical vectors for repeated requests and
    at most one backend call per distinct request."""

    def __init__(self, provider: EmbeddingProvider, cache=None):
        self.provider = provider
        self.model_id = provider.model_id
        self.cache = cache
        self._memory: dict[int, EmbeddingVector] = {}
        self._lock = threading.Lock()
        self._dim: int | None = None

    def embed(self, request: EmbeddingRequest) -> EmbeddingVector:
        key = ProviderKey(self.model_id, request).hash64()
        with self._lock:
            hit = self._memory.get(key)
        if hit is not None:
            return hit
        if self.cache is not None:
            cached = self.cache.get(key)
            if cached is not None:
                vector = EmbeddingVector(cached)
                self._remember(key, vector)
                return vector
        vector = self.provider.embed(request)
        self._remember(key, vector)
        if self.cache is not None:
            self.cache.put(key, vector.values)
        return vector

    def _remember(self, key: int, vector: EmbeddingVector):
        with self._lock:
            if self._dim is None:
                self._dim = vector.dim
            elif vector.dim != self._dim:
                raise DimensionMismatch(
                    f"provider {self.model_id} returned dim {vector.dim}, "
                    f"expected {self._dim}"
                )
            self._memory[key] = vector
