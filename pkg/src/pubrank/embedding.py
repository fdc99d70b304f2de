"""Text embedding providers producing unit-norm float32 vectors.

The mock provider is a pure function of (normalized text, dimension, seed)
built on a counter-based generator, so vectors are reproducible across runs
and platforms. Real models live behind the remote wire protocol; this module
never loads one in-process.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ProtocolError, UsageError

DEFAULT_DIMENSION = 1024
DEFAULT_MAX_TOKENS = 512
NORM_TOLERANCE = 1e-5

_TOKEN_RE = re.compile(r"\S+")


@dataclass
class EmbeddingProviderInfo:
    name: str
    dimension: int
    max_tokens: int = DEFAULT_MAX_TOKENS

    def __post_init__(self) -> None:
        if self.dimension <= 0:
            raise UsageError(f"dimension must be positive, got {self.dimension}")
        if self.max_tokens <= 0:
            raise UsageError(f"max_tokens must be positive, got {self.max_tokens}")


def truncate_text(text: str, max_tokens: int) -> str:
    """Prefix of ``text`` containing at most ``max_tokens`` whitespace tokens.

    Returns a literal prefix of the input and never splits a token.
    """
    if max_tokens < 1:
        raise UsageError(f"max_tokens must be >= 1, got {max_tokens}")
    count = 0
    for match in _TOKEN_RE.finditer(text):
        count += 1
        if count == max_tokens:
            return text[: match.end()]
    return text


def _text_hash64(text: str) -> int:
    normalized = " ".join(text.split()).lower()
    digest = hashlib.blake2b(normalized.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def mock_embed(text: str, dimension: int = DEFAULT_DIMENSION, seed: int = 0) -> np.ndarray:
    """Deterministic stand-in for a bi-encoder: hash text, expand, L2-normalize."""
    if dimension < 8:
        raise UsageError(f"mock embedding dimension must be >= 8, got {dimension}")
    key = np.array([_text_hash64(text), seed & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
    gen = np.random.Generator(np.random.Philox(key=key))
    values = gen.standard_normal(dimension)
    norm = float(np.linalg.norm(values))
    if norm == 0.0:  # unreachable for dimension >= 8 in practice
        values[0] = 1.0
        norm = 1.0
    return (values / norm).astype(np.float32)


def validate_vectors(matrix: np.ndarray, dimension: int) -> None:
    if matrix.ndim != 2 or matrix.shape[1] != dimension:
        raise ProtocolError(
            f"expected vectors of dimension {dimension}, got shape {matrix.shape}"
        )
    if not np.all(np.isfinite(matrix)):
        raise ProtocolError("embedding contains non-finite components")
    norms = np.linalg.norm(matrix.astype(np.float64), axis=1)
    if np.any(np.abs(norms - 1.0) > NORM_TOLERANCE):
        worst = float(np.max(np.abs(norms - 1.0)))
        raise ProtocolError(f"embedding norm deviates from 1 by {worst:.2e}")


class MockEmbeddingProvider:
    """Offline provider used throughout the test suite."""

    def __init__(
        self,
        dimension: int = DEFAULT_DIMENSION,
        seed: int = 0,
        max_tokens: int = DEFAULT_MAX_TOKENS,
    ):
        self.info = EmbeddingProviderInfo("mock", dimension, max_tokens)
        self.seed = seed

    def truncate(self, text: str) -> str:
        return truncate_text(text, self.info.max_tokens)

    def embed_raw(self, texts: Sequence[str]) -> np.ndarray:
        return np.stack(
            [mock_embed(t, self.info.dimension, self.seed) for t in texts]
        )


class RemoteEmbeddingProvider:
    """Provider backed by the /embed wire protocol.

    Tokenization and truncation belong to the service, which owns the real
    tokenizer; the client sends text as-is.
    """

    def __init__(self, client, dimension: int = DEFAULT_DIMENSION,
                 max_tokens: int = DEFAULT_MAX_TOKENS):
        self.info = EmbeddingProviderInfo("remote", dimension, max_tokens)
        self._client = client

    def truncate(self, text: str) -> str:
        return text

    def embed_raw(self, texts: Sequence[str]) -> np.ndarray:
        return self._client.embed(list(texts))


def embed_batch(provider, texts: Sequence[str]) -> np.ndarray:
    """Embed texts in order, applying the provider's truncation first."""
    if not texts:
        raise UsageError("embed_batch requires a non-empty list of texts")
    matrix = provider.embed_raw([provider.truncate(t) for t in texts])
    matrix = np.asarray(matrix, dtype=np.float32)
    validate_vectors(matrix, provider.info.dimension)
    if matrix.shape[0] != len(texts):
        raise ProtocolError(
            f"provider returned {matrix.shape[0]} vectors for {len(texts)} texts"
        )
    return matrix


def document_text(title: str, abstract: str) -> str:
    """Canonical text embedded for a corpus document."""
    return f"{title} {abstract}".strip()
