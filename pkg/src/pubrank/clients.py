"""JSON-over-HTTP clients for the embedding, scoring and chat services.

The wire protocol is owned by this repo (the sidecar implements it):

* ``POST /embed``  ``{"texts": [...]}`` -> ``{"dimension": d, "embeddings": [[...], ...]}``
* ``POST /score``  ``{"query": q, "docs": [{"id":..., "text":...}]}`` -> ``{"scores": [...]}``
* ``POST /chat``   ``{"messages": [{"role":..., "content":...}]}`` -> ``{"content": "..."}``

Every client supports a fixture store in record / replay / passthrough mode.
Replay never performs network I/O: a missing recording is an error, which is
what makes a replay-mode test run a pure function of fixtures and inputs.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError, FixtureError, ProtocolError, ServiceError, UsageError

logger = logging.getLogger(__name__)

ENV_EMBED_URL = "PUBRANK_EMBED_URL"
ENV_SCORE_URL = "PUBRANK_SCORE_URL"
ENV_CHAT_URL = "PUBRANK_CHAT_URL"
ENV_FIXTURES_DIR = "PUBRANK_FIXTURES_DIR"
ENV_FIXTURE_MODE = "PUBRANK_FIXTURE_MODE"
ENV_BEARER_TOKEN = "PUBRANK_BEARER_TOKEN"

FIXTURE_MODES = ("record", "replay", "passthrough")
_RENORM_TOLERANCE = 1e-3
_SCORE_TOLERANCE = 1e-6


@dataclass
class ChatMessage:
    role: str
    content: str

    def __post_init__(self) -> None:
        if self.role not in ("system", "user", "assistant"):
            raise DataError(f"invalid chat role {self.role!r}")

    def to_dict(self) -> dict:
        return {"role": self.role, "content": self.content}


def canonical_request(endpoint: str, body: dict) -> str:
    """Stable serialization: key order and whitespace never change the digest."""
    return json.dumps(
        {"endpoint": endpoint, "body": body},
        sort_keys=True,
        separators=(",", ":"),
        ensure_ascii=True,
    )


def request_digest(endpoint: str, body: dict) -> str:
    return hashlib.sha256(canonical_request(endpoint, body).encode("utf-8")).hexdigest()


class FixtureStore:
    """Keyed map request-digest -> recorded response, one JSON file per entry."""

    def __init__(self, directory: str | Path, mode: str):
        if mode not in FIXTURE_MODES:
            raise UsageError(f"fixture mode must be one of {FIXTURE_MODES}, got {mode!r}")
        self.directory = Path(directory)
        self.mode = mode
        self._lock = threading.Lock()
        if mode == "record":
            self.directory.mkdir(parents=True, exist_ok=True)

    def _path(self, digest: str) -> Path:
        return self.directory / f"{digest}.json"

    def lookup(self, digest: str) -> dict | None:
        path = self._path(digest)
        if not path.exists():
            return None
        try:
            return json.loads(path.read_text(encoding="utf-8"))["response"]
        except (json.JSONDecodeError, KeyError) as exc:
            raise FixtureError(f"bad fixture file {path}: {exc}") from exc

    def store(self, digest: str, endpoint: str, request: dict, response: dict) -> None:
        payload = json.dumps(
            {"endpoint": endpoint, "request": request, "response": response},
            sort_keys=True,
            ensure_ascii=True,
            indent=1,
        )
        with self._lock:
            tmp = self._path(digest).with_suffix(".tmp")
            tmp.write_text(payload, encoding="utf-8")
            os.replace(tmp, self._path(digest))


def fixture_store_from_env() -> FixtureStore | None:
    directory = os.environ.get(ENV_FIXTURES_DIR)
    if not directory:
        return None
    mode = os.environ.get(ENV_FIXTURE_MODE, "replay")
    return FixtureStore(directory, mode)


class BaseClient:
    endpoint = "/"

    def __init__(
        self,
        base_url: str | None = None,
        fixtures: FixtureStore | None = None,
        attempts: int = 3,
        backoff: float = 0.2,
        timeout: float = 60.0,
        max_inflight: int = 8,
        bearer_token: str | None = None,
    ):
        self.base_url = (base_url or "").rstrip("/")
        self.fixtures = fixtures
        self.attempts = attempts
        self.backoff = backoff
        self.timeout = timeout
        self._inflight = threading.Semaphore(max_inflight)
        self.bearer_token = bearer_token or os.environ.get(ENV_BEARER_TOKEN)

    def _post(self, body: dict) -> dict:
        digest = request_digest(self.endpoint, body)
        mode = self.fixtures.mode if self.fixtures else "passthrough"
        if mode == "replay":
            response = self.fixtures.lookup(digest)
            if response is None:
                raise FixtureError(
                    f"no recorded fixture for {self.endpoint} digest {digest[:12]} "
                    f"in {self.fixtures.directory}"
                )
            return response
        response = self._post_network(body)
        if mode == "record":
            self.fixtures.store(digest, self.endpoint, body, response)
        return response

    def _post_network(self, body: dict) -> dict:
        if not self.base_url:
            raise UsageError(f"no base URL configured for {self.endpoint}")
        url = self.base_url + self.endpoint
        payload = json.dumps(body, ensure_ascii=True).encode("utf-8")
        headers = {"Content-Type": "application/json"}
        if self.bearer_token:
            headers["Authorization"] = f"Bearer {self.bearer_token}"
        last_error: Exception | None = None
        for attempt in range(self.attempts):
            if attempt:
                time.sleep(self.backoff * (2 ** (attempt - 1)))
            request = urllib.request.Request(url, data=payload, headers=headers)
            try:
                with self._inflight:
                    with urllib.request.urlopen(request, timeout=self.timeout) as resp:
                        raw = resp.read()
                try:
                    return json.loads(raw.decode("utf-8"))
                except (json.JSONDecodeError, UnicodeDecodeError) as exc:
                    raise ProtocolError(f"{url}: malformed response body: {exc}") from exc
            except urllib.error.HTTPError as exc:
                last_error = exc
                logger.warning("%s attempt %d failed: HTTP %s", url, attempt + 1, exc.code)
            except urllib.error.URLError as exc:
                last_error = exc
                logger.warning("%s attempt %d failed: %s", url, attempt + 1, exc.reason)
        raise ServiceError(
            f"{url} failed after {self.attempts} attempts: {last_error}"
        ) from last_error


class EmbedClient(BaseClient):
    endpoint = "/embed"

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        if not texts:
            raise DataError("embed requires a non-empty list of texts")
        response = self._post({"texts": list(texts)})
        try:
            dimension = int(response["dimension"])
            rows = response["embeddings"]
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"/embed: missing dimension/embeddings: {exc}") from exc
        if len(rows) != len(texts):
            raise ProtocolError(
                f"/embed returned {len(rows)} vectors for {len(texts)} texts"
            )
        matrix = np.asarray(rows, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[1] != dimension:
            raise ProtocolError(
                f"/embed vector shape {matrix.shape} does not match dimension {dimension}"
            )
        if not np.all(np.isfinite(matrix)):
            raise ProtocolError("/embed returned non-finite components")
        norms = np.linalg.norm(matrix, axis=1)
        if np.any(np.abs(norms - 1.0) > _RENORM_TOLERANCE):
            worst = float(np.max(np.abs(norms - 1.0)))
            raise ProtocolError(f"/embed norm deviates from 1 by {worst:.2e}")
        matrix = matrix / norms[:, None]
        return matrix.astype(np.float32)


class ScoreClient(BaseClient):
    endpoint = "/score"

    def score(self, query: str, docs: Sequence[tuple[str, str]]) -> list[tuple[str, float]]:
        if not docs:
            raise DataError("score requires a non-empty list of docs")
        ids = [pmid for pmid, _ in docs]
        if len(set(ids)) != len(ids):
            raise DataError("duplicate pmids in scoring request")
        body = {
            "query": query,
            "docs": [{"id": pmid, "text": text} for pmid, text in docs],
        }
        response = self._post(body)
        scores = response.get("scores")
        if not isinstance(scores, list) or len(scores) != len(docs):
            raise ProtocolError(
                f"/score returned {len(scores) if isinstance(scores, list) else 'no'} "
                f"scores for {len(docs)} docs"
            )
        out: list[tuple[str, float]] = []
        for pmid, value in zip(ids, scores):
            score = float(value)
            if score < -_SCORE_TOLERANCE or score > 1.0 + _SCORE_TOLERANCE:
                raise ProtocolError(f"/score value {score} outside [0, 1]")
            out.append((pmid, min(max(score, 0.0), 1.0)))
        return out


class ChatClient(BaseClient):
    endpoint = "/chat"

    def chat(self, messages: Sequence[ChatMessage]) -> str:
        if not messages or messages[-1].role != "user":
            raise DataError("chat messages must end with a user message")
        for msg in messages:
            if msg.role in ("user", "assistant") and not msg.content:
                raise DataError(f"empty content for {msg.role} message")
        response = self._post({"messages": [m.to_dict() for m in messages]})
        content = response.get("content")
        if not isinstance(content, str) or not content:
            raise ProtocolError("/chat returned empty content")
        return content


def clients_from_env(
    fixtures: FixtureStore | None = None,
) -> tuple[EmbedClient, ScoreClient, ChatClient]:
    store = fixtures if fixtures is not None else fixture_store_from_env()
    return (
        EmbedClient(os.environ.get(ENV_EMBED_URL), fixtures=store),
        ScoreClient(os.environ.get(ENV_SCORE_URL), fixtures=store),
        ChatClient(os.environ.get(ENV_CHAT_URL), fixtures=store),
    )
