"""Embedding and chat providers: deterministic mocks and an OpenAI-compatible HTTP client."""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Mapping, Protocol, Sequence

import numpy as np

from ..errors import ProviderError, UnscriptedMockInput
from ..text import tokenize


@dataclass(frozen=True)
class ChatRequest:
    prompt: str
    template_id: str | None = None
    bindings: Mapping[str, str] = field(default_factory=dict)
    temperature: float = 0.0
    max_tokens: int = 1024

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")


@dataclass(frozen=True)
class ChatResponse:
    text: str
    usage: Mapping[str, int] = field(default_factory=dict)


class EmbeddingProvider(Protocol):
    dimension: int

    def embed(self, text: str) -> np.ndarray: ...


class ChatProvider(Protocol):
    def complete(self, request: ChatRequest) -> ChatResponse: ...


# ---------------------------------------------------------------------------
# mocks


@lru_cache(maxsize=65536)
def _token_vector(token: str, dimension: int, seed: int) -> np.ndarray:
    digest = hashlib.sha256(f"{seed}\x1f{token}".encode("utf-8")).digest()
    rng = np.random.Generator(np.random.PCG64(int.from_bytes(digest[:16], "little")))
    vec = rng.standard_normal(dimension)
    vec /= np.linalg.norm(vec)
    vec.setflags(write=False)
    return vec


def mock_embed(text: str, dimension: int = 64, seed: int = 0) -> np.ndarray:
    """Sum of per-token pseudo-random unit vectors, L2-normalized; ``e_0`` for token-less text."""
    if dimension < 8:
        raise ValueError("mock embeddings need dimension >= 8")
    out = np.zeros(dimension)
    for tok in tokenize(text):
        out += _token_vector(tok, dimension, seed)
    norm = np.linalg.norm(out)
    if norm < 1e-12:
        out = np.zeros(dimension)
        out[0] = 1.0
        return out
    return out / norm


class MockEmbeddingProvider:
    def __init__(self, dimension: int = 64, seed: int = 0):
        if dimension < 8:
            raise ValueError("mock embeddings need dimension >= 8")
        self.dimension = dimension
        self.seed = seed

    def embed(self, text: str) -> np.ndarray:
        return mock_embed(text, self.dimension, self.seed)


def bindings_digest(bindings: Mapping[str, str]) -> str:
    canonical = json.dumps({k: bindings[k] for k in sorted(bindings)}, ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class ScriptEntry:
    """A scripted reply for ``template`` whenever the request's bindings equal ``bindings`` on its keys."""

    template: str
    bindings: Mapping[str, str]
    response: str

    @property
    def keys(self) -> tuple[str, ...]:
        return tuple(sorted(self.bindings))

    @property
    def digest(self) -> str:
        return bindings_digest(self.bindings)


class MockChatProvider:
    """Answers from a script keyed by (template id, digest of bound placeholders).

    Entries may bind only some placeholders (e.g. just the question); the
    request is then matched on those keys. Anything unscripted raises.
    """

    def __init__(self, entries: Sequence[ScriptEntry] = ()):
        self._table: dict[tuple[str, tuple[str, ...], str], str] = {}
        self._keysets: dict[str, list[tuple[str, ...]]] = {}
        for e in entries:
            self.add(e)

    def add(self, entry: ScriptEntry) -> None:
        self._table[(entry.template, entry.keys, entry.digest)] = entry.response
        keysets = self._keysets.setdefault(entry.template, [])
        if entry.keys not in keysets:
            # most specific key sets are tried first
            keysets.append(entry.keys)
            keysets.sort(key=lambda ks: (-len(ks), ks))

    @classmethod
    def from_file(cls, path) -> "MockChatProvider":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        return cls([ScriptEntry(d["template"], d["bindings"], d["response"]) for d in data])

    def complete(self, request: ChatRequest) -> ChatResponse:
        tid = request.template_id
        bindings = dict(request.bindings)
        for keys in self._keysets.get(tid, ()):
            if not all(k in bindings for k in keys):
                continue
            hit = self._table.get((tid, keys, bindings_digest({k: bindings[k] for k in keys})))
            if hit is not None:
                return ChatResponse(hit, {"prompt_tokens": len(request.prompt.split()), "completion_tokens": len(hit.split())})
        raise UnscriptedMockInput(tid, bindings_digest(bindings))


# ---------------------------------------------------------------------------
# HTTP


class OpenAICompatibleProvider:
    """Embeddings and chat completions over the OpenAI-style REST contract.

    ``transport`` lets tests substitute an ``httpx`` transport (for example a
    cassette replay) so no network is touched.
    """

    def __init__(
        self,
        base_url: str = "https://api.openai.com/v1",
        chat_model: str = "gpt-4o",
        embedding_model: str = "text-embedding-3-small",
        dimension: int = 1536,
        api_key: str | None = None,
        api_key_env: str = "OPENAI_API_KEY",
        timeout: float = 60.0,
        transport=None,
    ):
        import httpx

        self.base_url = base_url.rstrip("/")
        self.chat_model = chat_model
        self.embedding_model = embedding_model
        self.dimension = dimension
        key = api_key if api_key is not None else os.environ.get(api_key_env, "")
        headers = {"Content-Type": "application/json"}
        if key:
            headers["Authorization"] = f"Bearer {key}"
        self._client = httpx.Client(base_url=self.base_url, headers=headers, timeout=timeout, transport=transport)

    def _post(self, path: str, payload: dict) -> dict[str, Any]:
        import httpx

        try:
            resp = self._client.post(path, json=payload)
        except httpx.TimeoutException as exc:
            raise ProviderError(f"request to {path} timed out: {exc}", kind="timeout", retryable=True) from exc
        except httpx.HTTPError as exc:
            raise ProviderError(f"request to {path} failed: {exc}", kind="transport", retryable=True) from exc
        if resp.status_code in (401, 403):
            raise ProviderError(f"{path}: authentication rejected ({resp.status_code})", kind="auth", retryable=False)
        if resp.status_code == 429 or resp.status_code >= 500:
            raise ProviderError(f"{path}: server returned {resp.status_code}", kind="transport", retryable=True)
        if resp.status_code >= 400:
            raise ProviderError(f"{path}: request rejected ({resp.status_code}): {resp.text[:200]}", kind="request", retryable=False)
        try:
            return resp.json()
        except ValueError as exc:
            raise ProviderError(f"{path}: response is not JSON", kind="protocol", retryable=False) from exc

    def embed(self, text: str) -> np.ndarray:
        body = self._post("/embeddings", {"model": self.embedding_model, "input": text})
        try:
            vec = np.asarray(body["data"][0]["embedding"], dtype=float)
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderError("embedding response lacks data[0].embedding", kind="protocol", retryable=False) from exc
        norm = np.linalg.norm(vec)
        if norm == 0:
            raise ProviderError("provider returned a zero embedding", kind="protocol", retryable=False)
        return vec / norm

    def complete(self, request: ChatRequest) -> ChatResponse:
        body = self._post(
            "/chat/completions",
            {
                "model": self.chat_model,
                "messages": [{"role": "user", "content": request.prompt}],
                "temperature": request.temperature,
                "max_tokens": request.max_tokens,
            },
        )
        try:
            text = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderError("chat response lacks choices[0].message.content", kind="protocol", retryable=False) from exc
        return ChatResponse(text, dict(body.get("usage") or {}))

    def close(self) -> None:
        self._client.close()
