"""Gateway wrapping an embedding provider and a chat provider.

Adds an in-flight request cap, retries for retry-able provider errors and an
embedding cache. Provider results are passed through unchanged.
"""
from __future__ import annotations

import logging
import threading
import time
from typing import Callable, Mapping

import numpy as np

from ..errors import EmptyText, ProviderError
from .providers import ChatProvider, ChatRequest, ChatResponse, EmbeddingProvider
from .templates import render_template

log = logging.getLogger(__name__)


def _check_unit(vec: np.ndarray) -> np.ndarray:
    vec = np.asarray(vec, dtype=float)
    if abs(float(np.linalg.norm(vec)) - 1.0) > 1e-6:
        raise ProviderError("provider returned a non-unit embedding", kind="protocol", retryable=False)
    return vec


def embed(provider: EmbeddingProvider, text: str) -> np.ndarray:
    if not text or not text.strip():
        raise EmptyText("cannot embed empty text")
    return _check_unit(provider.embed(text))


def complete(provider: ChatProvider, request: ChatRequest) -> ChatResponse:
    return provider.complete(request)


class ModelGateway:
    def __init__(
        self,
        embedder: EmbeddingProvider | None,
        chat: ChatProvider | None,
        max_in_flight: int = 4,
        attempts: int = 3,
        backoff: float = 1.0,
        cache_embeddings: bool = True,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        if attempts < 1:
            raise ValueError("attempts must be >= 1")
        self.embedder = embedder
        self.chat = chat
        self.max_in_flight = max_in_flight
        self.attempts = attempts
        self.backoff = backoff
        self._sleep = sleep
        self._slots = threading.BoundedSemaphore(max_in_flight)
        self._cache: dict[str, np.ndarray] | None = {} if cache_embeddings else None
        self._cache_lock = threading.Lock()

    def _call(self, fn, *args):
        delay = self.backoff
        for attempt in range(1, self.attempts + 1):
            try:
                with self._slots:
                    return fn(*args)
            except ProviderError as exc:
                if not exc.retryable or attempt == self.attempts:
                    raise
                log.warning("provider call failed (attempt %d/%d): %s", attempt, self.attempts, exc)
                self._sleep(delay)
                delay *= 2

    @property
    def dimension(self) -> int | None:
        return getattr(self.embedder, "dimension", None)

    def embed(self, text: str) -> np.ndarray:
        if self.embedder is None:
            raise ProviderError("no embedding provider configured", kind="config", retryable=False)
        if not text or not text.strip():
            raise EmptyText("cannot embed empty text")
        if self._cache is not None:
            with self._cache_lock:
                hit = self._cache.get(text)
            if hit is not None:
                return hit
        vec = self._call(embed, self.embedder, text)
        vec.setflags(write=False)
        if self._cache is not None:
            with self._cache_lock:
                self._cache.setdefault(text, vec)
        return vec

    __call__ = embed

    def complete(self, request: ChatRequest) -> ChatResponse:
        if self.chat is None:
            raise ProviderError("no chat provider configured", kind="config", retryable=False)
        return self._call(complete, self.chat, request)

    def ask(self, template_id: str, bindings: Mapping[str, str], temperature: float = 0.0, max_tokens: int = 1024) -> str:
        """Render ``template_id`` with ``bindings`` and return the completion text."""
        prompt = render_template(template_id, bindings)
        request = ChatRequest(prompt, template_id, dict(bindings), temperature, max_tokens)
        return self.complete(request).text
