"""
Reranker Service Layer

rerank_once dispatches one reranking to a backend:
- remote_llm: POST a chat-completion body, parse the <output> span, retry
  unparseable answers up to max_retries times
- simulator: draw from a Mallows model centred on the request's ideal order

Remote answers are cached through the Django cache, keyed by model, prompt
and vote index, so re-runs do not re-query the service while the N votes of
one user stay independent.
"""

import hashlib
import logging
from typing import Optional

import numpy as np
import requests
from django.conf import settings
from django.core.cache import cache

from ensembles.mallows import mallows_sample
from ensembles.models import MallowsModel, Permutation

from .models import (
    PermutationParseError,
    RemoteLLMBackend,
    RerankConfigError,
    RerankRequest,
    RerankTimeoutError,
    RerankTransportError,
    RetriesExhaustedError,
    SimulatorBackend,
)
from .parsers import parse_permutation
from .prompts import build_prompt

logger = logging.getLogger(__name__)


def rerank_cache_key(model_name: str, prompt: str, vote_index: int) -> str:
    digest = hashlib.sha256(f"{model_name}\n{prompt}".encode("utf-8")).hexdigest()
    return f"rerank:{digest}:{vote_index}"


def extract_text(payload, path) -> str:
    """Follow `path` (keys / list indices) into a JSON response."""
    node = payload
    for key in path:
        try:
            node = node[key]
        except (KeyError, IndexError, TypeError):
            raise RerankTransportError(
                f"Response has no text at {'/'.join(str(k) for k in path)}"
            ) from None
    if not isinstance(node, str):
        raise RerankTransportError(f"Response text is not a string: {type(node).__name__}")
    return node


class RemoteReranker:
    """HTTP client for a chat-completion style reranking endpoint."""

    def __init__(self, backend: RemoteLLMBackend):
        self.backend = backend

    def headers(self):
        headers = {"Content-Type": "application/json"}
        api_key = self.backend.api_key
        if api_key is None:
            api_key = getattr(settings, "VGCL_API_KEY", "")
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        return headers

    def request_body(self, prompt: str):
        return {
            "model": self.backend.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.backend.temperature,
        }

    def complete(self, prompt: str) -> str:
        """
        Raises:
            RerankTimeoutError: no answer within the configured timeout
            RerankTransportError: connection error, HTTP error or bad payload
        """
        backend = self.backend
        try:
            response = requests.post(
                backend.endpoint,
                json=self.request_body(prompt),
                headers=self.headers(),
                timeout=backend.timeout,
            )
            response.raise_for_status()
            payload = response.json()
        except requests.exceptions.Timeout as exc:
            error_msg = f"Reranker timed out after {backend.timeout}s: {exc}"
            logger.error(error_msg)
            raise RerankTimeoutError(error_msg) from exc
        except requests.exceptions.RequestException as exc:
            error_msg = f"Reranker request failed: {exc}"
            logger.error(error_msg)
            raise RerankTransportError(error_msg) from exc
        except ValueError as exc:
            raise RerankTransportError(f"Reranker answered with invalid JSON: {exc}") from exc

        return extract_text(payload, backend.response_path)

    def rerank(self, req: RerankRequest, vote_index: int = 0) -> Permutation:
        backend = self.backend
        prompt = build_prompt(req)
        key = rerank_cache_key(backend.model_name, prompt, vote_index)
        last_error: Optional[PermutationParseError] = None

        cached = cache.get(key) if backend.use_cache else None
        if cached is not None:
            try:
                return parse_permutation(cached, req.K)
            except PermutationParseError:
                cache.delete(key)

        for attempt in range(backend.attempts):
            text = self.complete(prompt)

            try:
                permutation = parse_permutation(text, req.K)
            except PermutationParseError as exc:
                last_error = exc
                logger.warning(
                    f"Unparseable reranker output (user {req.user_index}, vote {vote_index}, "
                    f"attempt {attempt + 1}/{backend.attempts}): {exc}"
                )
                continue

            if backend.use_cache:
                cache.set(key, text, timeout=settings.VGCL_RERANK_CACHE_TIMEOUT)
            return permutation

        error_msg = (
            f"Reranking failed after {backend.attempts} attempts "
            f"(user {req.user_index}, vote {vote_index}): {last_error}"
        )
        logger.error(error_msg)
        raise RetriesExhaustedError(error_msg, last_error=last_error)


def simulate_rerank(backend: SimulatorBackend, req: RerankRequest, rng) -> Permutation:
    center = Permutation.from_order(backend.ideal_order(req))
    return mallows_sample(MallowsModel(center=center, theta=backend.theta), rng)


def rerank_once(
    backend,
    req: RerankRequest,
    rng: Optional[np.random.Generator] = None,
    vote_index: int = 0,
) -> Permutation:
    """
    One reranking of `req` by `backend`.

    Raises:
        RerankTransportError / RerankTimeoutError: remote call failed
        RetriesExhaustedError: every remote answer was unparseable
    """
    if isinstance(backend, SimulatorBackend):
        rng = rng if rng is not None else np.random.default_rng()
        return simulate_rerank(backend, req, rng)
    if isinstance(backend, RemoteLLMBackend):
        return RemoteReranker(backend).rerank(req, vote_index=vote_index)
    raise RerankConfigError(f"Unsupported reranker backend: {type(backend).__name__}")
