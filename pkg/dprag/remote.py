# dprag/remote.py
"""
Generator backed by a completion-style HTTP endpoint.

Request: {model, prompt, max_tokens: 1, temperature: 0}. The token is the first
whitespace-delimited piece of ``choices[0].text``; an empty completion maps to
EOS. Unknown surfaces extend the vocabulary unless it is frozen.
"""

from __future__ import annotations

import asyncio
import logging
import os
from typing import Optional

import httpx
import openai

from dprag import settings
from dprag.errors import BackendError
from dprag.generation import (
    GenerationContext,
    PromptRendering,
    Token,
    Vocabulary,
    fit_context,
)

logger = logging.getLogger(__name__)


def _default_timeout(seconds: float) -> httpx.Timeout:
    return httpx.Timeout(seconds, connect=min(10.0, seconds))


class RemoteGenerator:
    def __init__(
        self,
        endpoint: str,
        model: str,
        vocabulary: Optional[Vocabulary] = None,
        rendering: Optional[PromptRendering] = None,
        api_key_env: str = settings.API_KEY_ENV,
        timeout: float = settings.REMOTE_TIMEOUT,
        retries: int = settings.REMOTE_RETRIES,
        max_in_flight: int = settings.REMOTE_MAX_IN_FLIGHT,
        window: Optional[int] = None,
        http_client: Optional[httpx.AsyncClient] = None,
    ) -> None:
        self.endpoint = endpoint.rstrip("/")
        self.model = model
        self.vocabulary = vocabulary if vocabulary is not None else Vocabulary()
        self.rendering = rendering or PromptRendering()
        self.window = window
        self._semaphore = asyncio.Semaphore(max_in_flight)
        # The backend may be unauthenticated; the SDK still wants a non-empty key.
        api_key = os.getenv(api_key_env) or "EMPTY"
        self._client = openai.AsyncOpenAI(
            base_url=self.endpoint,
            api_key=api_key,
            timeout=_default_timeout(timeout),
            max_retries=retries,
            http_client=http_client,
        )

    def _map_text(self, text: Optional[str]) -> Token:
        pieces = (text or "").split()
        if not pieces:
            return self.vocabulary.eos
        try:
            token = self.vocabulary.add(pieces[0])
        except KeyError:
            raise BackendError(f"backend returned a token outside the closed vocabulary: {pieces[0]!r}")
        return token

    async def next_token(self, ctx: GenerationContext) -> Token:
        prompt = self.rendering.render(fit_context(ctx, self.rendering, self.window))
        async with self._semaphore:
            try:
                resp = await self._client.completions.create(
                    model=self.model,
                    prompt=prompt,
                    max_tokens=1,
                    temperature=0,
                )
            except openai.APIStatusError as exc:
                raise BackendError("completion request failed", exc.status_code, exc.response.text) from exc
            except openai.APITimeoutError as exc:
                raise BackendError("completion request timed out") from exc
            except openai.APIConnectionError as exc:
                raise BackendError(f"completion backend unreachable: {exc}") from exc

        if not resp.choices:
            raise BackendError("completion response has no choices", body=resp.model_dump_json())
        return self._map_text(resp.choices[0].text)

    async def aclose(self) -> None:
        await self._client.close()
