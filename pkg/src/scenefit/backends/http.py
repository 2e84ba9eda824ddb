"""HTTP adapter for OpenAI-compatible chat endpoints serving a VLM.

Credentials are read from an environment variable named in the run config;
they never appear in config files. Every transport or provider failure is
mapped to :class:`Timeout`, :class:`RateLimited` or :class:`ProviderError`.
"""

from __future__ import annotations

import base64
import io
import logging
import os
import time
from typing import Callable, TypeVar

import httpx
from PIL import Image

from scenefit.backends.base import VlmBackend
from scenefit.errors import BackendError, ProviderError, RateLimited, Timeout
from scenefit.scene_model import SceneImage

log = logging.getLogger(__name__)

T = TypeVar("T")

DEFAULT_TIMEOUT = 60.0
DEFAULT_RETRIES = 2


def call_with_retries(fn: Callable[[], T], retries: int = DEFAULT_RETRIES, backoff: float = 1.0,
                      sleep: Callable[[float], None] = time.sleep) -> T:
    """Run ``fn``; retry on Timeout / RateLimited / 5xx ProviderError."""
    attempt = 0
    while True:
        try:
            return fn()
        except (Timeout, RateLimited, ProviderError) as exc:
            retryable = not isinstance(exc, ProviderError) or getattr(exc, "retryable", False)
            if not retryable or attempt >= retries:
                raise
            attempt += 1
            log.warning("backend call failed (%s), retry %d/%d", exc, attempt, retries)
            sleep(backoff * attempt)


def _png_data_url(image: SceneImage) -> str:
    buf = io.BytesIO()
    Image.fromarray(image.pixels, mode="RGB").save(buf, format="PNG")
    return "data:image/png;base64," + base64.b64encode(buf.getvalue()).decode("ascii")


class OpenAICompatibleVlm(VlmBackend):
    """Chat-completions VLM (LLaVA / Qwen-VL behind vLLM, etc.).

    Decoding parameters default to ``temperature=0`` and ``max_tokens=64``;
    they are config-exposed because no published setting exists.
    """

    deterministic = False

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key_env: str | None = None,
        timeout: float = DEFAULT_TIMEOUT,
        retries: int = DEFAULT_RETRIES,
        temperature: float = 0.0,
        max_tokens: int = 64,
        max_concurrency: int | None = None,
        name: str | None = None,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.name = name or f"openai-compatible:{model}"
        self.endpoint = endpoint.rstrip("/")
        self.model = model
        self.api_key_env = api_key_env
        self.timeout = timeout
        self.retries = retries
        self.temperature = temperature
        self.max_tokens = max_tokens
        self.max_concurrency = max_concurrency
        self._sleep = sleep
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.api_key_env:
            key = os.environ.get(self.api_key_env)
            if not key:
                raise ProviderError(f"environment variable {self.api_key_env} is not set")
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _post(self, payload: dict) -> str:
        try:
            resp = self._client.post(f"{self.endpoint}/chat/completions", json=payload, headers=self._headers())
        except httpx.TimeoutException as exc:
            raise Timeout(f"{self.name}: request timed out after {self.timeout}s") from exc
        except httpx.HTTPError as exc:
            err = ProviderError(f"{self.name}: transport error: {exc}")
            err.retryable = True  # type: ignore[attr-defined]
            raise err from exc
        if resp.status_code == 429:
            raise RateLimited(f"{self.name}: rate limited")
        if resp.status_code >= 400:
            err = ProviderError(f"{self.name}: HTTP {resp.status_code}: {resp.text[:200]}")
            err.retryable = resp.status_code >= 500  # type: ignore[attr-defined]
            raise err
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"{self.name}: unexpected response body") from exc

    def answer(self, image: SceneImage, prompt: str) -> str:
        payload = {
            "model": self.model,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
            "messages": [
                {
                    "role": "user",
                    "content": [
                        {"type": "image_url", "image_url": {"url": _png_data_url(image)}},
                        {"type": "text", "text": prompt},
                    ],
                }
            ],
        }
        try:
            return call_with_retries(lambda: self._post(payload), self.retries, sleep=self._sleep)
        except BackendError:
            raise
        except Exception as exc:  # never leak provider-specific errors
            raise ProviderError(f"{self.name}: {exc}") from exc
