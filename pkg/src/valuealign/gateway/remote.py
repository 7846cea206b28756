"""HTTP clients for chat-completion and embedding style endpoints."""

from __future__ import annotations

import os
from typing import Optional, Sequence

import httpx

from .base import ChatClient, ChatRequest, EmbeddingClient, GatewayConfig, TransportError

DEFAULT_CHAT_REPLY_PATH = ("choices", 0, "message", "content")
DEFAULT_EMBED_ITEMS_PATH = ("data",)


def _dig(obj, path):
    for step in path:
        obj = obj[step]
    return obj


class _HttpBase:
    def __init__(self, config: GatewayConfig, transport: Optional[httpx.BaseTransport] = None):
        if not config.endpoint:
            raise ValueError("remote provider needs an endpoint")
        self.config = config
        headers = {"Content-Type": "application/json"}
        if config.api_key_env:
            key = os.environ.get(config.api_key_env)
            if not key:
                raise ValueError(f"environment variable {config.api_key_env} is not set")
            headers["Authorization"] = f"Bearer {key}"
        self._client = httpx.Client(timeout=config.request_timeout, headers=headers,
                                    transport=transport)
        self.calls = 0

    def _post(self, body: dict) -> dict:
        self.calls += 1
        try:
            resp = self._client.post(self.config.endpoint, json=body)
        except httpx.HTTPError as exc:
            raise TransportError(f"{type(exc).__name__} contacting provider") from exc
        if resp.status_code >= 400:
            # body may echo request data; keep only the status
            raise TransportError(f"provider returned HTTP {resp.status_code}")
        try:
            return resp.json()
        except ValueError as exc:
            raise TransportError("provider returned a non-JSON body") from exc

    def close(self):
        self._client.close()


class RemoteChatClient(_HttpBase, ChatClient):
    """OpenAI-style ``/chat/completions`` by default; paths are configurable via options."""

    def complete(self, request: ChatRequest) -> str:
        opts = self.config.options
        body = {
            "model": self.config.model_name,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
        }
        body.update(opts.get("extra_body", {}))
        data = self._post(body)
        try:
            return str(_dig(data, opts.get("reply_path", DEFAULT_CHAT_REPLY_PATH)))
        except (KeyError, IndexError, TypeError) as exc:
            raise TransportError("reply body lacks the configured content path") from exc


class RemoteEmbeddingClient(_HttpBase, EmbeddingClient):
    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        opts = self.config.options
        body = {"model": self.config.model_name, "input": list(texts)}
        body.update(opts.get("extra_body", {}))
        data = self._post(body)
        try:
            items = _dig(data, opts.get("items_path", DEFAULT_EMBED_ITEMS_PATH))
            field = opts.get("vector_field", "embedding")
            return [list(map(float, item[field])) for item in items]
        except (KeyError, IndexError, TypeError) as exc:
            raise TransportError("embedding body lacks the configured vector path") from exc
