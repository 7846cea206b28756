"""Pluggable text-generation / embedding providers."""

from __future__ import annotations

from typing import Optional

from .base import (
    ChatClient, ChatRequest, EmbeddingClient, Gateway, GatewayConfig, GatewayError,
    Gateways, ParseError, ProviderKind, ReplyCache, TransportError,
    parse_code_name, parse_text, parse_value_records,
)
from .mock import MockChatClient, MockEmbeddingClient, MockWorld, hashed_bow, mock_gateway
from .prompts import TEMPLATES, PromptTemplate, TemplateId
from .remote import RemoteChatClient, RemoteEmbeddingClient


def build_gateway(config: GatewayConfig, world: Optional[MockWorld] = None) -> Gateway:
    """Instantiate the client matching ``config.provider_kind``."""
    if config.provider_kind is ProviderKind.MOCK:
        if world is None:
            world = MockWorld.from_dict(config.options.get("world", {}))
        return Gateway(config, chat=MockChatClient(world, config.model_name, config.options),
                       embedder=MockEmbeddingClient(world))
    if config.provider_kind is ProviderKind.REMOTE_CHAT:
        return Gateway(config, chat=RemoteChatClient(config))
    return Gateway(config, embedder=RemoteEmbeddingClient(config))


__all__ = [
    "ChatClient", "ChatRequest", "EmbeddingClient", "Gateway", "GatewayConfig", "GatewayError",
    "Gateways", "ParseError", "ProviderKind", "ReplyCache", "TransportError",
    "parse_code_name", "parse_text", "parse_value_records",
    "MockChatClient", "MockEmbeddingClient", "MockWorld", "hashed_bow", "mock_gateway",
    "TEMPLATES", "PromptTemplate", "TemplateId",
    "RemoteChatClient", "RemoteEmbeddingClient", "build_gateway",
]
