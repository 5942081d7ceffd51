from .core import ModelGateway, complete, embed
from .providers import (
    ChatRequest,
    ChatResponse,
    MockChatProvider,
    MockEmbeddingProvider,
    OpenAICompatibleProvider,
    ScriptEntry,
    bindings_digest,
    mock_embed,
)
from .templates import TEMPLATE_IDS, PromptTemplate, get_template, parse_template, render_template

__all__ = [
    "ChatRequest",
    "ChatResponse",
    "MockChatProvider",
    "MockEmbeddingProvider",
    "ModelGateway",
    "OpenAICompatibleProvider",
    "PromptTemplate",
    "ScriptEntry",
    "TEMPLATE_IDS",
    "bindings_digest",
    "complete",
    "embed",
    "get_template",
    "mock_embed",
    "parse_template",
    "render_template",
]
