"""Pipeline configuration file (JSON) and the objects it wires together."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .errors import ConfigError
from .retrieval import RetrievalConfig

ANSWER_MODE = "answer"
SQL_MODE = "sql"

_TOP = {"mode", "schema", "data_dir", "fact_templates", "keyword_cache", "retrieval", "embedding", "chat", "gateway", "pipeline"}
_EMBEDDING = {"provider", "dimension", "seed", "base_url", "model", "api_key_env", "timeout"}
_CHAT = {"provider", "script", "base_url", "model", "api_key_env", "timeout"}
_GATEWAY = {"max_in_flight", "attempts", "backoff"}
_PIPELINE = {
    "decompose", "expand_context", "answer_temperature", "judge", "samples", "sample_temperature", "max_hops", "max_paths",
}
_RETRIEVAL = {"tau", "frequency_min", "doc_freq_max", "keyword_join"}


@dataclass(frozen=True)
class ProviderConfig:
    provider: str = "mock"
    dimension: int = 512
    seed: int = 0
    script: Path | None = None
    base_url: str = "https://api.openai.com/v1"
    model: str | None = None
    api_key_env: str = "OPENAI_API_KEY"
    timeout: float = 60.0


@dataclass(frozen=True)
class PipelineConfig:
    schema: Path
    mode: str = ANSWER_MODE
    data_dir: Path | None = None
    fact_templates: Path | None = None
    keyword_cache: Path | None = None
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    embedding: ProviderConfig = field(default_factory=ProviderConfig)
    chat: ProviderConfig = field(default_factory=ProviderConfig)
    max_in_flight: int = 4
    attempts: int = 3
    backoff: float = 1.0
    decompose: bool = True
    expand_context: bool = True
    answer_temperature: float = 0.0
    judge: str = "match"
    samples: int = 1
    sample_temperature: float = 0.7
    max_hops: int = 8
    max_paths: int = 256

    def __post_init__(self):
        if self.mode not in (ANSWER_MODE, SQL_MODE):
            raise ConfigError(f"mode must be 'answer' or 'sql', got {self.mode!r}")
        if self.judge not in ("match", "model"):
            raise ConfigError(f"judge must be 'match' or 'model', got {self.judge!r}")
        if self.samples < 1:
            raise ConfigError("samples must be >= 1")
        if self.mode == ANSWER_MODE and self.data_dir is None:
            raise ConfigError("answer mode needs data_dir")
        for name in ("schema", "data_dir", "fact_templates"):
            path = getattr(self, name)
            if path is not None and not Path(path).exists():
                raise ConfigError(f"{name} path {path} does not exist")
        if self.chat.script is not None and not Path(self.chat.script).exists():
            raise ConfigError(f"chat script {self.chat.script} does not exist")


def _section(doc: Mapping, name: str, allowed: set[str]) -> dict[str, Any]:
    value = doc.get(name, {})
    if not isinstance(value, dict):
        raise ConfigError(f"config section {name!r} must be an object")
    unknown = sorted(set(value) - allowed)
    if unknown:
        raise ConfigError(f"config section {name!r}: unknown field {unknown[0]!r}")
    return value


def config_from_dict(doc: Mapping, base: Path = Path(".")) -> PipelineConfig:
    """Build a config; relative paths are taken relative to ``base``."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(doc) - _TOP)
    if unknown:
        raise ConfigError(f"config: unknown field {unknown[0]!r}")
    if "schema" not in doc:
        raise ConfigError("config: missing field 'schema'")

    def path(value):
        return None if value is None else (base / value)

    emb = _section(doc, "embedding", _EMBEDDING)
    chat = _section(doc, "chat", _CHAT)
    gw = _section(doc, "gateway", _GATEWAY)
    pipe = _section(doc, "pipeline", _PIPELINE)
    try:
        retrieval = RetrievalConfig(**_section(doc, "retrieval", _RETRIEVAL))
        embedding = ProviderConfig(**{k: v for k, v in emb.items()})
        chat_cfg = ProviderConfig(**{**chat, "script": path(chat.get("script"))})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config: {exc}") from exc
    for cfg, what in ((embedding, "embedding"), (chat_cfg, "chat")):
        if cfg.provider not in ("mock", "http"):
            raise ConfigError(f"{what} provider must be 'mock' or 'http', got {cfg.provider!r}")
    if chat_cfg.provider == "mock" and chat_cfg.script is None:
        raise ConfigError("mock chat provider needs a script file")
    return PipelineConfig(
        schema=path(doc["schema"]),
        mode=doc.get("mode", ANSWER_MODE),
        data_dir=path(doc.get("data_dir")),
        fact_templates=path(doc.get("fact_templates")),
        keyword_cache=path(doc.get("keyword_cache")),
        retrieval=retrieval,
        embedding=embedding,
        chat=chat_cfg,
        **gw,
        **pipe,
    )


def load_config(path) -> PipelineConfig:
    path = Path(path)
    try:
        with path.open(encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    return config_from_dict(doc, path.parent)
