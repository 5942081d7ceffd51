"""Prompt templates shipped with the package.

Template files may start with ``%%`` comment lines and mark reconstructed
spans with ``[[recon]]...[[/recon]]``; both are removed when loading.
Placeholders are ``{name}`` with lowercase names and are substituted in a
single pass, so bound values are inserted byte for byte.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Mapping

from ..errors import UnboundPlaceholder

TEMPLATE_IDS = ("decompose", "answer", "attribute_select", "sql_generate", "judge")

_PLACEHOLDER = re.compile(r"\{([a-z_]+)\}")
_RECON = re.compile(r"\[\[/?recon\]\]")


@dataclass(frozen=True)
class PromptTemplate:
    id: str
    body: str

    @property
    def placeholders(self) -> tuple[str, ...]:
        return tuple(dict.fromkeys(_PLACEHOLDER.findall(self.body)))

    def render(self, bindings: Mapping[str, str]) -> str:
        missing = [p for p in self.placeholders if p not in bindings]
        if missing:
            raise UnboundPlaceholder(f"template {self.id!r} needs a binding for {missing[0]!r}")
        extra = sorted(set(bindings) - set(self.placeholders))
        if extra:
            raise UnboundPlaceholder(f"template {self.id!r} has no placeholder {extra[0]!r}")
        return _PLACEHOLDER.sub(lambda m: str(bindings[m.group(1)]), self.body)


def parse_template(template_id: str, text: str) -> PromptTemplate:
    lines = text.splitlines(keepends=True)
    while lines and lines[0].startswith("%%"):
        lines.pop(0)
    return PromptTemplate(template_id, _RECON.sub("", "".join(lines)).rstrip("\n") + "\n")


@lru_cache(maxsize=None)
def get_template(template_id: str) -> PromptTemplate:
    if template_id not in TEMPLATE_IDS:
        raise KeyError(f"unknown template {template_id!r}")
    text = resources.files(__package__).joinpath("templates", f"{template_id}.txt").read_text(encoding="utf-8")
    return parse_template(template_id, text)


def render_template(template_id: str, bindings: Mapping[str, str]) -> str:
    return get_template(template_id).render(bindings)
