"""Prompt templates with ``{placeholder}`` slots.

Bodies live as text assets next to this module. Substitution is a plain
byte-exact replacement of ``{identifier}`` slots; literal JSON braces in the
bodies are left alone because they never wrap a bare identifier.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Mapping

from layoutforge.errors import UnboundPlaceholder

TEMPLATE_IDS = (
    "cot_datagen",
    "lifting",
    "quant_eval",
    "spatial_eval",
    "description_gen",
    "simple_reward",
    "bev_generate",
    "alignment_feedback",
)
# the six prompts reproduced verbatim; the last two are authored in-repo
VERBATIM_IDS = TEMPLATE_IDS[:6]
TEMPLATE_VERSION = 1

_SLOT = re.compile(r"\{([A-Za-z_][A-Za-z0-9_]*)\}")


@dataclass(frozen=True)
class PromptTemplate:
    id: str
    body: str

    @property
    def placeholders(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for m in _SLOT.finditer(self.body):
            seen.setdefault(m.group(1))
        return tuple(seen)

    def render(self, bindings: Mapping[str, object]) -> str:
        def sub(m: re.Match) -> str:
            name = m.group(1)
            if name not in bindings:
                raise UnboundPlaceholder(name)
            return str(bindings[name])

        return _SLOT.sub(sub, self.body)


def _read(path: str) -> str:
    text = resources.files("layoutforge.llm").joinpath("templates", *path.split("/")).read_text(encoding="utf-8")
    return text[:-1] if text.endswith("\n") else text


@lru_cache(maxsize=None)
def get_template(template_id: str) -> PromptTemplate:
    if template_id not in TEMPLATE_IDS:
        raise KeyError(f"unknown template {template_id!r}")
    return PromptTemplate(template_id, _read(f"{template_id}.txt"))


@lru_cache(maxsize=None)
def get_fragment(name: str) -> PromptTemplate:
    """Authored add-ons appended to a base prompt (layout tail, counts, suggestions)."""
    return PromptTemplate(name, _read(f"fragments/{name}.txt"))


def render_prompt(template_id: str, bindings: Mapping[str, object]) -> str:
    return get_template(template_id).render(bindings)
