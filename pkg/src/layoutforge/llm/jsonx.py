"""Pull the JSON payload out of a chatty model response."""

from __future__ import annotations

import json
from typing import Any

from layoutforge.errors import NoStructureFound, UnbalancedStructure

_CLOSERS = {"{": "}", "[": "]"}


def _balanced_end(text: str, start: int) -> int | None:
    """Index one past the bracket matching ``text[start]``, or None if unbalanced."""
    stack = []
    in_string = False
    escaped = False
    for i in range(start, len(text)):
        ch = text[i]
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            in_string = True
        elif ch in _CLOSERS:
            stack.append(_CLOSERS[ch])
        elif ch in "}]":
            if not stack or stack.pop() != ch:
                return None
            if not stack:
                return i + 1
    return None


def extract_json(response: str) -> Any:
    """Return the first balanced JSON object or array in ``response``.

    Code fences and surrounding prose are ignored. Candidates that are
    balanced but not valid JSON (``{like this}`` in prose) are skipped.
    """
    pos = 0
    saw_unbalanced = False
    while True:
        starts = [i for i in (response.find("{", pos), response.find("[", pos)) if i >= 0]
        if not starts:
            break
        start = min(starts)
        end = _balanced_end(response, start)
        if end is None:
            saw_unbalanced = True
            pos = start + 1
            continue
        try:
            return json.loads(response[start:end])
        except json.JSONDecodeError:
            pos = end
    if saw_unbalanced:
        raise UnbalancedStructure("response opens a JSON structure that never closes")
    raise NoStructureFound("response contains no JSON object or array")
