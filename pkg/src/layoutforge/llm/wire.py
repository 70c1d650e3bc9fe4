"""Chat-completion wire format. The only place that knows HTTP field names.

Request body (OpenAI-compatible)::

    {"model": ..., "temperature": ..., "max_tokens": ..., "seed": ...,
     "messages": [{"role": "user", "content": [
         {"type": "text", "text": <prompt>},
         {"type": "image_url", "image_url": {"url": "data:image/png;base64,<png>"}}  # spatial evaluator only
     ]}]}

Response: ``choices[0].message.content`` holds the text.
"""

from __future__ import annotations

import base64
from typing import Any


def chat_request(model: str, prompt: str, image: bytes | None, decode) -> dict[str, Any]:
    content: list[dict[str, Any]] = [{"type": "text", "text": prompt}]
    if image is not None:
        url = "data:image/png;base64," + base64.b64encode(image).decode("ascii")
        content.append({"type": "image_url", "image_url": {"url": url}})
    return {
        "model": model,
        "messages": [{"role": "user", "content": content}],
        "temperature": decode.temperature,
        "max_tokens": decode.max_tokens,
        "seed": decode.seed,
    }


def chat_response_text(body: dict[str, Any]) -> str:
    content = body["choices"][0]["message"]["content"]
    if isinstance(content, list):
        content = "".join(part.get("text", "") for part in content if isinstance(part, dict))
    if not isinstance(content, str):
        raise TypeError("message content is not text")
    return content


def request_prompt(body: dict[str, Any]) -> tuple[str, bytes | None]:
    """Inverse of :func:`chat_request`, for fake endpoints in tests and scripts."""
    text, image = "", None
    for part in body["messages"][0]["content"]:
        if part["type"] == "text":
            text += part["text"]
        elif part["type"] == "image_url":
            image = base64.b64decode(part["image_url"]["url"].split(",", 1)[1])
    return text, image


def chat_response(text: str) -> dict[str, Any]:
    return {"choices": [{"index": 0, "message": {"role": "assistant", "content": text}}]}
