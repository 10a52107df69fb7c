"""Helpers for digging structured payloads out of LLM reply text."""
from __future__ import annotations

import json
import re


class JsonExtractError(ValueError):
    """No balanced JSON value could be decoded from a reply."""


_decoder = json.JSONDecoder()
_CANDIDATE_RE = re.compile(r"[\[{]")


def strip_code_fences(text: str) -> str:
    """Remove a leading/trailing markdown code fence if the reply is wrapped in one."""
    stripped = text.strip()
    if not stripped.startswith("```"):
        return text
    lines = stripped.splitlines()
    lines = lines[1:]
    if lines and lines[-1].strip() == "```":
        lines = lines[:-1]
    return "\n".join(lines)


def first_json_value(text: str):
    """Decode the first balanced JSON object or array found in the reply.

    Models routinely wrap JSON in prose or markdown fences; scanning for the
    first decodable value tolerates both.
    """
    cleaned = strip_code_fences(text)
    for match in _CANDIDATE_RE.finditer(cleaned):
        try:
            value, _ = _decoder.raw_decode(cleaned, match.start())
        except json.JSONDecodeError:
            continue
        return value
    raise JsonExtractError("no JSON object or array found in reply")


def is_not_mentioned(text: str) -> bool:
    return text.strip().rstrip(".").strip().casefold() == "not mentioned"


def whitespace_token_count(text: str) -> int:
    return len(text.split())
