"""Small parsers for agent replies: embedded JSON and fenced blocks."""

from __future__ import annotations

import json
import re
from typing import Any

_DECODER = json.JSONDecoder()


def extract_json(text: str) -> Any | None:
    """First parseable JSON value embedded anywhere in the text, else None.

    Scans for every '{' or '[' and attempts a decode from there, so prose
    before or after the payload does not matter.
    """
    for pos, char in enumerate(text):
        if char in "[{":
            try:
                value, _ = _DECODER.raw_decode(text[pos:])
            except ValueError:
                continue
            return value
    return None


def extract_fenced(text: str, tag: str = "") -> str | None:
    """Content of the first ``` fenced block (optionally tagged), else None."""
    pattern = rf"```{re.escape(tag)}[ \t]*\n(.*?)```" if tag else r"```[\w-]*[ \t]*\n(.*?)```"
    match = re.search(pattern, text, re.DOTALL)
    return match.group(1) if match else None


def first_int(text: str) -> int | None:
    match = re.search(r"-?\d+", text)
    return int(match.group(0)) if match else None


def first_float(text: str) -> float | None:
    match = re.search(r"-?\d+(?:\.\d+)?", text)
    return float(match.group(0)) if match else None
