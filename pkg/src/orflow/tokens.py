"""Pluggable token counting.

Every token-denominated quantity in this package (response budgets, hint
fractions, funnel statistics) goes through a `Tokenizer`. The default is a
whitespace approximation: downstream consumers that care about a specific
model vocabulary can plug in their own implementation.
"""

from __future__ import annotations

import re
from typing import Protocol, runtime_checkable

_TOKEN_RE = re.compile(r"\S+")


@runtime_checkable
class Tokenizer(Protocol):
    """Minimal interface for counting and truncating by tokens."""

    def count(self, text: str) -> int: ...

    def truncate(self, text: str, max_tokens: int) -> str: ...


class WhitespaceTokenizer:
    """Counts maximal non-whitespace runs as tokens.

    `truncate` cuts the original string right after the Nth token so the
    surviving prefix is byte-identical to the input up to the cut.
    """

    def count(self, text: str) -> int:
        return sum(1 for _ in _TOKEN_RE.finditer(text))

    def truncate(self, text: str, max_tokens: int) -> str:
        if max_tokens <= 0:
            return ""
        for i, match in enumerate(_TOKEN_RE.finditer(text)):
            if i == max_tokens - 1:
                return text[: match.end()]
        return text


DEFAULT_TOKENIZER = WhitespaceTokenizer()
