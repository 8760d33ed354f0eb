"""Tokenizer interface used by the prompt layout machinery.

The engine only needs token ids plus character offsets; any tokenizer that
can provide both (including HuggingFace fast tokenizers wrapped externally)
satisfies the protocol. The built-in whitespace tokenizer is the reference
implementation used by the toy backend and the test suite.
"""
from __future__ import annotations

import re
from typing import NamedTuple, Protocol, Sequence


class TokenizedText(NamedTuple):
    ids: tuple[int, ...]
    # half-open character ranges, one per token, non-decreasing starts
    offsets: tuple[tuple[int, int], ...]


class Tokenizer(Protocol):
    def encode(self, text: str) -> TokenizedText: ...


_FNV64_OFFSET = 0xCBF29CE484222325
_FNV64_PRIME = 0x100000001B3


def fnv1a64(data: str) -> int:
    """Platform-independent 64-bit FNV-1a hash (no interpreter salt)."""
    h = _FNV64_OFFSET
    for byte in data.encode("utf-8"):
        h = ((h ^ byte) * _FNV64_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


_WS_TOKEN = re.compile(r"\S+")


class WhitespaceTokenizer:
    """Splits on whitespace runs; token ids are hashed into a fixed vocab."""

    def __init__(self, vocab_size: int = 4096):
        if vocab_size < 1:
            raise ValueError("vocab_size must be positive")
        self.vocab_size = vocab_size

    def encode(self, text: str) -> TokenizedText:
        ids = []
        offsets = []
        for m in _WS_TOKEN.finditer(text):
            ids.append(fnv1a64(m.group()) % self.vocab_size)
            offsets.append((m.start(), m.end()))
        return TokenizedText(tuple(ids), tuple(offsets))


def token_strings(text: str, offsets: Sequence[tuple[int, int]]) -> list[str]:
    return [text[s:e] for s, e in offsets]
