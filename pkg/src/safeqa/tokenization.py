"""Deterministic tokenizer shared by the index, the sanitizer and the rails.

A character belongs to a token when it is alphanumeric or sits in the
Devanagari block (U+0900-U+097F, which keeps matras and viramas attached to
their word); every other character splits. No stemming.
"""
from __future__ import annotations

import unicodedata
from typing import Iterable, Iterator

DEVANAGARI_LO = "ऀ"
DEVANAGARI_HI = "ॿ"


def _is_token_char(c: str) -> bool:
    return c.isalnum() or DEVANAGARI_LO <= c <= DEVANAGARI_HI


def tokenize(text: str, stopwords: Iterable[str] = ()) -> list[str]:
    """NFC-normalize, lowercase, split; drop tokens found in `stopwords`."""
    text = unicodedata.normalize("NFC", text).lower()
    stop = set(stopwords)
    out = []
    for tok, _, _ in _scan(text):
        if tok not in stop:
            out.append(tok)
    return out


def scan_tokens(text: str) -> list[tuple[str, int, int]]:
    """Tokens with [start, end) codepoint offsets into the *original* string.

    Offsets must stay valid against `text` as given, so no NFC pass here;
    tokens are lowercased for comparison only.
    """
    return [(tok.lower(), s, e) for tok, s, e in _scan(text)]


def _scan(text: str) -> Iterator[tuple[str, int, int]]:
    start = None
    for i, c in enumerate(text):
        if _is_token_char(c):
            if start is None:
                start = i
        elif start is not None:
            yield text[start:i], start, i
            start = None
    if start is not None:
        yield text[start:], start, len(text)
