"""Answer and ROUGE text normalization shared by metrics, dataset and prompts."""

from __future__ import annotations

import string

_STRIP_CHARS = string.punctuation + string.whitespace


def normalize_answer(text: str) -> str:
    """Lowercase, trim, collapse internal whitespace, strip surrounding punctuation."""
    collapsed = " ".join(text.split())
    return collapsed.lower().strip(_STRIP_CHARS)


def rouge_tokenize(text: str) -> list[str]:
    """Tokenize for ROUGE: lowercase, keep alphanumerics and intra-token hyphens.

    Each whitespace-delimited chunk is cleaned of other characters; hyphens at
    chunk edges are not intra-token and are stripped. Empty chunks vanish.
    """
    tokens: list[str] = []
    for raw in text.lower().split():
        cleaned = "".join(ch for ch in raw if ch.isalnum() or ch == "-")
        cleaned = cleaned.strip("-")
        if cleaned:
            tokens.append(cleaned)
    return tokens
