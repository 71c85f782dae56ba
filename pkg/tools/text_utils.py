"""Word splitting shared by the tokenizer, lexicon matching and metrics."""

import re
from typing import List

PLACEHOLDER_PATTERN = re.compile(r"<image-(\d+)>")
WORD_PATTERN = r"[a-z0-9]+(?:[-'][a-z0-9]+)*"

# Placeholders, words, then any single non-space punctuation mark.
TOKEN_RE = re.compile(rf"<image-\d+>|{WORD_PATTERN}|[^\sa-z0-9]")
WORD_RE = re.compile(WORD_PATTERN)

ATTACH_LEFT = {",", ".", ";", ":", "?", "!", ")"}
ATTACH_RIGHT = {"("}


def split_tokens(text: str) -> List[str]:
    """Lowercase text split into placeholders, words and punctuation marks."""
    return TOKEN_RE.findall(text.lower())


def split_words(text: str) -> List[str]:
    """Lowercase words only; punctuation and placeholders dropped."""
    return WORD_RE.findall(PLACEHOLDER_PATTERN.sub(" ", text.lower()))


def join_tokens(tokens: List[str]) -> str:
    """Inverse of split_tokens on normalized text."""
    out = ""
    glue_next = False
    for token in tokens:
        if not out:
            out = token
        elif token in ATTACH_LEFT or glue_next:
            out += token
        else:
            out += " " + token
        glue_next = token in ATTACH_RIGHT
    return out


def normalize_text(text: str) -> str:
    """Canonical form used for verbatim comparisons."""
    return join_tokens(split_tokens(text))
