"""
Medical term lexicon.

Stands in for UMLS membership: a set of lowercase single- and multi-word
terms loaded from a file (one term per line, UTF-8). Matching over a
word sequence is greedy, longest term first, left to right.
"""

from collections import Counter
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple

from tools.errors import DataError
from tools.text_utils import split_words


class Lexicon:
    """Case-insensitive term set with greedy longest-first span matching."""

    def __init__(self, terms: Iterable[str]):
        self.terms = set()
        for term in terms:
            words = tuple(split_words(term))
            if words:
                self.terms.add(words)
        self.max_len = max((len(t) for t in self.terms), default=0)

    @classmethod
    def load(cls, path: Path, allow_empty: bool = False) -> "Lexicon":
        """
        Load a lexicon file.

        Raises:
            DataError: missing file, invalid UTF-8, or an empty lexicon when not allowed
        """
        path = Path(path)
        if not path.exists():
            raise DataError(f"Lexicon file not found: {path}")
        try:
            lines = path.read_text(encoding="utf-8").split("\n")
        except UnicodeDecodeError:
            raise DataError(f"Lexicon {path} is not valid UTF-8") from None
        lexicon = cls(line.strip() for line in lines if line.strip() and not line.startswith("#"))
        if not lexicon.terms and not allow_empty:
            raise DataError(f"Lexicon {path} contains no terms")
        return lexicon

    def __len__(self) -> int:
        return len(self.terms)

    def __contains__(self, term: str) -> bool:
        return tuple(split_words(term)) in self.terms

    def match_spans(self, words: Sequence[Optional[str]]) -> List[Tuple[int, int]]:
        """
        Greedy longest-first matching over a word sequence.

        Args:
            words: Lowercase words; None entries break matches (e.g. image slots)

        Returns:
            Non-overlapping (start, end) spans of matched terms, in order
        """
        spans = []
        i = 0
        n = len(words)
        while i < n:
            matched = 0
            for length in range(min(self.max_len, n - i), 0, -1):
                window = words[i:i + length]
                if any(w is None for w in window):
                    continue
                if tuple(window) in self.terms:
                    matched = length
                    break
            if matched:
                spans.append((i, i + matched))
                i += matched
            else:
                i += 1
        return spans

    def extract(self, text: str) -> Counter:
        """Multiset of lexicon terms occurring in text."""
        words = split_words(text)
        return Counter(" ".join(words[s:e]) for s, e in self.match_spans(words))
