"""
Word-level vocabulary with reserved control ids and image placeholders.

Id layout:
    0 <pad>, 1 <s>, 2 </s>, 3 <unk>, 4 <image>, 5 </image>,
    6 .. 6+K-1 the placeholders <image-1> .. <image-K>,
    6+K .. corpus words in alphabetical order.
"""

from collections import Counter
from pathlib import Path
from typing import Dict, Iterable, List, Optional

from tools.errors import DataError, SequenceError
from tools.text_utils import PLACEHOLDER_PATTERN, join_tokens, split_tokens

PAD, BOS, EOS, UNK, IMG_OPEN, IMG_CLOSE = range(6)
PLACEHOLDER_BASE = 6
RESERVED_TOKENS = ["<pad>", "<s>", "</s>", "<unk>", "<image>", "</image>"]
CONTROL_IDS = {PAD, BOS, EOS}


def placeholder_token(index: int) -> str:
    return f"<image-{index}>"


class Vocabulary:
    """
    Maps lowercase word tokens to ids and back.

    Args:
        words: Corpus tokens (reserved strings and placeholders are ignored)
        max_images: Number of placeholder ids K
    """

    def __init__(self, words: Iterable[str], max_images: int = 8):
        if max_images < 1:
            raise DataError(f"max_images must be >= 1, got {max_images}")
        self.max_images = max_images
        self.itos: List[str] = list(RESERVED_TOKENS)
        self.itos += [placeholder_token(i) for i in range(1, max_images + 1)]
        reserved = set(self.itos)
        self.words = sorted({w for w in words if w and w not in reserved and not PLACEHOLDER_PATTERN.fullmatch(w)})
        self.itos += self.words
        self.stoi: Dict[str, int] = {token: i for i, token in enumerate(self.itos)}

    @classmethod
    def build(cls, texts: Iterable[str], max_images: int = 8, limit: Optional[int] = None) -> "Vocabulary":
        """
        Induce a vocabulary from corpus texts.

        Args:
            texts: Sample texts
            max_images: Placeholder count K
            limit: Upper bound on the total vocabulary size, reserved ids
                included; the most frequent words are kept (ties alphabetical)
        """
        counts = Counter()
        for text in texts:
            counts.update(t for t in split_tokens(text) if not PLACEHOLDER_PATTERN.fullmatch(t))
        words = sorted(counts, key=lambda w: (-counts[w], w))
        if limit is not None:
            room = limit - len(RESERVED_TOKENS) - max_images
            if room < 0:
                raise DataError(f"Vocabulary limit {limit} leaves no room for reserved ids")
            words = words[:room]
        return cls(words, max_images=max_images)

    @property
    def placeholder_base(self) -> int:
        return PLACEHOLDER_BASE

    @property
    def word_base(self) -> int:
        return PLACEHOLDER_BASE + self.max_images

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def placeholder_id(self, index: int) -> int:
        if not 1 <= index <= self.max_images:
            raise SequenceError(f"Placeholder <image-{index}> exceeds the {self.max_images} image slots")
        return PLACEHOLDER_BASE + index - 1

    def placeholder_index(self, token_id: int) -> Optional[int]:
        """Image index for a placeholder id, else None."""
        if PLACEHOLDER_BASE <= token_id < self.word_base:
            return token_id - PLACEHOLDER_BASE + 1
        return None

    def encode_tokens(self, tokens: List[str]) -> List[int]:
        ids = []
        for token in tokens:
            match = PLACEHOLDER_PATTERN.fullmatch(token)
            if match:
                ids.append(self.placeholder_id(int(match.group(1))))
            else:
                ids.append(self.stoi.get(token, UNK))
        return ids

    def tokenize(self, text: str, bos: bool = True, eos: bool = True) -> List[int]:
        """Text to ids with BOS prepended and EOS appended."""
        ids = self.encode_tokens(split_tokens(text))
        return ([BOS] if bos else []) + ids + ([EOS] if eos else [])

    def detokenize(self, ids: Iterable[int]) -> str:
        """Ids to normalized text; pad, BOS and EOS are dropped."""
        tokens = []
        for token_id in ids:
            token_id = int(token_id)
            if token_id in CONTROL_IDS:
                continue
            if not 0 <= token_id < len(self.itos):
                raise DataError(f"Token id {token_id} is outside the vocabulary of {len(self)}")
            tokens.append(self.itos[token_id])
        return join_tokens(tokens)

    # Storage: one corpus word per line; line n has id word_base + n.

    def save(self, path: Path):
        with open(path, "w", encoding="utf-8") as f:
            for word in self.words:
                f.write(word + "\n")

    @classmethod
    def load(cls, path: Path, max_images: int = 8) -> "Vocabulary":
        path = Path(path)
        if not path.exists():
            raise DataError(f"Vocabulary file not found: {path}")
        try:
            with open(path, "r", encoding="utf-8") as f:
                words = [line.rstrip("\n") for line in f if line.rstrip("\n")]
        except UnicodeDecodeError:
            raise DataError(f"Vocabulary file {path} is not valid UTF-8") from None
        vocab = cls(words, max_images=max_images)
        if vocab.words != words:
            raise DataError(f"Vocabulary file {path} is not sorted or contains reserved tokens")
        return vocab
