"""
Language core: interleaved sequence assembly and the causal decoder.

Each placeholder <image-i> in a token sequence expands to
IMG_OPEN, n_queries visual rows, IMG_CLOSE. Visual rows have no
vocabulary id (marked VISUAL) and are filled with the resampled
embedding of image i.
"""

from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from tools.errors import SequenceError
from tools.params import ModelParams
from tools.tensor import Tensor, add, concat_rows, matmul, take_rows, transpose

from pipeline.model.config import LMConfig
from pipeline.model.layers import block, init_block, init_norm, norm
from pipeline.model.vocabulary import IMG_CLOSE, IMG_OPEN, Vocabulary

PREFIX = "lm"
VISUAL = -1


@dataclass
class VisualSpan:
    """[start, end) positions of one placeholder expansion, sentinels included."""
    start: int
    end: int
    image_index: int


@dataclass
class AssembledSequence:
    embeddings: Tensor
    token_ids: List[int]
    visual_spans: List[VisualSpan] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.token_ids)


def expand_placeholders(ids: Sequence[int], vocab: Vocabulary, n_queries: int,
                        n_images: int = None) -> Tuple[List[int], List[VisualSpan]]:
    """
    Replace every placeholder id by its IMG_OPEN, VISUAL x n_queries, IMG_CLOSE expansion.

    Args:
        ids: Token ids (BOS/EOS included as given)
        vocab: Vocabulary the ids come from
        n_queries: Visual rows per image
        n_images: When given, placeholders must be exactly <image-1> .. <image-n>,
            each once

    Raises:
        SequenceError: placeholder/image count mismatch or repeated placeholder
    """
    expanded: List[int] = []
    spans: List[VisualSpan] = []
    for token_id in ids:
        index = vocab.placeholder_index(token_id)
        if index is None:
            expanded.append(int(token_id))
            continue
        start = len(expanded)
        expanded.append(IMG_OPEN)
        expanded.extend([VISUAL] * n_queries)
        expanded.append(IMG_CLOSE)
        spans.append(VisualSpan(start, len(expanded), index))
    if n_images is not None:
        seen = sorted(span.image_index for span in spans)
        if seen != list(range(1, n_images + 1)):
            raise SequenceError(
                f"Sequence has placeholders {seen} but {n_images} visual embeddings were given"
            )
    return expanded, spans


class LanguageCore:
    """
    Decoder-only causal transformer over assembled embeddings.

    Args:
        params: Parameter store holding the ``lm.*`` tensors
        config: Decoder settings
        vocab_size: Rows of the token embedding table
    """

    def __init__(self, params: ModelParams, config: LMConfig, vocab_size: int):
        self.params = params
        self.config = config
        self.vocab_size = vocab_size

    @staticmethod
    def init_params(params: ModelParams, config: LMConfig, vocab_size: int,
                    rng: np.random.Generator, std: float = 0.02):
        params.add(f"{PREFIX}.token_embed", rng.normal(0.0, std, size=(vocab_size, config.dim)))
        params.add(f"{PREFIX}.pos_embed", rng.normal(0.0, std, size=(config.max_len, config.dim)))
        for i in range(config.layers):
            init_block(params, rng, f"{PREFIX}.blocks.{i}", config.dim, config.mlp_ratio, std)
        init_norm(params, f"{PREFIX}.ln_f", config.dim)
        if not config.tie_embeddings:
            params.add(f"{PREFIX}.head.weight", rng.normal(0.0, std, size=(config.dim, vocab_size)))

    @staticmethod
    def frozen_prefixes(config: LMConfig) -> List[str]:
        """Parameters held fixed while the visual side is aligned to the decoder."""
        prefixes = [f"{PREFIX}.blocks.", f"{PREFIX}.ln_f.", f"{PREFIX}.pos_embed"]
        if not config.tie_embeddings:
            prefixes.append(f"{PREFIX}.head.")
        return prefixes

    def assemble(self, token_ids: Sequence[int], spans: Sequence[VisualSpan],
                 visual_embeds: Sequence[Tensor]) -> AssembledSequence:
        """
        Embed an expanded id sequence, splicing image i's rows into its span.

        Args:
            token_ids: Output of expand_placeholders
            spans: Visual spans of that expansion
            visual_embeds: [n_queries x dim] per image, image 1 first

        Raises:
            SequenceError: span/embedding count mismatch or length overflow
        """
        if len(spans) != len(visual_embeds):
            raise SequenceError(
                f"Sequence has {len(spans)} image placeholders but {len(visual_embeds)} visual embeddings"
            )
        if len(token_ids) > self.config.max_len:
            raise SequenceError(
                f"Assembled length {len(token_ids)} exceeds max_len {self.config.max_len}"
            )
        table = self.params[f"{PREFIX}.token_embed"]
        segments: List[Tensor] = []
        cursor = 0
        for span in spans:
            visual = visual_embeds[span.image_index - 1]
            n_rows = span.end - span.start - 2
            if visual.shape != (n_rows, self.config.dim):
                raise SequenceError(
                    f"Visual embedding for image {span.image_index} has shape {visual.shape}, "
                    f"expected {(n_rows, self.config.dim)}"
                )
            segments.append(take_rows(table, list(token_ids[cursor:span.start + 1])))
            segments.append(visual)
            cursor = span.end - 1
        segments.append(take_rows(table, list(token_ids[cursor:])))
        embeddings = segments[0] if len(segments) == 1 else concat_rows(segments)
        return AssembledSequence(embeddings, list(token_ids), list(spans))

    def forward(self, embeddings: Tensor) -> Tensor:
        """Logits [L x V]; row l depends only on rows <= l."""
        length = embeddings.shape[0]
        if length > self.config.max_len:
            raise SequenceError(f"Sequence length {length} exceeds max_len {self.config.max_len}")
        x = add(embeddings, take_rows(self.params[f"{PREFIX}.pos_embed"], np.arange(length)))
        for i in range(self.config.layers):
            x = block(x, self.params, f"{PREFIX}.blocks.{i}", self.config.heads, causal=True)
        x = norm(x, self.params, f"{PREFIX}.ln_f")
        if self.config.tie_embeddings:
            return matmul(x, transpose(self.params[f"{PREFIX}.token_embed"]))
        return matmul(x, self.params[f"{PREFIX}.head.weight"])

    def forward_lm(self, sequence: AssembledSequence) -> Tensor:
        return self.forward(sequence.embeddings)
