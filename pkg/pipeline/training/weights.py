"""
Per-token loss weights.

Weights are aligned with input positions of the expanded sequence; the
weight at position l scales the loss of predicting token l from the
positions before it.

    interleaved:  BOS, <image>, visual rows, </image> -> 0
                  lexicon term token -> 3, other text token -> 1, EOS -> 1
    instruction:  every instruction position -> 0; response positions use
                  the interleaved rule; EOS -> 1
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from tools.errors import TrainingError
from tools.lexicon import Lexicon

from pipeline.corpus.sample import Sample, SampleKind
from pipeline.model.language_core import VISUAL, VisualSpan, expand_placeholders
from pipeline.model.vocabulary import BOS, EOS, IMG_CLOSE, IMG_OPEN, Vocabulary

TERM_WEIGHT = 3.0
TEXT_WEIGHT = 1.0
ZERO_WEIGHT = 0.0
NON_TEXT = {BOS, EOS, IMG_OPEN, IMG_CLOSE, VISUAL}


@dataclass
class WeightedTokenSequence:
    ids: List[int]
    weights: np.ndarray
    kind: SampleKind
    spans: List[VisualSpan]

    def __len__(self) -> int:
        return len(self.ids)

    def targets(self) -> np.ndarray:
        """Next-token targets for positions 0 .. L-2; visual rows map to id 0."""
        return np.array([max(t, 0) for t in self.ids[1:]], dtype=np.int64)

    def target_weights(self) -> np.ndarray:
        return self.weights[1:]


def _words(vocab: Vocabulary, ids: Sequence[int]) -> List[Optional[str]]:
    """Token strings for lexicon matching; None breaks a match."""
    return [None if t in NON_TEXT or vocab.placeholder_index(t) is not None else vocab.itos[t] for t in ids]


def text_weights(vocab: Vocabulary, ids: Sequence[int], lexicon: Lexicon) -> np.ndarray:
    """3 for tokens inside a lexicon term span, 1 for other text, 0 for non-text positions."""
    words = _words(vocab, ids)
    weights = np.array([ZERO_WEIGHT if w is None else TEXT_WEIGHT for w in words])
    for start, end in lexicon.match_spans(words):
        weights[start:end] = TERM_WEIGHT
    return weights


def assign_weights(sample: Sample, vocab: Vocabulary, lexicon: Lexicon, n_queries: int) -> WeightedTokenSequence:
    """
    Expanded ids and loss weights for one sample.

    Raises:
        TrainingError: an instruction sample without its instruction/response boundary
    """
    if sample.kind is SampleKind.INSTRUCTION:
        if sample.instruction is None or sample.response is None:
            raise TrainingError(f"Instruction sample {sample.id} has no instruction/response boundary")
        prompt = [BOS] + vocab.tokenize(sample.instruction, bos=False, eos=False)
        answer = vocab.tokenize(sample.response, bos=False, eos=False) + [EOS]
        ids, spans = expand_placeholders(prompt + answer, vocab, n_queries,
                                         n_images=len(sample.volume_paths))
        boundary = len(expand_placeholders(prompt, vocab, n_queries)[0])
        weights = np.concatenate([np.zeros(boundary), text_weights(vocab, ids[boundary:], lexicon)])
    else:
        ids, spans = expand_placeholders(vocab.tokenize(sample.text), vocab, n_queries,
                                         n_images=len(sample.volume_paths))
        weights = text_weights(vocab, ids, lexicon)

    if ids[-1] == EOS:
        weights[-1] = TEXT_WEIGHT
    return WeightedTokenSequence(ids=ids, weights=weights, kind=sample.kind, spans=spans)
