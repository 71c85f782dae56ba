"""
Text-generation metrics: sequence similarity, BLEU-1, ROUGE-1 and
lexicon-based (UMLS-style) precision/recall.
"""

from collections import Counter
from difflib import SequenceMatcher
from typing import Sequence, Tuple

from nltk.translate.bleu_score import sentence_bleu

from tools.errors import DataError
from tools.lexicon import Lexicon
from tools.text_utils import split_words


def _ratio(a: str, b: str) -> float:
    return SequenceMatcher(None, a, b, autojunk=False).ratio()


def similarity_ratio(a: str, b: str) -> float:
    """
    Ratcliff/Obershelp similarity 2*M / (|a| + |b|).

    difflib breaks ties between equally long matches by position, which
    can make the score depend on argument order; the larger of both
    orders is returned so the score is symmetric. Two empty strings score 1.0.
    """
    return max(_ratio(a, b), _ratio(b, a))


def resolve_closed(prediction: str, candidates: Sequence[str]) -> str:
    """
    Map free text onto the most similar candidate of a closed list.

    Both sides are lowercased; ties go to the earlier candidate.
    """
    if not candidates:
        raise DataError("Closed candidate list is empty")
    text = prediction.lower()
    best = candidates[0]
    best_score = -1.0
    for candidate in candidates:
        score = similarity_ratio(text, candidate.lower())
        if score > best_score:
            best, best_score = candidate, score
    return best


def _overlap(pred: Counter, ref: Counter) -> int:
    return sum((pred & ref).values())


def bleu1(prediction: str, reference: str) -> float:
    """Clipped unigram precision times the brevity penalty; 0.0 for an empty prediction."""
    pred = split_words(prediction)
    if not pred:
        return 0.0
    return float(sentence_bleu([split_words(reference)], pred, weights=(1,)))


def rouge1(prediction: str, reference: str) -> float:
    """
    Clipped unigram recall against the reference.

    Raises:
        DataError: the reference has no words
    """
    ref = split_words(reference)
    if not ref:
        raise DataError("ROUGE-1 needs a non-empty reference")
    return _overlap(Counter(split_words(prediction)), Counter(ref)) / len(ref)


def umls_precision_recall(prediction: str, reference: str, lexicon: Lexicon) -> Tuple[float, float]:
    """
    Overlap of lexicon terms between prediction and reference.

    Returns:
        (precision, recall); both 1.0 when neither side mentions a term,
        and 0.0 for a side with no terms while the other side has some
    """
    pred = lexicon.extract(prediction)
    ref = lexicon.extract(reference)
    n_pred = sum(pred.values())
    n_ref = sum(ref.values())
    if n_pred == 0 and n_ref == 0:
        return 1.0, 1.0
    overlap = _overlap(pred, ref)
    precision = overlap / n_pred if n_pred else 0.0
    recall = overlap / n_ref if n_ref else 0.0
    return precision, recall
