"""Loss weights recomputed from token strings for generated samples."""

import numpy as np
import pytest

from conftest import DATA_DIR
from tools.errors import TrainingError
from tools.lexicon import Lexicon
from tools.text_utils import PLACEHOLDER_PATTERN, split_tokens

from pipeline.corpus.sample import Sample, SampleKind, Task
from pipeline.corpus.synth import DiseaseSpec, SynthSpec, VolumeSpec, generate_samples
from pipeline.model.language_core import VISUAL
from pipeline.model.vocabulary import EOS, Vocabulary
from pipeline.training.weights import TERM_WEIGHT, TEXT_WEIGHT, assign_weights, text_weights

N_QUERIES = 3
PER_KIND = 100


@pytest.fixture(scope="module")
def corpus():
    spec = SynthSpec(
        count=600,
        diseases=[DiseaseSpec("pneumonia", "patchy consolidation"),
                  DiseaseSpec("pleural effusion", "blunting of the costophrenic angle"),
                  DiseaseSpec("edema", "interstitial thickening")],
        volume=VolumeSpec(size_2d=8, size_3d=8, depth_3d=4),
        detail_sentence_fraction=0.3,
    ).validate()
    samples = [g.sample for g in generate_samples(spec, seed=11)]
    vocab = Vocabulary.build([s.text for s in samples], max_images=2)
    return samples, vocab, Lexicon.load(DATA_DIR / "lexicon.txt")


def _greedy_terms(words, lexicon):
    """Weights for a word list: 3 inside the longest matching term, 1 otherwise, 0 for None."""
    weights = [0.0 if w is None else 1.0 for w in words]
    longest = max(len(t) for t in lexicon.terms)
    i = 0
    while i < len(words):
        for n in range(longest, 0, -1):
            window = words[i:i + n]
            if len(window) == n and None not in window and tuple(window) in lexicon.terms:
                weights[i:i + n] = [3.0] * n
                i += n
                break
        else:
            i += 1
    return weights


def _expand(tokens):
    out = []
    for token in tokens:
        out.extend([None] * (N_QUERIES + 2) if PLACEHOLDER_PATTERN.fullmatch(token) else [token])
    return out


def _oracle(sample: Sample, lexicon: Lexicon):
    if sample.is_instruction:
        prompt = [None] + _expand(split_tokens(sample.instruction))
        answer = _expand(split_tokens(sample.response))
        return [0.0] * len(prompt) + _greedy_terms(answer, lexicon) + [1.0]
    body = _expand(split_tokens(sample.text))
    return [0.0] + _greedy_terms(body, lexicon) + [1.0]


@pytest.mark.parametrize("kind", list(SampleKind))
def test_weights_match_recomputation(corpus, kind):
    samples, vocab, lexicon = corpus
    chosen = [s for s in samples if s.kind is kind][:PER_KIND]
    assert len(chosen) == PER_KIND
    for sample in chosen:
        sequence = assign_weights(sample, vocab, lexicon, N_QUERIES)
        assert sequence.weights.tolist() == _oracle(sample, lexicon), sample.id
        assert sequence.ids[-1] == EOS
        for span in sequence.spans:
            assert not sequence.weights[span.start:span.end].any()
            assert sequence.ids[span.start + 1:span.end - 1] == [VISUAL] * N_QUERIES


def test_term_tokens_weigh_three(corpus):
    _, vocab, lexicon = corpus
    ids = vocab.tokenize("<image-1> the scan shows pleural effusion.", bos=False, eos=False)
    weights = text_weights(vocab, ids, lexicon)
    assert weights.tolist() == [0.0, 1.0, 1.0, 1.0, TERM_WEIGHT, TERM_WEIGHT, TEXT_WEIGHT]


def test_instruction_prompt_weighs_nothing(corpus):
    _, vocab, lexicon = corpus
    sample = Sample.instruction_sample("q", Task.DISEASE_DIAGNOSIS, "<image-1> Does the patient have edema?",
                                       "yes", ["a.vol"], {"form": "judgment"})
    sequence = assign_weights(sample, vocab, lexicon, N_QUERIES)
    assert sequence.weights.sum() == 2.0
    assert sequence.weights[-2:].tolist() == [1.0, 1.0]
    np.testing.assert_array_equal(sequence.targets(), np.maximum(sequence.ids[1:], 0))


def test_instruction_without_boundary(corpus):
    _, vocab, lexicon = corpus
    sample = Sample(id="q", kind=SampleKind.INSTRUCTION, task=Task.VQA, text="<image-1> what? edema",
                    volume_paths=["a.vol"])
    with pytest.raises(TrainingError):
        assign_weights(sample, vocab, lexicon, N_QUERIES)


@pytest.mark.parametrize("kind", list(SampleKind))
def test_empty_lexicon_gives_no_term_weights(corpus, kind):
    samples, vocab, _ = corpus
    empty = Lexicon([])
    for sample in [s for s in samples if s.kind is kind][:PER_KIND]:
        weights = assign_weights(sample, vocab, empty, N_QUERIES).weights
        assert TERM_WEIGHT not in weights.tolist(), sample.id
        assert set(weights.tolist()) <= {0.0, TEXT_WEIGHT}
