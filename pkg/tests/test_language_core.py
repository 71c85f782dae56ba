"""Placeholder expansion, sequence assembly and the causal decoder."""

import numpy as np
import pytest

from conftest import tiny_model_config
from tools.errors import SequenceError
from tools.params import ModelParams
from tools.tensor import Tensor

from pipeline.model.language_core import VISUAL, LanguageCore, VisualSpan, expand_placeholders
from pipeline.model.vocabulary import BOS, EOS, IMG_CLOSE, IMG_OPEN


def _core(vocab, **overrides):
    config = tiny_model_config(**overrides).lm
    params = ModelParams()
    LanguageCore.init_params(params, config, len(vocab), np.random.default_rng(0), std=0.3)
    return LanguageCore(params, config, len(vocab))


def _visual(rows: int, dim: int = 16, seed: int = 0) -> Tensor:
    return Tensor(np.random.default_rng(seed).normal(size=(rows, dim)))


def test_one_placeholder_expands_to_34_slots(vocab):
    ids = [BOS, vocab.placeholder_id(1), vocab.stoi["ct"], EOS]
    expanded, spans = expand_placeholders(ids, vocab, n_queries=32, n_images=1)
    assert len(expanded) == 3 + 34
    assert spans == [VisualSpan(1, 35, 1)]
    assert expanded[1] == IMG_OPEN and expanded[34] == IMG_CLOSE
    assert expanded[2:34] == [VISUAL] * 32
    assert expanded[35:] == [vocab.stoi["ct"], EOS]


def test_spans_follow_text_order(vocab):
    ids = vocab.tokenize("<image-2> ct <image-1>")
    _, spans = expand_placeholders(ids, vocab, n_queries=4, n_images=2)
    assert [s.image_index for s in spans] == [2, 1]
    assert spans[0] == VisualSpan(1, 7, 2)
    assert spans[1] == VisualSpan(8, 14, 1)


@pytest.mark.parametrize("text,n_images", [
    ("<image-1> ct", 2),
    ("ct", 1),
    ("<image-1> <image-1>", 2),
    ("<image-2>", 1),
])
def test_placeholder_image_mismatch(vocab, text, n_images):
    with pytest.raises(SequenceError):
        expand_placeholders(vocab.tokenize(text), vocab, n_queries=4, n_images=n_images)


def test_assemble_splices_visual_rows(vocab):
    core = _core(vocab)
    expanded, spans = expand_placeholders(vocab.tokenize("<image-1> ct"), vocab, 4, n_images=1)
    visual = _visual(4)
    sequence = core.assemble(expanded, spans, [visual])
    table = core.params["lm.token_embed"].data
    rows = sequence.embeddings.data
    assert rows.shape == (len(expanded), 16)
    np.testing.assert_array_equal(rows[2:6], visual.data)
    np.testing.assert_array_equal(rows[1], table[IMG_OPEN])
    np.testing.assert_array_equal(rows[6], table[IMG_CLOSE])
    np.testing.assert_array_equal(rows[7], table[vocab.stoi["ct"]])


def test_assemble_errors(vocab):
    core = _core(vocab, max_len=16)
    expanded, spans = expand_placeholders(vocab.tokenize("<image-1> ct"), vocab, 4, n_images=1)
    with pytest.raises(SequenceError):
        core.assemble(expanded, spans, [])
    with pytest.raises(SequenceError):
        core.assemble(expanded, spans, [_visual(3)])
    long_ids, long_spans = expand_placeholders(vocab.tokenize("<image-1> " + "ct " * 12), vocab, 4, n_images=1)
    with pytest.raises(SequenceError):
        core.assemble(long_ids, long_spans, [_visual(4)])


def test_decoder_is_causal(vocab):
    core = _core(vocab, lm_layers=2)
    x = np.random.default_rng(1).normal(size=(10, 16))
    before = core.forward(Tensor(x)).data
    x[6:] += 5.0
    after = core.forward(Tensor(x)).data
    np.testing.assert_allclose(before[:6], after[:6], atol=1e-12)
    assert not np.allclose(before[6:], after[6:])
    assert before.shape == (10, len(vocab))


def test_decoder_is_causal_at_every_position(vocab):
    core = _core(vocab, lm_layers=2)
    rng = np.random.default_rng(7)
    x = rng.normal(size=(32, 16))
    before = core.forward(Tensor(x)).data
    for j in range(32):
        perturbed = x.copy()
        perturbed[j] += rng.normal(size=16)
        after = core.forward(Tensor(perturbed)).data
        np.testing.assert_allclose(after[:j], before[:j], atol=1e-12)
        assert not np.allclose(after[j], before[j])


def test_forward_rejects_overlong_input(vocab):
    core = _core(vocab, max_len=8)
    with pytest.raises(SequenceError):
        core.forward(Tensor(np.zeros((9, 16))))


def test_frozen_prefixes():
    tied = tiny_model_config(tie_embeddings=True).lm
    untied = tiny_model_config(tie_embeddings=False).lm
    assert LanguageCore.frozen_prefixes(tied) == ["lm.blocks.", "lm.ln_f.", "lm.pos_embed"]
    assert LanguageCore.frozen_prefixes(untied)[-1] == "lm.head."
    assert not any(p.startswith("lm.token_embed") for p in LanguageCore.frozen_prefixes(untied))
