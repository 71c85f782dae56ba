"""Lexicon loading and greedy longest-first term matching."""

import pytest

from conftest import DATA_DIR
from tools.errors import DataError
from tools.lexicon import Lexicon


def test_longest_term_wins():
    lexicon = Lexicon(["pleural effusion", "effusion", "pleural"])
    assert lexicon.match_spans(["small", "pleural", "effusion"]) == [(1, 3)]
    assert lexicon.extract("Pleural effusion, then effusion.") == {"pleural effusion": 1, "effusion": 1}


def test_image_slots_break_matches():
    lexicon = Lexicon(["pleural effusion", "effusion"])
    assert lexicon.match_spans(["pleural", None, "effusion"]) == [(2, 3)]


def test_terms_are_case_and_punctuation_insensitive():
    lexicon = Lexicon(["X-Ray", "  Edema "])
    assert "x-ray" in lexicon
    assert "EDEMA" in lexicon
    assert "fracture" not in lexicon
    assert len(lexicon) == 2


def test_load_skips_comments_and_blank_lines(tmp_path):
    path = tmp_path / "terms.txt"
    path.write_text("# header\nedema\n\nfracture\n", encoding="utf-8")
    lexicon = Lexicon.load(path)
    assert len(lexicon) == 2


def test_load_errors(tmp_path):
    with pytest.raises(DataError):
        Lexicon.load(tmp_path / "missing.txt")
    empty = tmp_path / "empty.txt"
    empty.write_text("# nothing\n", encoding="utf-8")
    with pytest.raises(DataError):
        Lexicon.load(empty)
    assert len(Lexicon.load(empty, allow_empty=True)) == 0
    binary = tmp_path / "binary.txt"
    binary.write_bytes(b"edema\n\xff\xfe\n")
    with pytest.raises(DataError, match="not valid UTF-8"):
        Lexicon.load(binary)


def test_shipped_lexicon():
    lexicon = Lexicon.load(DATA_DIR / "lexicon.txt")
    assert len(lexicon) > 100
    for term in ["pleural effusion", "pneumonia", "effusion", "ct", "mri"]:
        assert term in lexicon
