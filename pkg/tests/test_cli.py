"""Command line: flags, exit codes, error lines and an end-to-end run."""

import argparse
import json
from pathlib import Path

import pytest

from conftest import DATA_DIR, TINY_PREPROCESS, tiny_model_config

from pipeline.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, build_parser, main
from pipeline.model.multimodal import RadiologyVLM

GOLDEN = Path(__file__).parent / "golden" / "cli_flags.json"

SYNTH_SPEC = {
    "count": 24,
    "diseases": [{"name": "pneumonia", "features": "patchy consolidation"},
                 {"name": "edema", "features": "interstitial thickening"}],
    "volume": {"size_2d": 32, "size_3d": 32, "depth_3d": 4},
    "other_fraction": 0.1,
    "detail_sentence_fraction": 0.5,
}

RUN_CONFIG = {
    "model": {
        "vision": {"patch_h": 16, "patch_w": 16, "patch_d": 4, "dim": 8, "layers": 1, "heads": 2,
                   "mlp_ratio": 2, "max_pos_h": 4, "max_pos_w": 4, "max_pos_d": 4},
        "perceiver": {"n_queries": 2, "layers": 1, "dim": 16, "heads": 2, "mlp_ratio": 2},
        "lm": {"dim": 16, "layers": 1, "heads": 2, "mlp_ratio": 2, "max_len": 128, "max_images": 4,
               "vocab_limit": 512},
    },
    "preprocess": {"size_2d": 32, "size_3d": 32, "patch_depth": 4, "max_depth": 16},
    "schedule": {"phase1_epochs": 1, "pretrain_epochs": 1, "finetune_epochs": 1},
    "paths": {"lexicon": str(DATA_DIR / "lexicon.txt")},
}


def _flags(parser: argparse.ArgumentParser):
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    return {
        name: sorted(a.option_strings[-1] for a in command._actions
                     if a.option_strings and not isinstance(a, argparse._HelpAction))
        for name, command in sub.choices.items()
    }


def _write_json(path: Path, data) -> str:
    path.write_text(json.dumps(data), encoding="utf-8")
    return str(path)


def _error_line(capsys) -> str:
    err = capsys.readouterr().err
    lines = err.splitlines()
    assert len(lines) == 1, err
    return lines[0]


def test_flags_match_golden_file():
    assert _flags(build_parser()) == json.loads(GOLDEN.read_text(encoding="utf-8"))


@pytest.mark.parametrize("argv", [
    [],
    ["launch"],
    ["synth", "--out", "x", "--seed", "1"],
    ["synth", "--spec", "s.json", "--out", "x", "--seed", "one"],
    ["eval", "--ckpt", "c", "--manifest", "m", "--lexicon", "l", "--out", "o", "--verbose"],
])
def test_usage_errors_exit_one(argv, capsys):
    assert main(argv) == EXIT_USAGE
    assert _error_line(capsys).startswith("error: UsageError: ")


def test_help_exits_zero(capsys):
    assert main(["--help"]) == EXIT_OK
    assert "synth" in capsys.readouterr().out


def test_data_errors_exit_two(tmp_path, capsys):
    assert main(["synth", "--spec", str(tmp_path / "missing.json"), "--out", str(tmp_path), "--seed", "0"]) == EXIT_DATA
    assert _error_line(capsys).startswith("error: DataError: Synth spec not found")

    assert main(["generate", "--ckpt", str(tmp_path / "none"), "--prompt", "p.txt"]) == EXIT_DATA
    assert _error_line(capsys).startswith("error: DataError: Checkpoint directory not found")

    bad_config = _write_json(tmp_path / "run.json", {"model": {"lm": {"depth": 3}}})
    assert main(["train", "--config", bad_config, "--corpus", str(tmp_path), "--out", str(tmp_path / "ck")]) == EXIT_DATA
    assert _error_line(capsys) == "error: ConfigError: Unknown config key 'model.lm.depth'"


def test_config_errors_report_one_line(tmp_path, capsys):
    rules = _write_json(tmp_path / "rules.json", [{"name": "x", "pattern": "(\n", "action": "remove_sentence"}])
    manifest = tmp_path / "m.jsonl"
    manifest.write_text("", encoding="utf-8")
    code = main(["curate", "--in", str(manifest), "--rules", rules, "--out", str(tmp_path / "o.jsonl"),
                 "--report", str(tmp_path / "r.json")])
    assert code == EXIT_DATA
    assert _error_line(capsys).startswith("error: ConfigError: Rule x: invalid pattern")


def test_pipeline_end_to_end(tmp_path, capsys):
    corpus = tmp_path / "corpus"
    spec = _write_json(tmp_path / "spec.json", SYNTH_SPEC)
    assert main(["synth", "--spec", spec, "--out", str(corpus), "--seed", "3", "--previews"]) == EXIT_OK
    assert (corpus / "pretrain.jsonl").exists()
    assert list((corpus / "previews").glob("*.png"))

    for split in ("pretrain", "finetune", "test"):
        manifest = str(corpus / f"{split}.jsonl")
        assert main(["curate", "--in", manifest, "--rules", str(DATA_DIR / "curation_rules.json"),
                     "--out", manifest, "--report", str(tmp_path / f"{split}_drops.json")]) == EXIT_OK
    report = json.loads((tmp_path / "pretrain_drops.json").read_text(encoding="utf-8"))
    assert report["input_count"] >= report["output_count"]

    config = _write_json(tmp_path / "run.json", RUN_CONFIG)
    ckpt = tmp_path / "ckpt"
    assert main(["train", "--config", config, "--corpus", str(corpus), "--out", str(ckpt),
                 "--plot", str(tmp_path / "loss.png")]) == EXIT_OK
    for name in ("params.ivlm", "vocab.txt", "config.json", "manifest.json", "trace.csv"):
        assert (ckpt / name).exists(), name
    assert (tmp_path / "loss.png").exists()

    capsys.readouterr()
    prompt = tmp_path / "prompt.txt"
    prompt.write_text("<image-1> What modality is used to take this image?\n", encoding="utf-8")
    volume = next((corpus / "volumes").glob("*.vol"))
    assert main(["generate", "--ckpt", str(ckpt), "--prompt", str(prompt), "--images", str(volume),
                 "--max-new", "4"]) == EXIT_OK
    assert len(capsys.readouterr().out.splitlines()) == 1

    assert main(["generate", "--ckpt", str(ckpt), "--prompt", str(prompt), "--max-new", "4"]) == EXIT_DATA
    assert _error_line(capsys).startswith("error: SequenceError: ")

    out = tmp_path / "report.json"
    assert main(["eval", "--ckpt", str(ckpt), "--manifest", str(corpus / "test.jsonl"),
                 "--lexicon", str(DATA_DIR / "lexicon.txt"), "--out", str(out), "--records",
                 str(tmp_path / "records.jsonl"), "--table", str(tmp_path / "report.txt"),
                 "--max-new", "4", "--resamples", "50"]) == EXIT_OK
    data = json.loads(out.read_text(encoding="utf-8"))
    assert set(data) == {"tasks", "warnings"}
    assert data["tasks"]
    assert (tmp_path / "records.jsonl").read_text(encoding="utf-8").strip()
    assert (tmp_path / "report.txt").read_text(encoding="utf-8").strip()


@pytest.mark.parametrize("content, message", [
    (b"\xff\xfe\n", "is not valid UTF-8"),
    (b"[1, 2]\n", "Manifest record must be a JSON object, got list"),
    (b'{"id": "a", "kind": "pretrain", "text": 7}\n', "field 'text' must be a string"),
])
def test_malformed_manifests_exit_two(tmp_path, capsys, content, message):
    manifest = tmp_path / "m.jsonl"
    manifest.write_bytes(content)
    code = main(["curate", "--in", str(manifest), "--rules", str(DATA_DIR / "curation_rules.json"),
                 "--out", str(tmp_path / "o.jsonl"), "--report", str(tmp_path / "r.json")])
    assert code == EXIT_DATA
    line = _error_line(capsys)
    assert line.startswith("error: DataError: ")
    assert message in line


def _tiny_checkpoint(directory: Path, vocab) -> str:
    RadiologyVLM(tiny_model_config(), vocab, seed=0, preprocess=TINY_PREPROCESS).save(directory)
    return str(directory)


def test_malformed_lexicon_exits_two(tmp_path, capsys, vocab):
    ckpt = _tiny_checkpoint(tmp_path / "ckpt", vocab)
    manifest = tmp_path / "test.jsonl"
    manifest.write_text("", encoding="utf-8")
    lexicon = tmp_path / "terms.txt"
    lexicon.write_bytes(b"edema\n\xff\n")
    capsys.readouterr()
    code = main(["eval", "--ckpt", ckpt, "--manifest", str(manifest), "--lexicon", str(lexicon),
                 "--out", str(tmp_path / "report.json")])
    assert code == EXIT_DATA
    assert _error_line(capsys) == f"error: DataError: Lexicon {lexicon} is not valid UTF-8"


def test_eval_on_empty_manifest_exits_two(tmp_path, capsys, vocab):
    ckpt = _tiny_checkpoint(tmp_path / "ckpt", vocab)
    manifest = tmp_path / "test.jsonl"
    manifest.write_text("", encoding="utf-8")
    capsys.readouterr()
    code = main(["eval", "--ckpt", ckpt, "--manifest", str(manifest),
                 "--lexicon", str(DATA_DIR / "lexicon.txt"), "--out", str(tmp_path / "report.json")])
    assert code == EXIT_DATA
    assert _error_line(capsys) == "error: DataError: Manifest contains no benchmark samples"
    assert not (tmp_path / "report.json").exists()


def test_bad_thread_count_exits_two(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("IVLM_THREADS", "many")
    spec = _write_json(tmp_path / "spec.json", SYNTH_SPEC)
    assert main(["synth", "--spec", spec, "--out", str(tmp_path / "corpus"), "--seed", "0"]) == EXIT_DATA
    assert _error_line(capsys) == "error: ConfigError: IVLM_THREADS must be an integer, got 'many'"
