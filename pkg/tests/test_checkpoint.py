"""IVLM1 parameter files and checkpoint directories."""

import json

import numpy as np
import pytest

from tools.checkpoint import (
    MANIFEST_FILE, PARAMS_FILE, load_checkpoint, read_params, save_checkpoint, write_params,
)
from tools.errors import DataError
from tools.params import ModelParams


def _params() -> ModelParams:
    rng = np.random.default_rng(0)
    params = ModelParams()
    params.add("vision.pos_h", rng.normal(size=(4, 3)))
    params.add("lm.ln_f.gamma", rng.normal(size=(3,)))
    params.add("lm.scalar", np.array(1.5))
    return params


def test_params_file_keeps_order_and_values(tmp_path):
    params = _params()
    arrays = {name: t.data for name, t in params.named()}
    write_params(tmp_path / "p.ivlm", arrays)
    loaded = read_params(tmp_path / "p.ivlm")
    assert list(loaded) == list(arrays)
    for name in arrays:
        np.testing.assert_array_equal(loaded[name], arrays[name])
    assert loaded["lm.scalar"].shape == ()


def test_params_file_is_byte_stable(tmp_path):
    arrays = {name: t.data for name, t in _params().named()}
    write_params(tmp_path / "a.ivlm", arrays)
    write_params(tmp_path / "b.ivlm", arrays)
    assert (tmp_path / "a.ivlm").read_bytes() == (tmp_path / "b.ivlm").read_bytes()


def test_rejects_foreign_and_truncated_files(tmp_path):
    (tmp_path / "bad.ivlm").write_bytes(b"NOPE")
    with pytest.raises(DataError):
        read_params(tmp_path / "bad.ivlm")

    write_params(tmp_path / "p.ivlm", {name: t.data for name, t in _params().named()})
    blob = (tmp_path / "p.ivlm").read_bytes()
    (tmp_path / "cut.ivlm").write_bytes(blob[:-5])
    with pytest.raises(DataError):
        read_params(tmp_path / "cut.ivlm")


def test_checkpoint_directory_round_trip(tmp_path):
    params = _params()
    params.freeze(["lm.ln_f."])
    stages = [{"stage": "pretrain", "steps": 3}]
    manifest = save_checkpoint(tmp_path / "ckpt", params, {"dim": 3}, ["alpha", "beta"], stages)

    assert manifest["parameters"] == ["vision.pos_h", "lm.ln_f.gamma", "lm.scalar"]
    assert manifest["frozen"] == ["lm.ln_f.gamma"]
    assert len(manifest["content_hash"]) == 16

    bundle = load_checkpoint(tmp_path / "ckpt")
    assert bundle.config == {"dim": 3}
    assert bundle.vocab_tokens == ["alpha", "beta"]
    assert bundle.manifest["stages"] == stages
    np.testing.assert_array_equal(bundle.arrays["vision.pos_h"], params["vision.pos_h"].data)


def test_hash_mismatch_is_detected(tmp_path):
    save_checkpoint(tmp_path / "ckpt", _params(), {}, [])
    manifest_path = tmp_path / "ckpt" / MANIFEST_FILE
    manifest = json.loads(manifest_path.read_text())
    manifest["content_hash"] = "0" * 16
    manifest_path.write_text(json.dumps(manifest))
    with pytest.raises(DataError):
        load_checkpoint(tmp_path / "ckpt")
    assert load_checkpoint(tmp_path / "ckpt", verify=False).arrays


def test_missing_files(tmp_path):
    with pytest.raises(DataError):
        load_checkpoint(tmp_path / "absent")
    save_checkpoint(tmp_path / "ckpt", _params(), {}, [])
    (tmp_path / "ckpt" / PARAMS_FILE).unlink()
    with pytest.raises(DataError):
        load_checkpoint(tmp_path / "ckpt")
