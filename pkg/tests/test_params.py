"""Parameter store: naming, freezing, snapshots and array loading."""

import numpy as np
import pytest

from tools.errors import ConfigError
from tools.params import ModelParams


def _store() -> ModelParams:
    params = ModelParams()
    params.add("vision.patch_proj.weight", np.ones((4, 2)))
    params.add("lm.blocks.0.attn.q.weight", np.zeros((2, 2)))
    params.add("lm.token_embed", np.zeros((5, 2)))
    return params


def test_names_and_count():
    params = _store()
    assert params.names("lm.") == ["lm.blocks.0.attn.q.weight", "lm.token_embed"]
    assert params.count() == 8 + 4 + 10
    assert len(params) == 3
    assert "lm.token_embed" in params


def test_duplicate_and_unknown_names():
    params = _store()
    with pytest.raises(ConfigError):
        params.add("lm.token_embed", np.zeros(1))
    with pytest.raises(ConfigError):
        params["missing"]


def test_freeze_by_prefix_and_unfreeze():
    params = _store()
    params.freeze(["lm.blocks."])
    assert params.frozen_names() == ["lm.blocks.0.attn.q.weight"]
    assert not params["lm.blocks.0.attn.q.weight"].requires_grad
    assert params["lm.token_embed"].requires_grad
    params.unfreeze_all()
    assert params.frozen_names() == []
    assert params["lm.blocks.0.attn.q.weight"].requires_grad


def test_load_arrays_strict():
    params = _store()
    arrays = params.snapshot()
    arrays["lm.token_embed"] = np.full((5, 2), 7.0)
    params.load_arrays(arrays)
    np.testing.assert_array_equal(params["lm.token_embed"].data, np.full((5, 2), 7.0))

    del arrays["lm.token_embed"]
    with pytest.raises(ConfigError):
        params.load_arrays(arrays, strict=True)


def test_load_arrays_shape_mismatch():
    params = _store()
    arrays = params.snapshot()
    arrays["lm.token_embed"] = np.zeros((6, 2))
    with pytest.raises(ConfigError):
        params.load_arrays(arrays)


def test_snapshot_is_a_copy():
    params = _store()
    snap = params.snapshot("vision.")
    params["vision.patch_proj.weight"].data[0, 0] = 5.0
    assert snap["vision.patch_proj.weight"][0, 0] == 1.0
