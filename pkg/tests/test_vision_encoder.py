"""3D patch encoder: token counts, patch layout, positions and gradients."""

import numpy as np
import pytest

from conftest import random_volume, tiny_model_config
from tools.errors import ShapeError
from tools.gradcheck import check_gradients
from tools.params import ModelParams
from tools.tensor import mul_constant, tensor_sum

from pipeline.model.config import VisionConfig
from pipeline.model.vision_encoder import VisionEncoder, extract_patches, token_count


def _encoder(config: VisionConfig, std: float = 0.02, seed: int = 0) -> VisionEncoder:
    params = ModelParams()
    VisionEncoder.init_params(params, config, np.random.default_rng(seed), std)
    return VisionEncoder(params, config)


def test_full_size_token_counts():
    config = VisionConfig()
    assert token_count(512, 512, 4, config) == 256
    assert token_count(256, 256, 64, config) == 1024


def test_encode_shape():
    config = tiny_model_config().vision
    encoder = _encoder(config)
    assert encoder.encode(random_volume((32, 32, 4, 1))).shape == (4, 8)
    assert encoder.encode(random_volume((64, 32, 8, 1))).shape == (16, 8)


def test_patch_layout():
    config = VisionConfig(patch_h=2, patch_w=2, patch_d=2)
    voxels = np.arange(4 * 2 * 4, dtype=np.float64).reshape(4, 2, 4, 1)
    grid, patches = extract_patches(voxels, config)
    assert grid == (2, 1, 2)
    # token index is (i * n_w + j) * n_d + k
    np.testing.assert_array_equal(patches[3], voxels[2:4, 0:2, 2:4, :].reshape(-1))
    np.testing.assert_array_equal(patches[1], voxels[0:2, 0:2, 2:4, :].reshape(-1))


@pytest.mark.parametrize("shape", [(30, 32, 4, 1), (32, 30, 4, 1), (32, 32, 6, 1), (32, 32, 4, 2)])
def test_indivisible_or_wrong_channels(shape):
    with pytest.raises(ShapeError):
        extract_patches(np.zeros(shape), tiny_model_config().vision)


def test_grid_beyond_position_tables():
    encoder = _encoder(tiny_model_config().vision)
    with pytest.raises(ShapeError):
        encoder.encode(random_volume((80, 32, 4, 1)))


def test_positions_distinguish_identical_patches():
    encoder = _encoder(tiny_model_config().vision, std=0.5)
    flat = random_volume((32, 32, 4, 1))
    flat.voxels[:] = 0.5
    out = encoder.encode(flat).data
    assert not np.allclose(out[0], out[1])


def test_encoder_gradients():
    config = tiny_model_config().vision
    encoder = _encoder(config, std=0.3, seed=1)
    volume = random_volume((32, 32, 4, 1), seed=2)
    weights = np.random.default_rng(3).normal(size=(4, config.dim))
    tensors = [encoder.params[name] for name in encoder.params]
    result = check_gradients(lambda: tensor_sum(mul_constant(encoder.encode(volume), weights)),
                             tensors, max_entries_per_tensor=6)
    assert result.passed(1e-4), result
