"""Shared fixtures: tiny model configurations, vocabularies and volumes."""

import sys
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parent.parent
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from tools.lexicon import Lexicon  # noqa: E402
from tools.volume_io import Modality, PreprocessConfig, Volume  # noqa: E402

from pipeline.model.config import LMConfig, ModelConfig, PerceiverConfig, VisionConfig  # noqa: E402
from pipeline.model.vocabulary import Vocabulary  # noqa: E402

DATA_DIR = ROOT / "data"


def tiny_model_config(n_queries: int = 4, lm_layers: int = 1, tie_embeddings: bool = True,
                      max_len: int = 128, max_images: int = 4) -> ModelConfig:
    """Vision dim 8 / 1 layer, LM dim 16; 16 x 16 x 4 patches."""
    return ModelConfig(
        vision=VisionConfig(patch_h=16, patch_w=16, patch_d=4, dim=8, layers=1, heads=2,
                            mlp_ratio=2, max_pos_h=4, max_pos_w=4, max_pos_d=4),
        perceiver=PerceiverConfig(n_queries=n_queries, layers=1, dim=16, heads=2, mlp_ratio=2),
        lm=LMConfig(dim=16, layers=lm_layers, heads=2, mlp_ratio=2, max_len=max_len,
                    max_images=max_images, vocab_limit=512, tie_embeddings=tie_embeddings),
    ).validate()


TINY_PREPROCESS = PreprocessConfig(size_2d=32, size_3d=32, patch_depth=4, max_depth=16)


def random_volume(shape=(32, 32, 4, 1), modality=Modality.CT, native_2d=False, seed=0) -> Volume:
    rng = np.random.default_rng(seed)
    return Volume(voxels=rng.uniform(0.0, 1.0, size=shape), modality=modality, is_native_2d=native_2d)


@pytest.fixture
def tiny_config() -> ModelConfig:
    return tiny_model_config()


@pytest.fixture
def vocab() -> Vocabulary:
    texts = [
        "<image-1> What modality is used to take this image? CT",
        "<image-1> Is pneumonia shown in this image? yes",
        "The patient underwent MRI imaging. <image-1> The scan shows pleural effusion.",
        "no abnormality, the scan shows edema and fracture.",
    ]
    return Vocabulary.build(texts, max_images=4)


@pytest.fixture
def lexicon() -> Lexicon:
    return Lexicon(["pneumonia", "pleural effusion", "edema", "fracture", "ct", "mri"])


@pytest.fixture
def volume() -> Volume:
    return random_volume()
