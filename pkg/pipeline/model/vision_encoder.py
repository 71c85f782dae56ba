"""
3D Vision Encoder

Splits a preprocessed volume into non-overlapping patch_h x patch_w x
patch_d blocks, projects each block to `dim`, adds factorized learnable
per-axis position embeddings and runs a stack of pre-norm transformer
blocks. A volume yields P = (H/ph)(W/pw)(D/pd) tokens; 2D and 3D scans
therefore produce different token counts.
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from tools.errors import ShapeError
from tools.params import ModelParams
from tools.tensor import Tensor, add, take_rows
from tools.volume_io import Volume

from pipeline.model.config import VisionConfig
from pipeline.model.layers import block, init_block, init_linear, init_norm, linear, norm

PREFIX = "vision"


@dataclass
class PatchGrid:
    """Patch tokens with the grid they were cut from."""
    n_h: int
    n_w: int
    n_d: int
    tokens: Tensor

    @property
    def count(self) -> int:
        return self.n_h * self.n_w * self.n_d

    def grid_index(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(i, j, k) of every token; token index is (i * n_w + j) * n_d + k."""
        i, j, k = np.meshgrid(np.arange(self.n_h), np.arange(self.n_w), np.arange(self.n_d), indexing="ij")
        return i.reshape(-1), j.reshape(-1), k.reshape(-1)


def extract_patches(voxels: np.ndarray, config: VisionConfig) -> Tuple[Tuple[int, int, int], np.ndarray]:
    """
    Cut an H x W x D x C array into flattened patches.

    Returns:
        ((n_h, n_w, n_d), array of shape [P x (ph * pw * pd * C)])

    Raises:
        ShapeError: an axis is not divisible by its patch size
    """
    if voxels.ndim != 4:
        raise ShapeError(f"Expected an H x W x D x C volume, got shape {voxels.shape}")
    h, w, d, c = voxels.shape
    if c != config.in_channels:
        raise ShapeError(f"Volume has {c} channels, encoder expects {config.in_channels}")
    for axis, size, patch in (("height", h, config.patch_h), ("width", w, config.patch_w),
                              ("depth", d, config.patch_d)):
        if size % patch:
            raise ShapeError(f"Volume {axis} {size} is not divisible by patch {axis} {patch}")
    n_h, n_w, n_d = h // config.patch_h, w // config.patch_w, d // config.patch_d
    blocks = voxels.reshape(n_h, config.patch_h, n_w, config.patch_w, n_d, config.patch_d, c)
    blocks = blocks.transpose(0, 2, 4, 1, 3, 5, 6)
    return (n_h, n_w, n_d), blocks.reshape(n_h * n_w * n_d, -1)


class VisionEncoder:
    """
    Per-volume encoder. Volumes are encoded independently; nothing is
    shared between two volumes of the same sample.

    Args:
        params: Parameter store holding the ``vision.*`` tensors
        config: Encoder settings
    """

    def __init__(self, params: ModelParams, config: VisionConfig):
        self.params = params
        self.config = config

    @staticmethod
    def init_params(params: ModelParams, config: VisionConfig, rng: np.random.Generator, std: float = 0.02):
        patch_dim = config.patch_h * config.patch_w * config.patch_d * config.in_channels
        init_linear(params, rng, f"{PREFIX}.patch_proj", patch_dim, config.dim, std)
        params.add(f"{PREFIX}.pos_h", rng.normal(0.0, std, size=(config.max_pos_h, config.dim)))
        params.add(f"{PREFIX}.pos_w", rng.normal(0.0, std, size=(config.max_pos_w, config.dim)))
        params.add(f"{PREFIX}.pos_d", rng.normal(0.0, std, size=(config.max_pos_d, config.dim)))
        for i in range(config.layers):
            init_block(params, rng, f"{PREFIX}.blocks.{i}", config.dim, config.mlp_ratio, std)
        init_norm(params, f"{PREFIX}.ln_f", config.dim)

    def patchify(self, volume: Volume) -> PatchGrid:
        (n_h, n_w, n_d), raw = extract_patches(volume.voxels, self.config)
        tokens = linear(Tensor(raw), self.params, f"{PREFIX}.patch_proj")
        return PatchGrid(n_h, n_w, n_d, tokens)

    def add_position(self, grid: PatchGrid) -> PatchGrid:
        """Token (i, j, k) receives pos_h[i] + pos_w[j] + pos_d[k]."""
        cfg = self.config
        if grid.n_h > cfg.max_pos_h or grid.n_w > cfg.max_pos_w or grid.n_d > cfg.max_pos_d:
            raise ShapeError(
                f"Patch grid {grid.n_h}x{grid.n_w}x{grid.n_d} exceeds position tables "
                f"{cfg.max_pos_h}x{cfg.max_pos_w}x{cfg.max_pos_d}"
            )
        i, j, k = grid.grid_index()
        tokens = add(grid.tokens, take_rows(self.params[f"{PREFIX}.pos_h"], i))
        tokens = add(tokens, take_rows(self.params[f"{PREFIX}.pos_w"], j))
        tokens = add(tokens, take_rows(self.params[f"{PREFIX}.pos_d"], k))
        return PatchGrid(grid.n_h, grid.n_w, grid.n_d, tokens)

    def encode(self, volume: Volume) -> Tensor:
        """Patch tokens [P x dim] for one preprocessed volume."""
        x = self.add_position(self.patchify(volume)).tokens
        for i in range(self.config.layers):
            x = block(x, self.params, f"{PREFIX}.blocks.{i}", self.config.heads)
        return norm(x, self.params, f"{PREFIX}.ln_f")


def token_count(height: int, width: int, depth: int, config: VisionConfig) -> int:
    return (height // config.patch_h) * (width // config.patch_w) * (depth // config.patch_d)
