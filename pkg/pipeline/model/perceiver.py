"""
Perceiver resampler: a fixed set of learnable queries cross-attends over
a variable number of patch tokens and returns exactly n_queries rows.

Keys carry no positional term here; positions are already inside the
patch tokens, so the output is invariant to the order of the input rows.
"""

import numpy as np

from tools.errors import ShapeError
from tools.params import ModelParams
from tools.tensor import Tensor, add

from pipeline.model.config import PerceiverConfig
from pipeline.model.layers import (
    attention, init_attention, init_linear, init_mlp, init_norm, linear, mlp, norm,
)

PREFIX = "perceiver"


class PerceiverResampler:
    """
    Args:
        params: Parameter store holding the ``perceiver.*`` tensors
        config: Resampler settings
    """

    def __init__(self, params: ModelParams, config: PerceiverConfig):
        self.params = params
        self.config = config

    @staticmethod
    def init_params(params: ModelParams, config: PerceiverConfig, vision_dim: int,
                    rng: np.random.Generator, std: float = 0.02):
        params.add(f"{PREFIX}.queries", rng.normal(0.0, config.query_init_std, size=(config.n_queries, config.dim)))
        init_linear(params, rng, f"{PREFIX}.input_proj", vision_dim, config.dim, std)
        for i in range(config.layers):
            layer = f"{PREFIX}.layers.{i}"
            init_norm(params, f"{layer}.ln_q", config.dim)
            init_norm(params, f"{layer}.ln_kv", config.dim)
            init_attention(params, rng, f"{layer}.cross_attn", config.dim, std)
            if config.query_self_attention:
                init_norm(params, f"{layer}.ln_self", config.dim)
                init_attention(params, rng, f"{layer}.self_attn", config.dim, std)
            init_norm(params, f"{layer}.ln_mlp", config.dim)
            init_mlp(params, rng, f"{layer}.mlp", config.dim, config.mlp_ratio, std)
        init_norm(params, f"{PREFIX}.ln_out", config.dim)

    def resample(self, patch_tokens: Tensor) -> Tensor:
        """
        Compress [P x d_vis] patch tokens to [n_queries x dim].

        Raises:
            ShapeError: no patch tokens
        """
        if patch_tokens.ndim != 2 or patch_tokens.shape[0] < 1:
            raise ShapeError(f"Perceiver needs at least one patch token, got shape {patch_tokens.shape}")
        cfg = self.config
        context = linear(patch_tokens, self.params, f"{PREFIX}.input_proj")
        x = self.params[f"{PREFIX}.queries"]
        for i in range(cfg.layers):
            layer = f"{PREFIX}.layers.{i}"
            kv = norm(context, self.params, f"{layer}.ln_kv")
            x = add(x, attention(norm(x, self.params, f"{layer}.ln_q"), kv, self.params,
                                 f"{layer}.cross_attn", cfg.heads))
            if cfg.query_self_attention:
                h = norm(x, self.params, f"{layer}.ln_self")
                x = add(x, attention(h, h, self.params, f"{layer}.self_attn", cfg.heads))
            x = add(x, mlp(norm(x, self.params, f"{layer}.ln_mlp"), self.params, f"{layer}.mlp"))
        return norm(x, self.params, f"{PREFIX}.ln_out")
