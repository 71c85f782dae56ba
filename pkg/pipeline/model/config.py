"""Model configuration dataclasses (desk-scale defaults)."""

from dataclasses import asdict, dataclass, field
from typing import Dict

from tools.errors import ConfigError


@dataclass
class VisionConfig:
    """3D ViT settings. Full scale: dim 768, 12 layers."""
    patch_h: int = 32
    patch_w: int = 32
    patch_d: int = 4
    in_channels: int = 1
    dim: int = 64
    layers: int = 2
    heads: int = 4
    mlp_ratio: int = 4
    max_pos_h: int = 16
    max_pos_w: int = 16
    max_pos_d: int = 16

    def validate(self):
        if self.dim % self.heads:
            raise ConfigError(f"vision.dim {self.dim} is not divisible by vision.heads {self.heads}")
        if min(self.patch_h, self.patch_w, self.patch_d, self.in_channels, self.layers) < 1:
            raise ConfigError("vision patch sizes, channels and layers must be >= 1")


@dataclass
class PerceiverConfig:
    """Resampler settings. Full scale: 32 queries, dim 5120, 6 layers."""
    n_queries: int = 32
    layers: int = 2
    dim: int = 128
    heads: int = 4
    mlp_ratio: int = 4
    query_self_attention: bool = False
    query_init_std: float = 0.02

    def validate(self):
        if self.n_queries < 1:
            raise ConfigError(f"perceiver.n_queries must be >= 1, got {self.n_queries}")
        if self.dim % self.heads:
            raise ConfigError(f"perceiver.dim {self.dim} is not divisible by perceiver.heads {self.heads}")


@dataclass
class LMConfig:
    """Causal decoder settings. Full scale: dim 5120, max_len 2048."""
    dim: int = 128
    layers: int = 4
    heads: int = 4
    mlp_ratio: int = 4
    max_len: int = 256
    max_images: int = 8
    vocab_limit: int = 4096
    tie_embeddings: bool = True

    def validate(self):
        if self.dim % self.heads:
            raise ConfigError(f"lm.dim {self.dim} is not divisible by lm.heads {self.heads}")
        if self.max_len < 2 or self.max_images < 1:
            raise ConfigError("lm.max_len must be >= 2 and lm.max_images >= 1")


@dataclass
class ModelConfig:
    """Vision encoder, perceiver and language model settings together."""
    vision: VisionConfig = field(default_factory=VisionConfig)
    perceiver: PerceiverConfig = field(default_factory=PerceiverConfig)
    lm: LMConfig = field(default_factory=LMConfig)
    init_std: float = 0.02

    def validate(self) -> "ModelConfig":
        self.vision.validate()
        self.perceiver.validate()
        self.lm.validate()
        if self.perceiver.dim != self.lm.dim:
            raise ConfigError(
                f"perceiver.dim {self.perceiver.dim} must equal lm.dim {self.lm.dim}"
            )
        return self

    @property
    def visual_slots(self) -> int:
        """Positions one image placeholder expands to: open, queries, close."""
        return self.perceiver.n_queries + 2

    def to_dict(self) -> Dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict) -> "ModelConfig":
        return cls(
            vision=VisionConfig(**data.get("vision", {})),
            perceiver=PerceiverConfig(**data.get("perceiver", {})),
            lm=LMConfig(**data.get("lm", {})),
            init_std=data.get("init_std", 0.02),
        ).validate()
