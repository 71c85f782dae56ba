"""
Multimodal Model - vision encoder + perceiver + language core

Wires the three components over one shared parameter store and exposes
the operations the trainer and the benchmark need: visual embeddings,
interleaved forward passes, greedy generation and checkpoint round trips.
"""

from dataclasses import asdict
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from tools.checkpoint import load_checkpoint, save_checkpoint
from tools.errors import ConfigError, SequenceError
from tools.params import ModelParams
from tools.tensor import Tensor
from tools.volume_io import PreprocessConfig, Volume

from pipeline.model.config import ModelConfig
from pipeline.model.language_core import (
    AssembledSequence, LanguageCore, VisualSpan, expand_placeholders,
)
from pipeline.model.perceiver import PerceiverResampler
from pipeline.model.vision_encoder import VisionEncoder
from pipeline.model.vocabulary import EOS, Vocabulary


class RadiologyVLM:
    """
    Visually conditioned generative model.

    Args:
        config: Model configuration (validated)
        vocab: Token vocabulary; its size fixes the embedding table
        params: Existing parameter store; freshly initialized when None
        seed: Initialization seed
        preprocess: Input geometry the model is trained on; stored with checkpoints
        max_new: Default generation length; stored with checkpoints
    """

    def __init__(self, config: ModelConfig, vocab: Vocabulary,
                 params: Optional[ModelParams] = None, seed: int = 0,
                 preprocess: Optional[PreprocessConfig] = None, max_new: int = 32):
        self.config = config.validate()
        if max_new < 1:
            raise ConfigError(f"max_new must be >= 1, got {max_new}")
        self.max_new = max_new
        self.vocab = vocab
        self.preprocess = preprocess or PreprocessConfig()
        if vocab.max_images != config.lm.max_images:
            raise SequenceError(
                f"Vocabulary has {vocab.max_images} image slots, model expects {config.lm.max_images}"
            )
        if params is None:
            params = self.init_params(config, len(vocab), seed)
        self.params = params
        self.vision = VisionEncoder(params, config.vision)
        self.perceiver = PerceiverResampler(params, config.perceiver)
        self.lm = LanguageCore(params, config.lm, len(vocab))

    @staticmethod
    def init_params(config: ModelConfig, vocab_size: int, seed: int) -> ModelParams:
        rng = np.random.default_rng(seed)
        params = ModelParams()
        VisionEncoder.init_params(params, config.vision, rng, config.init_std)
        PerceiverResampler.init_params(params, config.perceiver, config.vision.dim, rng, config.init_std)
        LanguageCore.init_params(params, config.lm, vocab_size, rng, config.init_std)
        return params

    @property
    def n_queries(self) -> int:
        return self.config.perceiver.n_queries

    # ------------------------------------------------------------------
    # Forward passes

    def visual_embeddings(self, volumes: Sequence[Volume]) -> List[Tensor]:
        """One [n_queries x dim] embedding per preprocessed volume, encoded separately."""
        return [self.perceiver.resample(self.vision.encode(v)) for v in volumes]

    def expand(self, ids: Sequence[int], n_images: Optional[int] = None):
        return expand_placeholders(ids, self.vocab, self.n_queries, n_images)

    def assemble(self, ids: Sequence[int], volumes: Sequence[Volume]) -> AssembledSequence:
        """Expand placeholders in `ids` and splice in the embeddings of `volumes`."""
        expanded, spans = self.expand(ids, n_images=len(volumes))
        return self.lm.assemble(expanded, spans, self.visual_embeddings(volumes))

    def forward(self, ids: Sequence[int], volumes: Sequence[Volume]) -> Tensor:
        return self.lm.forward_lm(self.assemble(ids, volumes))

    def forward_expanded(self, expanded: Sequence[int], spans: Sequence[VisualSpan],
                         volumes: Sequence[Volume]) -> Tensor:
        """Logits for an already expanded sequence (as produced for training)."""
        return self.lm.forward_lm(self.lm.assemble(expanded, spans, self.visual_embeddings(volumes)))

    # ------------------------------------------------------------------
    # Generation

    def generate_ids(self, prompt_ids: Sequence[int], volumes: Sequence[Volume], max_new: int) -> List[int]:
        """
        Greedy decoding from the last prompt position.

        Args:
            prompt_ids: Prompt ids starting with BOS and without EOS
            volumes: Preprocessed volumes for the prompt's placeholders
            max_new: Maximum number of generated tokens

        Returns:
            Generated ids, EOS excluded
        """
        if max_new <= 0:
            return []
        expanded, spans = self.expand(prompt_ids, n_images=len(volumes))
        if len(expanded) + max_new > self.config.lm.max_len:
            raise SequenceError(
                f"Prompt of {len(expanded)} positions plus {max_new} new tokens "
                f"exceeds max_len {self.config.lm.max_len}"
            )
        visuals = self.visual_embeddings(volumes)
        generated: List[int] = []
        for _ in range(max_new):
            sequence = self.lm.assemble(expanded + generated, spans, visuals)
            logits = self.lm.forward_lm(sequence)
            next_id = int(np.argmax(logits.data[-1]))
            if next_id == EOS:
                break
            generated.append(next_id)
        return generated

    def generate(self, prompt: str, volumes: Sequence[Volume], max_new: Optional[int] = None) -> str:
        """Greedy continuation of `prompt`, detokenized; `max_new` defaults to the model's."""
        prompt_ids = self.vocab.tokenize(prompt, eos=False)
        max_new = self.max_new if max_new is None else max_new
        return self.vocab.detokenize(self.generate_ids(prompt_ids, volumes, max_new))

    # ------------------------------------------------------------------
    # Checkpoints

    def save(self, directory: Path, stages: Optional[List[Dict]] = None) -> Dict:
        config = self.config.to_dict()
        config["preprocess"] = asdict(self.preprocess)
        config["generation"] = {"max_new": self.max_new}
        return save_checkpoint(directory, self.params, config, self.vocab.words, stages)

    @classmethod
    def load(cls, directory: Path) -> "RadiologyVLM":
        bundle = load_checkpoint(directory)
        stored = dict(bundle.config)
        preprocess = PreprocessConfig(**stored.pop("preprocess", {}))
        generation = stored.pop("generation", {})
        config = ModelConfig.from_dict(stored)
        vocab = Vocabulary(bundle.vocab_tokens, max_images=config.lm.max_images)
        model = cls(config, vocab, seed=0, preprocess=preprocess, max_new=generation.get("max_new", 32))
        model.params.load_arrays(bundle.arrays, strict=True)
        return model

