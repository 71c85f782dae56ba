"""
Trainer - two-stage training with a frozen-decoder alignment phase

Stage "pretrain" runs on the pretraining corpus; its first
`phase1_epochs` epochs hold the decoder fixed (phase "align") so the
visual side learns to feed it. Stage "finetune" runs on the fine-tuning
corpus with every parameter trainable. Both stages go through the same
`train` operation and share every setting except their data; each stage
starts a fresh optimizer.
"""

from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from tools.errors import TrainingError
from tools.lexicon import Lexicon
from tools.optimizer import AdamW, AdamWConfig
from tools.tensor import ComputationTape, backward
from tools.volume_io import PreprocessConfig, Volume, preprocess

from pipeline.corpus.sample import Sample
from pipeline.model.language_core import LanguageCore
from pipeline.model.multimodal import RadiologyVLM
from pipeline.training.loss import sequence_loss
from pipeline.training.weights import WeightedTokenSequence, assign_weights

ALIGN_PHASE = "align"
STAGES = ("pretrain", "finetune")


@dataclass
class TrainSchedule:
    """Epoch plan. Default: 4 pretraining epochs (the first aligns only) then 2 fine-tuning epochs."""
    phase1_epochs: int = 1
    pretrain_epochs: int = 4
    finetune_epochs: int = 2
    freeze_lm_in_phase1: bool = True

    @property
    def total_epochs(self) -> int:
        return self.pretrain_epochs + self.finetune_epochs

    def validate(self) -> "TrainSchedule":
        if min(self.phase1_epochs, self.pretrain_epochs, self.finetune_epochs) < 0:
            raise TrainingError("Epoch counts must be non-negative")
        if self.phase1_epochs > self.pretrain_epochs:
            raise TrainingError(
                f"phase1_epochs {self.phase1_epochs} exceeds pretrain_epochs {self.pretrain_epochs}"
            )
        return self


@dataclass
class TrainingConfig:
    batch_size: int = 4
    grad_accum: int = 1
    max_steps: Optional[int] = None
    target_loss: Optional[float] = None
    smoothing_window: int = 10
    log_every: int = 10

    def validate(self) -> "TrainingConfig":
        if self.batch_size < 1 or self.grad_accum < 1:
            raise TrainingError("batch_size and grad_accum must be >= 1")
        if self.smoothing_window < 1:
            raise TrainingError("smoothing_window must be >= 1")
        return self


@dataclass
class PreparedSample:
    """A sample ready for the training loop: weighted tokens and preprocessed volumes."""
    sample_id: str
    sequence: WeightedTokenSequence
    volumes: List[Volume]

    @property
    def weight(self) -> float:
        return float(self.sequence.target_weights().sum())


@dataclass
class TraceRow:
    step: int
    phase: str
    loss: float


@dataclass
class TrainResult:
    trace: List[TraceRow] = field(default_factory=list)
    stages: List[Dict] = field(default_factory=list)
    stopped_early: bool = False

    @property
    def steps(self) -> int:
        return len(self.trace)

    def losses(self) -> List[float]:
        return [row.loss for row in self.trace]


def prepare_samples(samples: List[Sample], root: Path, model: RadiologyVLM, lexicon: Lexicon,
                    preprocess_config: PreprocessConfig) -> List[PreparedSample]:
    """Assign weights and load + preprocess volumes once per sample."""
    prepared = []
    for sample in samples:
        sequence = assign_weights(sample, model.vocab, lexicon, model.n_queries)
        volumes = [preprocess(v, preprocess_config) for v in sample.load_volumes(root)]
        prepared.append(PreparedSample(sample.id, sequence, volumes))
    return prepared


def smoothed(losses: List[float], window: int) -> List[float]:
    """Trailing moving average (shorter windows at the start)."""
    return pd.Series(losses, dtype="float64").rolling(window, min_periods=1).mean().tolist()


def _batch_step(model: RadiologyVLM, batch: List[PreparedSample], normalizer: float) -> float:
    """Forward/backward over one micro-batch; gradients accumulate in `.grad`."""
    total = 0.0
    for item in batch:
        with ComputationTape() as tape:
            logits = model.forward_expanded(item.sequence.ids, item.sequence.spans, item.volumes)
            loss = sequence_loss(logits, item.sequence.ids, item.sequence.weights, normalizer)
        backward(tape, loss)
        total += loss.item()
    return total


def train(corpus: List[PreparedSample],
          model: RadiologyVLM,
          schedule: TrainSchedule,
          optimizer_config: AdamWConfig,
          seed: int,
          stage: str = "pretrain",
          training_config: Optional[TrainingConfig] = None,
          result: Optional[TrainResult] = None,
          verbose: bool = False) -> TrainResult:
    """
    Train one stage.

    Batch order is a seeded permutation per epoch. Each optimizer step
    covers `grad_accum` batches; its loss is normalized by the total
    weight of those batches.

    Args:
        corpus: Prepared samples of this stage
        model: Model to update in place
        schedule: Epoch plan
        optimizer_config: AdamW settings (a fresh optimizer per stage)
        seed: Shuffling seed
        stage: "pretrain" (with the align phase) or "finetune"
        training_config: Batch, accumulation and stopping settings
        result: Result of an earlier stage to append to
        verbose: Print progress lines

    Returns:
        TrainResult with the per-step loss trace
    """
    if stage not in STAGES:
        raise TrainingError(f"Unknown training stage '{stage}'")
    if not corpus:
        raise TrainingError(f"Stage {stage} has no training samples")
    schedule.validate()
    cfg = (training_config or TrainingConfig()).validate()
    result = result or TrainResult()
    params = model.params
    optimizer = AdamW(params, optimizer_config)

    if stage == "pretrain":
        epochs = schedule.pretrain_epochs
        align_epochs = schedule.phase1_epochs if schedule.freeze_lm_in_phase1 else 0
    else:
        epochs, align_epochs = schedule.finetune_epochs, 0

    stage_index = STAGES.index(stage)
    group = cfg.batch_size * cfg.grad_accum
    first_step = result.steps
    if verbose:
        print(f"🚀 Stage {stage}: {len(corpus)} samples, {epochs} epochs ({align_epochs} aligning)")

    for epoch in range(epochs):
        phase = ALIGN_PHASE if epoch < align_epochs else stage
        params.unfreeze_all()
        if phase == ALIGN_PHASE:
            params.freeze(LanguageCore.frozen_prefixes(model.config.lm))
        order = np.random.default_rng([seed, stage_index, epoch]).permutation(len(corpus))

        for start in range(0, len(order), group):
            if cfg.max_steps is not None and result.steps >= cfg.max_steps:
                break
            members = [corpus[i] for i in order[start:start + group]]
            normalizer = sum(m.weight for m in members)
            if normalizer <= 0:
                raise TrainingError(f"Batch at step {result.steps + 1} has no weighted targets")
            params.zero_grad()
            loss = 0.0
            for b in range(0, len(members), cfg.batch_size):
                loss += _batch_step(model, members[b:b + cfg.batch_size], normalizer)
            optimizer.step()
            result.trace.append(TraceRow(step=result.steps + 1, phase=phase, loss=loss))

            if verbose and result.steps % cfg.log_every == 0:
                print(f"  step {result.steps} [{phase}] loss {loss:.4f}")
            if cfg.target_loss is not None and phase != ALIGN_PHASE:
                recent = smoothed(result.losses(), cfg.smoothing_window)[-1]
                if len(result.trace) >= cfg.smoothing_window and recent < cfg.target_loss:
                    result.stopped_early = True
                    break
        if result.stopped_early or (cfg.max_steps is not None and result.steps >= cfg.max_steps):
            break

    params.unfreeze_all()
    params.zero_grad()
    result.stages.append({
        "stage": stage,
        "samples": len(corpus),
        "epochs": epochs,
        "align_epochs": align_epochs,
        "steps": result.steps - first_step,
        "optimizer": asdict(optimizer_config),
    })
    if verbose:
        last = result.trace[-1].loss if result.trace else float("nan")
        print(f"✓ Stage {stage} finished after {result.steps - first_step} steps (last loss {last:.4f})")
    return result


def run_training(corpora: Dict[str, List[PreparedSample]],
                 model: RadiologyVLM,
                 schedule: TrainSchedule,
                 optimizer_config: AdamWConfig,
                 seed: int,
                 training_config: Optional[TrainingConfig] = None,
                 verbose: bool = False) -> TrainResult:
    """Pretraining then fine-tuning; a stage with no samples or no epochs is skipped."""
    result = TrainResult()
    for stage in STAGES:
        samples = corpora.get(stage) or []
        epochs = schedule.pretrain_epochs if stage == "pretrain" else schedule.finetune_epochs
        if not samples or epochs == 0 or result.stopped_early:
            if verbose and not result.stopped_early:
                print(f"⚠️  Skipping stage {stage}: {len(samples)} samples, {epochs} epochs")
            continue
        train(samples, model, schedule, optimizer_config, seed, stage, training_config, result, verbose)
    return result


def trace_frame(result: TrainResult) -> pd.DataFrame:
    return pd.DataFrame([asdict(row) for row in result.trace], columns=["step", "phase", "loss"])


def write_trace(result: TrainResult, path: Path):
    """Loss trace as CSV with columns step,phase,loss."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    trace_frame(result).to_csv(path, index=False, float_format="%.12g")


def plot_trace(result: TrainResult, path: Path, window: int = 10):
    """Raw and smoothed loss per step, one color per phase."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    frame = trace_frame(result)
    fig, ax = plt.subplots(figsize=(8, 4))
    for phase, rows in frame.groupby("phase", sort=False):
        ax.plot(rows["step"], rows["loss"], alpha=0.35, label=f"{phase} (raw)")
    ax.plot(frame["step"], smoothed(frame["loss"].tolist(), window), color="black", label=f"smoothed ({window})")
    ax.set_xlabel("step")
    ax.set_ylabel("weighted loss")
    ax.legend()
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
