"""
Run Configuration - one JSON document for training and generation

Sections map onto the component dataclasses:

    model.vision     VisionConfig        schedule   TrainSchedule
    model.perceiver  PerceiverConfig     training   TrainingConfig
    model.lm         LMConfig            optimizer  AdamWConfig
    preprocess       PreprocessConfig    generation GenerationConfig
    paths            PathsConfig         seed       int

Every section is optional and falls back to the dataclass defaults.
Unknown keys and mistyped scalars raise ConfigError naming the dotted
key path. Relative paths resolve against the config file's directory.
"""

import json
import typing
from dataclasses import dataclass, field, fields, is_dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

from tools.errors import ConfigError
from tools.optimizer import AdamWConfig
from tools.volume_io import PreprocessConfig

from pipeline.model.config import ModelConfig
from pipeline.training.trainer import TrainingConfig, TrainSchedule


@dataclass
class GenerationConfig:
    """Default greedy generation length, stored with the checkpoint."""
    max_new: int = 32

    def validate(self) -> "GenerationConfig":
        if self.max_new < 1:
            raise ConfigError(f"generation.max_new must be >= 1, got {self.max_new}")
        return self


@dataclass
class PathsConfig:
    """Shared resources used by training."""
    lexicon: str = "lexicon.txt"


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    schedule: TrainSchedule = field(default_factory=TrainSchedule)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    optimizer: AdamWConfig = field(default_factory=AdamWConfig)
    generation: GenerationConfig = field(default_factory=GenerationConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)
    seed: int = 0
    base_dir: Path = field(default=Path("."), repr=False)

    def resolve(self, relative: str) -> Path:
        path = Path(relative)
        return path if path.is_absolute() else self.base_dir / path

    @property
    def lexicon_path(self) -> Path:
        return self.resolve(self.paths.lexicon)

    @classmethod
    def from_dict(cls, data: Dict, base_dir: Optional[Path] = None) -> "RunConfig":
        config = _build(cls, data, "", skip=("base_dir",))
        config.base_dir = Path(base_dir) if base_dir is not None else Path(".")
        config.model.validate()
        config.schedule.validate()
        config.training.validate()
        config.generation.validate()
        return config

    @classmethod
    def load(cls, path: Path) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"Run config not found: {path}")
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"Run config {path} is not valid JSON: {e.msg} (line {e.lineno})") from None
        except UnicodeDecodeError:
            raise ConfigError(f"Run config {path} is not valid UTF-8") from None
        return cls.from_dict(data, base_dir=path.parent)


def _dotted(prefix: str, key: str) -> str:
    return f"{prefix}.{key}" if prefix else key


def _check_scalar(value: Any, expected: Any, key: str) -> Any:
    """Validate one leaf value against its annotation."""
    origin = typing.get_origin(expected)
    if origin is typing.Union:
        options = [a for a in typing.get_args(expected) if a is not type(None)]
        if value is None:
            return None
        return _check_scalar(value, options[0], key)
    if origin in (tuple, Tuple):
        args = typing.get_args(expected)
        if not isinstance(value, list) or len(value) != len(args):
            raise ConfigError(f"Config key '{key}' must be a list of {len(args)} values")
        return tuple(_check_scalar(v, a, f"{key}[{i}]") for i, (v, a) in enumerate(zip(value, args)))
    if expected is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"Config key '{key}' must be a boolean, got {value!r}")
    elif expected is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"Config key '{key}' must be an integer, got {value!r}")
    elif expected is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"Config key '{key}' must be a number, got {value!r}")
        value = float(value)
    elif expected is str:
        if not isinstance(value, str):
            raise ConfigError(f"Config key '{key}' must be a string, got {value!r}")
    return value


def _build(cls, data: Any, prefix: str, skip: Tuple[str, ...] = ()):
    """Instantiate dataclass `cls` from `data`, rejecting unknown keys."""
    if not isinstance(data, dict):
        raise ConfigError(f"Config section '{prefix or '<root>'}' must be an object")
    hints = typing.get_type_hints(cls)
    known = {f.name for f in fields(cls) if f.init and f.name not in skip}
    for key in data:
        if key not in known:
            raise ConfigError(f"Unknown config key '{_dotted(prefix, key)}'")

    kwargs = {}
    for name in known:
        if name not in data:
            continue
        key = _dotted(prefix, name)
        expected = hints[name]
        if is_dataclass(expected):
            kwargs[name] = _build(expected, data[name], key)
        else:
            kwargs[name] = _check_scalar(data[name], expected, key)
    return cls(**kwargs)

