"""
Sample data model and JSON-lines manifests.

Manifest line fields: id, kind, task, text, instruction, response,
volume_paths (relative to the manifest directory), labels.
"""

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional

from tools.errors import DataError
from tools.text_utils import PLACEHOLDER_PATTERN
from tools.volume_io import Volume, load_volume


class SampleKind(Enum):
    INTERLEAVED = "interleaved"
    INSTRUCTION = "instruction"


class Task(Enum):
    MODALITY_RECOGNITION = "modality_recognition"
    DISEASE_DIAGNOSIS = "disease_diagnosis"
    VQA = "vqa"
    REPORT_GENERATION = "report_generation"
    RATIONALE_DIAGNOSIS = "rationale_diagnosis"
    FREE_INTERLEAVED = "free_interleaved"


class PromptForm(Enum):
    JUDGMENT = "judgment"
    OPEN = "open"


def join_instruction(instruction: str, response: str) -> str:
    return f"{instruction} {response}"


@dataclass
class Sample:
    """
    One training or evaluation example.

    Instruction samples keep the instruction/response boundary explicitly;
    their text is always instruction + " " + response.
    """
    id: str
    kind: SampleKind
    task: Task
    text: str
    volume_paths: List[str] = field(default_factory=list)
    instruction: Optional[str] = None
    response: Optional[str] = None
    labels: Dict = field(default_factory=dict)

    @classmethod
    def instruction_sample(cls, sample_id: str, task: Task, instruction: str, response: str,
                           volume_paths: List[str], labels: Optional[Dict] = None) -> "Sample":
        return cls(
            id=sample_id,
            kind=SampleKind.INSTRUCTION,
            task=task,
            text=join_instruction(instruction, response),
            volume_paths=list(volume_paths),
            instruction=instruction,
            response=response,
            labels=dict(labels or {}),
        )

    @property
    def is_instruction(self) -> bool:
        return self.kind is SampleKind.INSTRUCTION

    @property
    def form(self) -> Optional[PromptForm]:
        value = self.labels.get("form")
        return PromptForm(value) if value else None

    def placeholder_indices(self) -> List[int]:
        return [int(m) for m in PLACEHOLDER_PATTERN.findall(self.text)]

    def validate(self) -> "Sample":
        """
        Check the sample invariants.

        Raises:
            DataError: missing instruction/response, text mismatch, or a
                placeholder set that is not exactly <image-1> .. <image-N>
        """
        if self.is_instruction:
            if self.instruction is None or self.response is None:
                raise DataError(f"Instruction sample {self.id} lacks an instruction or response")
            if self.text != join_instruction(self.instruction, self.response):
                raise DataError(f"Instruction sample {self.id} text is not instruction + response")
        indices = self.placeholder_indices()
        expected = list(range(1, len(self.volume_paths) + 1))
        if sorted(indices) != expected:
            raise DataError(
                f"Sample {self.id} has placeholders {indices} for {len(self.volume_paths)} volumes"
            )
        return self

    def load_volumes(self, root: Path) -> List[Volume]:
        """Volumes in placeholder order, resolved against the manifest directory."""
        return [load_volume(Path(root) / p) for p in self.volume_paths]

    def to_dict(self) -> Dict:
        return {
            "id": self.id,
            "kind": self.kind.value,
            "task": self.task.value,
            "text": self.text,
            "instruction": self.instruction,
            "response": self.response,
            "volume_paths": list(self.volume_paths),
            "labels": self.labels,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "Sample":
        if not isinstance(data, dict):
            raise DataError(f"Manifest record must be a JSON object, got {type(data).__name__}")
        for key in ("text", "instruction", "response"):
            if data.get(key) is not None and not isinstance(data[key], str):
                raise DataError(f"Manifest record {data.get('id')}: field '{key}' must be a string")
        try:
            return cls(
                id=str(data["id"]),
                kind=SampleKind(data["kind"]),
                task=Task(data["task"]),
                text=data["text"],
                volume_paths=list(data.get("volume_paths") or []),
                instruction=data.get("instruction"),
                response=data.get("response"),
                labels=dict(data.get("labels") or {}),
            ).validate()
        except KeyError as e:
            raise DataError(f"Manifest record lacks field {e.args[0]}") from None
        except (TypeError, ValueError) as e:
            if isinstance(e, DataError):
                raise
            raise DataError(f"Manifest record {data.get('id')}: {e}") from None


def write_manifest(path: Path, samples: List[Sample]):
    """JSON lines with sorted keys, one sample per line, in the given order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for sample in samples:
            f.write(json.dumps(sample.to_dict(), sort_keys=True, ensure_ascii=False) + "\n")


def load_manifest(path: Path) -> List[Sample]:
    """
    Read and validate a manifest.

    Raises:
        DataError: missing file, invalid JSON or an invalid sample
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"Manifest not found: {path}")
    try:
        lines = path.read_text(encoding="utf-8").split("\n")
    except UnicodeDecodeError:
        raise DataError(f"Manifest {path} is not valid UTF-8") from None
    samples = []
    for line_no, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as e:
            raise DataError(f"{path}:{line_no}: invalid JSON ({e.msg})") from None
        samples.append(Sample.from_dict(record))
    return samples
