"""
Evaluation records, closed-list scoring and bootstrap confidence intervals.
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from tools.errors import DataError
from tools.text_metrics import resolve_closed

from pipeline.corpus.sample import Task

YES_NO = ["yes", "no"]
CLOSED_TASKS = (Task.MODALITY_RECOGNITION, Task.DISEASE_DIAGNOSIS)


@dataclass
class EvalRecord:
    """One prediction with its reference; closed-list tasks carry the resolved label."""
    sample_id: str
    task: Task
    prediction: str
    reference: str
    closed_list: Optional[List[str]] = None
    resolved_label: Optional[str] = None
    scores: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if (self.closed_list is not None) != (self.task in CLOSED_TASKS):
            raise DataError(f"Record {self.sample_id}: closed list must be set exactly for closed tasks")

    def resolve(self) -> str:
        self.resolved_label = resolve_closed(self.prediction, self.closed_list)
        return self.resolved_label

    @property
    def correct(self) -> bool:
        return (self.resolved_label or "").lower() == self.reference.lower()

    def to_dict(self) -> Dict:
        return {
            "sample_id": self.sample_id,
            "task": self.task.value,
            "prediction": self.prediction,
            "reference": self.reference,
            "closed_list": self.closed_list,
            "resolved_label": self.resolved_label,
            "scores": self.scores,
        }


@dataclass
class MetricValue:
    value: float
    ci_low: float
    ci_high: float

    def to_dict(self) -> Dict:
        return {"value": self.value, "ci_low": self.ci_low, "ci_high": self.ci_high}


@dataclass
class MetricReport:
    task: Task
    n: int
    metrics: Dict[str, MetricValue] = field(default_factory=dict)

    def to_dict(self) -> Dict:
        return {"task": self.task.value, "n": self.n,
                "metrics": {name: m.to_dict() for name, m in self.metrics.items()}}


def _f1(tp: int, fp: int, fn: int) -> float:
    denominator = 2 * tp + fp + fn
    return 1.0 if denominator == 0 else 2 * tp / denominator


def accuracy_f1(records: Sequence[EvalRecord], classes: Optional[List[str]] = None) -> Tuple[float, float]:
    """
    Accuracy and F1 over resolved labels.

    With the yes/no list F1 is binary with "yes" positive; any other list
    gives the macro average of per-class F1. A class with no true or
    predicted members scores 1.0.

    Raises:
        DataError: no records
    """
    if not records:
        raise DataError("accuracy_f1 needs at least one record")
    classes = classes or records[0].closed_list
    predicted = [(r.resolved_label or "").lower() for r in records]
    actual = [r.reference.lower() for r in records]
    accuracy = sum(p == a for p, a in zip(predicted, actual)) / len(records)

    def class_f1(label: str) -> float:
        label = label.lower()
        tp = sum(p == label and a == label for p, a in zip(predicted, actual))
        fp = sum(p == label and a != label for p, a in zip(predicted, actual))
        fn = sum(p != label and a == label for p, a in zip(predicted, actual))
        return _f1(tp, fp, fn)

    if [c.lower() for c in classes] == YES_NO:
        return accuracy, class_f1("yes")
    return accuracy, float(np.mean([class_f1(c) for c in classes]))


def bootstrap_ci(records: Sequence[EvalRecord], statistic: Callable[[Sequence[EvalRecord]], float],
                 rng: np.random.Generator, resamples: int = 1000,
                 confidence: float = 0.95) -> MetricValue:
    """
    Percentile bootstrap interval around `statistic(records)`, clamped so
    it contains the point estimate.
    """
    value = float(statistic(records))
    n = len(records)
    draws = np.empty(resamples)
    for i in range(resamples):
        idx = rng.integers(0, n, size=n)
        draws[i] = statistic([records[j] for j in idx])
    tail = (1.0 - confidence) / 2.0 * 100.0
    low, high = np.percentile(draws, [tail, 100.0 - tail])
    return MetricValue(value=value, ci_low=float(min(low, value)), ci_high=float(max(high, value)))


def mean_score(name: str) -> Callable[[Sequence[EvalRecord]], float]:
    return lambda records: float(np.mean([r.scores[name] for r in records]))
