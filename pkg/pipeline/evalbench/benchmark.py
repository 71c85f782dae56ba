"""
Benchmark Runner - per-task metrics with bootstrap intervals

Task/metric assignment:
    modality recognition  ACC, F1 (macro over the six modalities)
    disease diagnosis     ACC, F1 (binary, "yes" positive)
    vqa, report, rationale  BLEU-1, ROUGE-1, UMLS-P, UMLS-R

Modality recognition is scored on open-form prompts and diagnosis on
judgment prompts. Predictions may be produced by several threads; all
aggregation runs over records sorted by sample id, so reports do not
depend on the thread count.
"""

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Protocol, Sequence

import numpy as np
import pandas as pd

from tools.errors import DataError
from tools.lexicon import Lexicon
from tools.text_metrics import bleu1, rouge1, umls_precision_recall
from tools.threads import worker_threads
from tools.volume_io import RADIOLOGIC_MODALITIES, PreprocessConfig, preprocess

from pipeline.corpus.sample import PromptForm, Sample, Task
from pipeline.evalbench.records import (
    YES_NO, EvalRecord, MetricReport, accuracy_f1, bootstrap_ci, mean_score,
)
from pipeline.model.multimodal import RadiologyVLM

MODALITY_CLASSES = [m.value for m in RADIOLOGIC_MODALITIES]
BENCHMARK_TASKS = (
    Task.MODALITY_RECOGNITION,
    Task.DISEASE_DIAGNOSIS,
    Task.VQA,
    Task.REPORT_GENERATION,
    Task.RATIONALE_DIAGNOSIS,
)
CLOSED_METRICS = ("ACC", "F1")
TEXT_METRICS = ("BLEU-1", "ROUGE-1", "UMLS-P", "UMLS-R")


@dataclass
class BenchmarkConfig:
    resamples: int = 1000
    confidence: float = 0.95
    threads: Optional[int] = None

    def worker_count(self) -> int:
        return worker_threads(self.threads)


class Predictor(Protocol):
    def predict(self, sample: Sample) -> str:
        ...


class ModelPredictor:
    """Greedy generation from a trained model on the sample's instruction."""

    def __init__(self, model: RadiologyVLM, root: Path, max_new: Optional[int] = None,
                 preprocess_config: Optional[PreprocessConfig] = None):
        self.model = model
        self.root = Path(root)
        self.preprocess_config = preprocess_config or model.preprocess
        self.max_new = max_new

    def predict(self, sample: Sample) -> str:
        volumes = [preprocess(v, self.preprocess_config) for v in sample.load_volumes(self.root)]
        return self.model.generate(sample.instruction, volumes, self.max_new)


class EchoPredictor:
    """Oracle that answers with the reference."""

    def predict(self, sample: Sample) -> str:
        return sample.response


class ConstantPredictor:
    def __init__(self, answer: str):
        self.answer = answer

    def predict(self, sample: Sample) -> str:
        return self.answer


@dataclass
class BenchmarkReport:
    reports: Dict[str, MetricReport] = field(default_factory=dict)
    warnings: List[str] = field(default_factory=list)
    records: List[EvalRecord] = field(default_factory=list)

    def to_dict(self) -> Dict:
        return {
            "tasks": {name: report.to_dict() for name, report in self.reports.items()},
            "warnings": list(self.warnings),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def table(self) -> pd.DataFrame:
        """One row per task, one column per metric, cells 'value (low, high)'."""
        rows = {}
        for name, report in self.reports.items():
            row = {"n": report.n}
            for metric, m in report.metrics.items():
                row[metric] = f"{m.value:.4f} ({m.ci_low:.4f}, {m.ci_high:.4f})"
            rows[name] = row
        columns = ["n"] + [m for m in CLOSED_METRICS + TEXT_METRICS
                           if any(m in r.metrics for r in self.reports.values())]
        return pd.DataFrame.from_dict(rows, orient="index", columns=columns).fillna("-")


def select_benchmark_samples(samples: Sequence[Sample]) -> Dict[Task, List[Sample]]:
    """Eligible instruction samples per task."""
    selected = {task: [] for task in BENCHMARK_TASKS}
    for sample in samples:
        if not sample.is_instruction or sample.task not in selected:
            continue
        if sample.task is Task.MODALITY_RECOGNITION and sample.form is PromptForm.JUDGMENT:
            continue
        if sample.task is Task.DISEASE_DIAGNOSIS and sample.form is not PromptForm.JUDGMENT:
            continue
        selected[sample.task].append(sample)
    return selected


def make_record(sample: Sample, prediction: str, lexicon: Lexicon) -> EvalRecord:
    """Score one prediction."""
    if sample.task is Task.MODALITY_RECOGNITION:
        record = EvalRecord(sample.id, sample.task, prediction, sample.response, list(MODALITY_CLASSES))
    elif sample.task is Task.DISEASE_DIAGNOSIS:
        record = EvalRecord(sample.id, sample.task, prediction, sample.response, list(YES_NO))
    else:
        record = EvalRecord(sample.id, sample.task, prediction, sample.response)
        precision, recall = umls_precision_recall(prediction, sample.response, lexicon)
        record.scores = {
            "BLEU-1": bleu1(prediction, sample.response),
            "ROUGE-1": rouge1(prediction, sample.response),
            "UMLS-P": precision,
            "UMLS-R": recall,
        }
        return record
    record.resolve()
    record.scores = {"correct": 1.0 if record.correct else 0.0}
    return record


def score_task(task: Task, records: List[EvalRecord], rng: np.random.Generator,
               config: BenchmarkConfig) -> MetricReport:
    report = MetricReport(task=task, n=len(records))
    if task in (Task.MODALITY_RECOGNITION, Task.DISEASE_DIAGNOSIS):
        report.metrics["ACC"] = bootstrap_ci(records, lambda rs: accuracy_f1(rs)[0], rng,
                                             config.resamples, config.confidence)
        report.metrics["F1"] = bootstrap_ci(records, lambda rs: accuracy_f1(rs)[1], rng,
                                            config.resamples, config.confidence)
    else:
        for name in TEXT_METRICS:
            report.metrics[name] = bootstrap_ci(records, mean_score(name), rng,
                                                config.resamples, config.confidence)
    return report


def run_benchmark(predictor: Predictor,
                  samples: Sequence[Sample],
                  lexicon: Lexicon,
                  seed: int,
                  config: Optional[BenchmarkConfig] = None,
                  verbose: bool = False) -> BenchmarkReport:
    """
    Predict, score and aggregate every benchmark task.

    Raises:
        DataError: the manifest holds no benchmark samples at all
    """
    config = config or BenchmarkConfig()
    selected = select_benchmark_samples(samples)
    if not any(selected.values()):
        raise DataError("Manifest contains no benchmark samples")

    result = BenchmarkReport()
    ordered = sorted((s for members in selected.values() for s in members), key=lambda s: s.id)
    with ThreadPoolExecutor(max_workers=config.worker_count()) as pool:
        predictions = list(pool.map(predictor.predict, ordered))
    by_id = {s.id: make_record(s, p, lexicon) for s, p in zip(ordered, predictions)}

    for task_index, task in enumerate(BENCHMARK_TASKS):
        members = selected[task]
        if not members:
            result.warnings.append(f"task {task.value} has no samples in the manifest; omitted")
            if verbose:
                print(f"⚠️  No {task.value} samples; task omitted")
            continue
        records = [by_id[s.id] for s in sorted(members, key=lambda s: s.id)]
        rng = np.random.default_rng([seed, task_index])
        result.reports[task.value] = score_task(task, records, rng, config)
        result.records.extend(records)
        if verbose:
            print(f"✓ {task.value}: {len(records)} records scored")
    return result


def write_records(records: List[EvalRecord], path: Path):
    """Audit dump: one JSON record per line with per-record scores."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for record in records:
            f.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")
