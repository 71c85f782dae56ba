"""
Prompt formulations for the instruction tasks.

Every task owns a small pool of phrasings per form; rendering picks one
uniformly. `{images}` is replaced by the sample's placeholders
("<image-1>" or "<image-1> <image-2>"); `{modality}` and `{disease}` are
filled from the labels or from the sampled judgment candidate.
"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from tools.errors import DataError
from tools.volume_io import RADIOLOGIC_MODALITIES

from pipeline.corpus.sample import PromptForm, Sample, Task

YES = "yes"
NO = "no"
NO_FINDING = "no abnormality"


@dataclass(frozen=True)
class PromptTemplate:
    task: Task
    form: PromptForm
    pattern: str

    def __post_init__(self):
        if not any(slot in self.pattern for slot in ("{images}", "{modality}", "{disease}")):
            raise DataError(f"Prompt pattern has no placeholder or slot: {self.pattern!r}")


def _pool(task: Task, form: PromptForm, *patterns: str) -> List[PromptTemplate]:
    return [PromptTemplate(task, form, p) for p in patterns]


PROMPT_POOLS: Dict[Tuple[Task, PromptForm], List[PromptTemplate]] = {
    (Task.MODALITY_RECOGNITION, PromptForm.OPEN): _pool(
        Task.MODALITY_RECOGNITION, PromptForm.OPEN,
        "{images} What modality is used to take this image?",
        "{images} Which imaging modality was used for this scan?",
        "{images} What type of scan is this?",
    ),
    (Task.MODALITY_RECOGNITION, PromptForm.JUDGMENT): _pool(
        Task.MODALITY_RECOGNITION, PromptForm.JUDGMENT,
        "{images} Is this image shot by {modality}?",
        "{images} Was this scan acquired with {modality}?",
    ),
    (Task.DISEASE_DIAGNOSIS, PromptForm.JUDGMENT): _pool(
        Task.DISEASE_DIAGNOSIS, PromptForm.JUDGMENT,
        "{images} Is {disease} shown in this image?",
        "{images} Does the patient have {disease}?",
        "{images} Is there evidence of {disease} in this scan?",
    ),
    (Task.DISEASE_DIAGNOSIS, PromptForm.OPEN): _pool(
        Task.DISEASE_DIAGNOSIS, PromptForm.OPEN,
        "{images} Please make diagnosis based on the images.",
        "{images} What is the diagnosis for this patient?",
    ),
    (Task.VQA, PromptForm.OPEN): _pool(
        Task.VQA, PromptForm.OPEN,
        "{images} What abnormality is seen in this {modality} scan?",
        "{images} What does this {modality} image show?",
    ),
    (Task.REPORT_GENERATION, PromptForm.OPEN): _pool(
        Task.REPORT_GENERATION, PromptForm.OPEN,
        "{images} What can you find from the scans?",
        "{images} Please write a radiology report for these images.",
    ),
    (Task.RATIONALE_DIAGNOSIS, PromptForm.OPEN): _pool(
        Task.RATIONALE_DIAGNOSIS, PromptForm.OPEN,
        "{images} What disease is shown? Please describe the characteristic radiologic features.",
        "{images} Name the disease and describe its characteristic radiologic features.",
    ),
}


def templates_for(task: Task, form: PromptForm) -> List[PromptTemplate]:
    try:
        return PROMPT_POOLS[(task, form)]
    except KeyError:
        raise DataError(f"No prompts for task {task.value} in {form.value} form") from None


def pick_template(task: Task, form: PromptForm, rng: np.random.Generator) -> PromptTemplate:
    pool = templates_for(task, form)
    return pool[int(rng.integers(len(pool)))]


def image_slots(n_images: int) -> str:
    return " ".join(f"<image-{i}>" for i in range(1, n_images + 1))


def _require(labels: Dict, key: str):
    if key not in labels or labels[key] in (None, "", [], {}):
        raise DataError(f"Prompt needs label '{key}'")
    return labels[key]


def positive_diseases(labels: Dict) -> List[str]:
    return [name for name, present in _require(labels, "diseases").items() if present]


def modality_name(labels: Dict) -> str:
    if "modality" in labels:
        return labels["modality"]
    return _require(labels, "modalities")[0]


def _findings_sentence(labels: Dict) -> str:
    found = positive_diseases(labels)
    if not found:
        return "no acute abnormality is seen."
    return "there is " + " and ".join(found) + "."


def _judgment(candidates: List[str], truth, rng: np.random.Generator,
              balanced: bool) -> Tuple[str, str]:
    """Draw a candidate; returns (candidate, yes/no)."""
    if balanced:
        positives = [c for c in candidates if truth(c)]
        negatives = [c for c in candidates if not truth(c)]
        want_yes = bool(rng.random() < 0.5)
        chosen = positives if (want_yes and positives) or not negatives else negatives
        candidate = chosen[int(rng.integers(len(chosen)))]
    else:
        candidate = candidates[int(rng.integers(len(candidates)))]
    return candidate, YES if truth(candidate) else NO


def render_prompt(template: PromptTemplate, labels: Dict, rng: np.random.Generator,
                  balanced: bool = False) -> Tuple[str, str]:
    """
    Fill a template from sample labels.

    Judgment forms sample a candidate uniformly (or, with `balanced`,
    draw the answer first with p = 0.5 and then a candidate of that
    class); the response is "yes" iff the candidate matches the ground
    truth. Open forms render the ground truth as the response.

    Args:
        template: Prompt template
        labels: Sample labels (modality, diseases, n_images, features)
        rng: Seeded generator
        balanced: Sample the judgment answer before the candidate

    Returns:
        (instruction, response)

    Raises:
        DataError: a label the template needs is missing
    """
    images = image_slots(int(labels.get("n_images", 1)))
    task, form = template.task, template.form

    if task is Task.MODALITY_RECOGNITION and form is PromptForm.JUDGMENT:
        truth_modality = modality_name(labels)
        candidates = labels.get("modality_candidates") or [m.value for m in RADIOLOGIC_MODALITIES]
        candidate, answer = _judgment(list(candidates), lambda c: c == truth_modality, rng, balanced)
        return template.pattern.format(images=images, modality=candidate), answer

    if task is Task.DISEASE_DIAGNOSIS and form is PromptForm.JUDGMENT:
        diseases = _require(labels, "diseases")
        candidate, answer = _judgment(list(diseases), lambda c: bool(diseases[c]), rng, balanced)
        return template.pattern.format(images=images, disease=candidate), answer

    needs_modality = "{modality}" in template.pattern or task in (
        Task.MODALITY_RECOGNITION, Task.REPORT_GENERATION)
    modality = modality_name(labels) if needs_modality else ""
    instruction = template.pattern.format(images=images, modality=modality)

    if task is Task.MODALITY_RECOGNITION:
        return instruction, modality
    if task is Task.DISEASE_DIAGNOSIS:
        return instruction, ", ".join(positive_diseases(labels)) or NO_FINDING
    if task is Task.VQA:
        found = " and ".join(positive_diseases(labels)) or "no abnormality"
        return instruction, f"the scan shows {found}."
    if task is Task.REPORT_GENERATION:
        return instruction, f"{modality} study. {_findings_sentence(labels)}"
    if task is Task.RATIONALE_DIAGNOSIS:
        found = positive_diseases(labels)
        if not found:
            raise DataError("Rationale prompts need at least one positive disease")
        features = _require(labels, "features")
        parts = []
        for name in found:
            if name not in features:
                raise DataError(f"Prompt needs label 'features' for {name}")
            parts.append(f"{name}: {features[name]}")
        return instruction, " ".join(parts)
    raise DataError(f"Task {task.value} has no instruction form")


def judgment_answer(sample: Sample) -> Optional[str]:
    """yes/no of a judgment-form sample, else None."""
    if sample.form is PromptForm.JUDGMENT and sample.response in (YES, NO):
        return sample.response
    return None


def balance_judgments(pool: List[Sample], rng: np.random.Generator) -> List[Sample]:
    """
    Down-sample the majority answer class to the minority size.

    Kept samples retain their original order.

    Raises:
        DataError: a sample is not a judgment, or one class is empty
    """
    yes_idx, no_idx = [], []
    for i, sample in enumerate(pool):
        answer = judgment_answer(sample)
        if answer is None:
            raise DataError(f"Sample {sample.id} is not a yes/no judgment")
        (yes_idx if answer == YES else no_idx).append(i)
    if not yes_idx or not no_idx:
        raise DataError(f"Cannot balance judgments: {len(yes_idx)} yes / {len(no_idx)} no")

    minority, majority = (yes_idx, no_idx) if len(yes_idx) <= len(no_idx) else (no_idx, yes_idx)
    chosen = rng.choice(len(majority), size=len(minority), replace=False)
    keep = set(minority) | {majority[int(i)] for i in chosen}
    return [sample for i, sample in enumerate(pool) if i in keep]
