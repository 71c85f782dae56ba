"""
Synthetic Corpus Generator

Builds a desk-scale corpus whose volumes encode their own labels:

- the top quarter of every slice is a band whose intensity identifies
  the modality;
- the rest of the slice is a 4 x 4 cell grid below the band (3 rows x 4
  columns); disease k lights cell k at full intensity;
- the bottom-right cell is held at full intensity except for its corner
  voxel at 0.0; these anchors keep the levels fixed under min-max
  normalization and corner-aligned resizing.

`decode_labels` inverts the encoding and serves as the label oracle.
Every sample draws from its own generator seeded by (seed, index), so
output is identical regardless of worker count.
"""

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from tools.errors import ConfigError, DataError
from tools.threads import worker_threads
from tools.volume_io import Modality, Volume, min_max_normalize, save_preview, save_volume

from pipeline.corpus.prompts import (
    PromptForm, balance_judgments, pick_template, render_prompt,
)
from pipeline.corpus.sample import Sample, SampleKind, Task, write_manifest

BACKGROUND = 0.2
BRIGHT = 1.0
NOISE = 0.03
BAND_LEVELS = {m: 0.3 + 0.08 * i for i, m in enumerate(Modality)}
NATIVE_2D = {Modality.XRAY, Modality.ULTRASOUND, Modality.ANGIOGRAPHY, Modality.OTHER}
GRID = 4
MAX_DISEASES = GRID * (GRID - 1) - 1
SPLITS = ("pretrain", "finetune", "test")


@dataclass
class DiseaseSpec:
    name: str
    features: str


@dataclass
class VolumeSpec:
    size_2d: int = 64
    size_3d: int = 64
    depth_3d: int = 8


@dataclass
class SynthSpec:
    """Generator configuration, loaded from a JSON file."""
    count: int = 120
    tasks: List[str] = field(default_factory=lambda: [t.value for t in Task])
    diseases: List[DiseaseSpec] = field(default_factory=list)
    modalities: List[str] = field(default_factory=lambda: [m.value for m in Modality if m is not Modality.OTHER])
    volume: VolumeSpec = field(default_factory=VolumeSpec)
    disease_prob: float = 0.4
    open_fraction: float = 0.5
    multi_image_fraction: float = 0.25
    other_fraction: float = 0.0
    detail_sentence_fraction: float = 0.0
    balance_test_judgments: bool = True
    splits: Dict[str, float] = field(default_factory=lambda: {"pretrain": 0.5, "finetune": 0.25, "test": 0.25})

    def __post_init__(self):
        self.diseases = [d if isinstance(d, DiseaseSpec) else DiseaseSpec(**d) for d in self.diseases]
        if isinstance(self.volume, dict):
            self.volume = VolumeSpec(**self.volume)

    @property
    def task_list(self) -> List[Task]:
        return [Task(t) for t in self.tasks]

    @property
    def disease_names(self) -> List[str]:
        return [d.name for d in self.diseases]

    def validate(self) -> "SynthSpec":
        try:
            tasks = self.task_list
        except ValueError as e:
            raise ConfigError(f"Synth spec: {e}") from None
        if not tasks:
            raise ConfigError("Synth spec lists no tasks")
        if self.count < len(tasks):
            raise DataError(f"Synth count {self.count} is smaller than the {len(tasks)} tasks requested")
        if not 1 <= len(self.diseases) <= MAX_DISEASES:
            raise ConfigError(f"Synth spec needs 1..{MAX_DISEASES} diseases, got {len(self.diseases)}")
        for name in self.modalities:
            if Modality.parse(name) is Modality.OTHER:
                raise ConfigError("List radiologic modalities only; use other_fraction for Other")
        if set(self.splits) != set(SPLITS) or abs(sum(self.splits.values()) - 1.0) > 1e-9:
            raise ConfigError(f"Synth splits must be {SPLITS} fractions summing to 1")
        return self

    @classmethod
    def from_dict(cls, data: Dict) -> "SynthSpec":
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"Unknown synth spec keys: {unknown}")
        try:
            return cls(**data).validate()
        except TypeError as e:
            raise ConfigError(f"Synth spec: {e}") from None

    @classmethod
    def load(cls, path: Path) -> "SynthSpec":
        path = Path(path)
        if not path.exists():
            raise DataError(f"Synth spec not found: {path}")
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"Synth spec {path} is not valid JSON: {e.msg} (line {e.lineno})") from None
        except UnicodeDecodeError:
            raise DataError(f"Synth spec {path} is not valid UTF-8") from None
        return cls.from_dict(data)


# ---------------------------------------------------------------------------
# Label encoding


def _cell_bounds(size: int, index: int) -> Tuple[int, int]:
    edges = np.linspace(0, size, GRID + 1).round().astype(int)
    return int(edges[index]), int(edges[index + 1])


def disease_cell(k: int) -> Tuple[int, int]:
    """(grid row, grid column) of disease k; row 0 is the modality band."""
    return 1 + k // GRID, k % GRID


def encode_volume(modality: Modality, diseases: List[bool], height: int, width: int, depth: int,
                  rng: np.random.Generator) -> Volume:
    """Render labels into an H x W x D x 1 volume."""
    plane = BACKGROUND + rng.uniform(-NOISE, NOISE, size=(height, width))
    band_end = _cell_bounds(height, 0)[1]
    plane[:band_end, :] = BAND_LEVELS[modality] + rng.uniform(-NOISE, NOISE, size=(band_end, width))
    for k, present in enumerate(diseases):
        if present:
            row, col = disease_cell(k)
            r0, r1 = _cell_bounds(height, row)
            c0, c1 = _cell_bounds(width, col)
            plane[r0:r1, c0:c1] = BRIGHT
    r0, r1 = _cell_bounds(height, GRID - 1)
    c0, c1 = _cell_bounds(width, GRID - 1)
    plane[r0:r1, c0:c1] = BRIGHT
    plane[height - 1, width - 1] = 0.0
    voxels = np.repeat(plane[:, :, None, None], depth, axis=2)
    return Volume(voxels=voxels, modality=modality, is_native_2d=modality in NATIVE_2D)


def _cell_mean(plane: np.ndarray, row: int, col: int) -> float:
    r0, r1 = _cell_bounds(plane.shape[0], row)
    c0, c1 = _cell_bounds(plane.shape[1], col)
    # Skip a one-pixel rim so resize blur at the edges does not leak in.
    inner = plane[r0 + 1:max(r1 - 1, r0 + 2), c0 + 1:max(c1 - 1, c0 + 2)]
    return float(inner.mean())


def decode_labels(volume: Volume, disease_names: List[str]) -> Dict:
    """
    Recover (modality, diseases) from a volume written by encode_volume,
    raw or preprocessed.
    """
    normalized = min_max_normalize(volume).voxels
    plane = normalized[:, :, normalized.shape[2] // 2, 0]
    band_end = _cell_bounds(plane.shape[0], 0)[1]
    band = float(plane[1:max(band_end - 1, 2), :].mean())
    modality = min(BAND_LEVELS, key=lambda m: abs(BAND_LEVELS[m] - band))
    diseases = {}
    for k, name in enumerate(disease_names):
        diseases[name] = _cell_mean(plane, *disease_cell(k)) > 0.6
    return {"modality": modality.value, "diseases": diseases}


# ---------------------------------------------------------------------------
# Sample generation


@dataclass
class GeneratedSample:
    sample: Sample
    volumes: List[Volume]


def _volume_shape(spec: SynthSpec, modality: Modality) -> Tuple[int, int, int]:
    if modality in NATIVE_2D:
        return spec.volume.size_2d, spec.volume.size_2d, 1
    return spec.volume.size_3d, spec.volume.size_3d, spec.volume.depth_3d


def _draw_modalities(spec: SynthSpec, rng: np.random.Generator, two_images: bool) -> List[Modality]:
    pool = [Modality.parse(m) for m in spec.modalities]
    if rng.random() < spec.other_fraction:
        first = Modality.OTHER
    else:
        first = pool[int(rng.integers(len(pool)))]
    if not two_images:
        return [first]
    flat = [m for m in pool if m in NATIVE_2D] or pool
    deep = [m for m in pool if m not in NATIVE_2D] or pool
    return [flat[int(rng.integers(len(flat)))], deep[int(rng.integers(len(deep)))]]


def _detail_sentence(rng: np.random.Generator) -> str:
    if rng.random() < 0.5:
        return f"The patient is a {int(rng.integers(18, 90))}-year-old."
    return f"The lesion measures {int(rng.integers(2, 40))} mm."


def _interleaved_text(labels: Dict, rng: np.random.Generator, detail: bool) -> str:
    found = [name for name, present in labels["diseases"].items() if present]
    parts = []
    for i, modality in enumerate(labels["modalities"], 1):
        parts.append(f"The patient underwent {modality} imaging. <image-{i}>")
    parts.append("The scan shows " + (" and ".join(found) if found else "no abnormality") + ".")
    if detail:
        parts.insert(1, _detail_sentence(rng))
    return " ".join(parts)


def build_sample(spec: SynthSpec, index: int, seed: int) -> GeneratedSample:
    """Deterministic sample `index` of a corpus; depends only on (spec, seed, index)."""
    rng = np.random.default_rng([seed, index])
    tasks = spec.task_list
    task = tasks[index % len(tasks)]
    sample_id = f"s{index:05d}"

    two_images = task in (Task.REPORT_GENERATION, Task.RATIONALE_DIAGNOSIS, Task.FREE_INTERLEAVED) \
        and rng.random() < spec.multi_image_fraction
    modalities = _draw_modalities(spec, rng, two_images)
    present = [bool(rng.random() < spec.disease_prob) for _ in spec.diseases]
    if task is Task.RATIONALE_DIAGNOSIS and not any(present):
        present[int(rng.integers(len(present)))] = True

    volumes = [encode_volume(m, present, *_volume_shape(spec, m), rng) for m in modalities]
    volume_paths = [f"volumes/{sample_id}_{i}.vol" for i in range(1, len(volumes) + 1)]
    labels = {
        "modality": modalities[0].value,
        "modalities": [m.value for m in modalities],
        "diseases": dict(zip(spec.disease_names, present)),
        "n_images": len(volumes),
    }
    detail = bool(rng.random() < spec.detail_sentence_fraction)

    if task is Task.FREE_INTERLEAVED:
        text = _interleaved_text(labels, rng, detail)
        sample = Sample(id=sample_id, kind=SampleKind.INTERLEAVED, task=task, text=text,
                        volume_paths=volume_paths, labels=labels)
        return GeneratedSample(sample.validate(), volumes)

    if task in (Task.MODALITY_RECOGNITION, Task.DISEASE_DIAGNOSIS):
        form = PromptForm.OPEN if rng.random() < spec.open_fraction else PromptForm.JUDGMENT
    else:
        form = PromptForm.OPEN
    labels["form"] = form.value
    if task is Task.RATIONALE_DIAGNOSIS:
        features = {d.name: d.features for d in spec.diseases}
        labels["features"] = {name: features[name] for name, p in labels["diseases"].items() if p}

    template = pick_template(task, form, rng)
    instruction, response = render_prompt(template, labels, rng, balanced=True)
    if detail and task is Task.REPORT_GENERATION:
        response = f"{response} {_detail_sentence(rng)}"
    sample = Sample.instruction_sample(sample_id, task, instruction, response, volume_paths, labels)
    return GeneratedSample(sample.validate(), volumes)


def generate_samples(spec: SynthSpec, seed: int, threads: int = 1) -> List[GeneratedSample]:
    """All samples ordered by id; `threads` never changes the result."""
    spec.validate()
    if threads <= 1:
        return [build_sample(spec, i, seed) for i in range(spec.count)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda i: build_sample(spec, i, seed), range(spec.count)))


def split_samples(spec: SynthSpec, samples: List[Sample], seed: int) -> Dict[str, List[Sample]]:
    """
    Disjoint pretrain/finetune/test splits, stratified per task.

    Interleaved samples only feed pretraining. Within each instruction task
    the first share goes to pretrain, the next to finetune, the rest to
    test. Test judgments are balanced to 1:1 when configured.
    """
    splits = {name: [] for name in SPLITS}
    for task in spec.task_list:
        members = [s for s in samples if s.task is task]
        if task is Task.FREE_INTERLEAVED:
            splits["pretrain"].extend(members)
            continue
        n_pre = int(round(len(members) * spec.splits["pretrain"]))
        n_fine = int(round(len(members) * spec.splits["finetune"]))
        splits["pretrain"].extend(members[:n_pre])
        splits["finetune"].extend(members[n_pre:n_pre + n_fine])
        splits["test"].extend(members[n_pre + n_fine:])

    if spec.balance_test_judgments:
        rng = np.random.default_rng([seed, spec.count])
        judgments = [s for s in splits["test"]
                     if s.task is Task.DISEASE_DIAGNOSIS and s.form is PromptForm.JUDGMENT]
        answers = {s.response for s in judgments}
        if answers == {"yes", "no"}:
            keep = {s.id for s in balance_judgments(judgments, rng)}
            drop = {s.id for s in judgments} - keep
            splits["test"] = [s for s in splits["test"] if s.id not in drop]

    for name in SPLITS:
        splits[name].sort(key=lambda s: s.id)
    return splits


@dataclass
class SynthResult:
    manifests: Dict[str, Path]
    counts: Dict[str, int]


def synth_corpus(spec: SynthSpec, seed: int, out_dir: Path, previews: bool = False,
                 threads: Optional[int] = None) -> SynthResult:
    """
    Generate the corpus on disk: volumes/, optional previews/, and one
    manifest per split (pretrain.jsonl, finetune.jsonl, test.jsonl).
    """
    out_dir = Path(out_dir)
    threads = worker_threads(threads)
    generated = generate_samples(spec, seed, threads)

    for item in generated:
        for rel, volume in zip(item.sample.volume_paths, item.volumes):
            save_volume(volume, out_dir / rel)
            if previews:
                save_preview(volume, out_dir / "previews" / (Path(rel).stem + ".png"))

    splits = split_samples(spec, [g.sample for g in generated], seed)
    manifests = {}
    for name, members in splits.items():
        manifests[name] = out_dir / f"{name}.jsonl"
        write_manifest(manifests[name], members)
    return SynthResult(manifests=manifests, counts={name: len(m) for name, m in splits.items()})
