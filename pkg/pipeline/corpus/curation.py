"""
Corpus Curation - rule-driven filtering

Rules come from a JSON list of {name, pattern, action}:

    drop_modality    drop samples with a volume whose modality fully
                     matches `pattern` (case-insensitive)
    remove_sentence  remove every sentence matching `pattern`; image
                     placeholders inside a removed sentence are kept

A sample whose instruction or response becomes empty is dropped and
counted under "emptied". Curation is idempotent.
"""

import json
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from tools.errors import ConfigError, DataError
from tools.text_utils import PLACEHOLDER_PATTERN
from tools.volume_io import read_volume_header

from pipeline.corpus.sample import Sample, join_instruction

DROP_MODALITY = "drop_modality"
REMOVE_SENTENCE = "remove_sentence"
ACTIONS = (DROP_MODALITY, REMOVE_SENTENCE)
EMPTIED = "emptied"

SENTENCE_SPLIT = re.compile(r"(?<=[.!?])\s+")


@dataclass
class CurationRule:
    name: str
    pattern: str
    action: str
    regex: re.Pattern = field(init=False, repr=False)

    def __post_init__(self):
        if self.action not in ACTIONS:
            raise ConfigError(f"Rule {self.name}: unknown action '{self.action}' (expected one of {ACTIONS})")
        try:
            flags = re.IGNORECASE if self.action == DROP_MODALITY else 0
            self.regex = re.compile(self.pattern, flags)
        except re.error as e:
            raise ConfigError(f"Rule {self.name}: invalid pattern ({e})") from None


@dataclass
class DropReport:
    """Per-rule counts: dropped samples for drop rules, removed sentences for removal rules."""
    input_count: int = 0
    output_count: int = 0
    counts: Dict[str, int] = field(default_factory=dict)
    dropped_ids: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict:
        return {
            "input_count": self.input_count,
            "output_count": self.output_count,
            "counts": dict(self.counts),
            "dropped_ids": list(self.dropped_ids),
        }


def load_rules(path: Path) -> List[CurationRule]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"Rule file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
    except json.JSONDecodeError as e:
        raise DataError(f"Rule file {path} is not valid JSON ({e.msg})") from None
    except UnicodeDecodeError:
        raise DataError(f"Rule file {path} is not valid UTF-8") from None
    if not isinstance(raw, list):
        raise ConfigError(f"Rule file {path} must hold a JSON list")
    rules = []
    for entry in raw:
        if not isinstance(entry, dict):
            raise ConfigError(f"Rule entries must be JSON objects, got {type(entry).__name__}")
        unknown = set(entry) - {"name", "pattern", "action"}
        if unknown:
            raise ConfigError(f"Rule entry has unknown keys: {sorted(unknown)}")
        try:
            rules.append(CurationRule(name=entry["name"], pattern=entry["pattern"], action=entry["action"]))
        except KeyError as e:
            raise ConfigError(f"Rule entry lacks '{e.args[0]}'") from None
    return rules


def split_sentences(text: str) -> List[str]:
    return [s for s in SENTENCE_SPLIT.split(text.strip()) if s]


def remove_sentences(text: str, rules: List[CurationRule], counts: Dict[str, int]) -> str:
    """
    Drop matching sentences, keeping their placeholders in place.

    Text with no matching sentence is returned unchanged.
    """
    kept = []
    changed = False
    for sentence in split_sentences(text):
        hit = next((r for r in rules if r.regex.search(sentence)), None)
        if hit is None:
            kept.append(sentence)
            continue
        changed = True
        counts[hit.name] = counts.get(hit.name, 0) + 1
        placeholders = PLACEHOLDER_PATTERN.findall(sentence)
        if placeholders:
            kept.append(" ".join(f"<image-{i}>" for i in placeholders))
    return " ".join(kept) if changed else text


def sample_modalities(sample: Sample, volume_root: Optional[Path] = None) -> List[str]:
    """Modalities of a sample's volumes, from file headers when a root is given."""
    if volume_root is not None:
        return [read_volume_header(Path(volume_root) / p).modality.value for p in sample.volume_paths]
    if "modalities" in sample.labels:
        return list(sample.labels["modalities"])
    if "modality" in sample.labels:
        return [sample.labels["modality"]]
    return []


def _has_words(text: str) -> bool:
    return bool(PLACEHOLDER_PATTERN.sub("", text).strip())


def curate_sample(sample: Sample, rules: List[CurationRule], counts: Dict[str, int],
                  volume_root: Optional[Path] = None) -> Optional[Sample]:
    """Curated copy of one sample, or None when it is dropped."""
    modalities = sample_modalities(sample, volume_root)
    for rule in rules:
        if rule.action == DROP_MODALITY and any(rule.regex.fullmatch(m) for m in modalities):
            counts[rule.name] = counts.get(rule.name, 0) + 1
            return None

    removal = [r for r in rules if r.action == REMOVE_SENTENCE]
    if sample.is_instruction:
        instruction = remove_sentences(sample.instruction, removal, counts)
        response = remove_sentences(sample.response, removal, counts)
        if not _has_words(instruction) or not _has_words(response):
            counts[EMPTIED] = counts.get(EMPTIED, 0) + 1
            return None
        if instruction == sample.instruction and response == sample.response:
            return sample
        return replace(sample, instruction=instruction, response=response,
                       text=join_instruction(instruction, response))

    text = remove_sentences(sample.text, removal, counts)
    if not _has_words(text):
        counts[EMPTIED] = counts.get(EMPTIED, 0) + 1
        return None
    return sample if text == sample.text else replace(sample, text=text)


def curate(pool: List[Sample], rules: List[CurationRule],
           volume_root: Optional[Path] = None) -> Tuple[List[Sample], DropReport]:
    """
    Apply curation rules to a sample pool.

    Args:
        pool: Samples in manifest order
        rules: Rules in file order; the first matching removal rule is credited
        volume_root: Directory volume paths are relative to; when given,
            modalities are read from the volume headers instead of the labels

    Returns:
        (kept samples in input order, drop report)
    """
    report = DropReport(input_count=len(pool), counts={r.name: 0 for r in rules})
    report.counts[EMPTIED] = 0
    kept = []
    for sample in pool:
        curated = curate_sample(sample, rules, report.counts, volume_root)
        if curated is None:
            report.dropped_ids.append(sample.id)
        else:
            kept.append(curated)
    report.output_count = len(kept)
    return kept, report
