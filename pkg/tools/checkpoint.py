"""
Checkpoint storage.

A checkpoint is a directory:

    params.ivlm     parameter tensors in the IVLM1 binary format
    vocab.txt       one token per line (ids past the reserved range)
    config.json     model configuration
    manifest.json   content hash, parameter and frozen names, stage history

IVLM1 layout (all integers little-endian):
    b"IVLM1", version u32, then per tensor:
    name length u32, UTF-8 name, rank u32, dims u64 * rank, f64 payload.
"""

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from tools.errors import DataError
from tools.params import ModelParams

MAGIC = b"IVLM1"
FORMAT_VERSION = 1

PARAMS_FILE = "params.ivlm"
VOCAB_FILE = "vocab.txt"
CONFIG_FILE = "config.json"
MANIFEST_FILE = "manifest.json"


def write_params(path: Path, arrays: Dict[str, np.ndarray]):
    """Serialize named arrays in IVLM1 format, in the mapping's order."""
    path = Path(path)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", FORMAT_VERSION))
        for name, array in arrays.items():
            encoded = name.encode("utf-8")
            array = np.ascontiguousarray(array, dtype="<f8")
            f.write(struct.pack("<I", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<I", array.ndim))
            for dim in array.shape:
                f.write(struct.pack("<Q", dim))
            f.write(array.tobytes(order="C"))


def read_params(path: Path) -> Dict[str, np.ndarray]:
    """Read an IVLM1 file into an ordered name -> array mapping."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"Parameter file not found: {path}")
    blob = path.read_bytes()
    if blob[:len(MAGIC)] != MAGIC:
        raise DataError(f"{path} is not an IVLM1 parameter file")
    offset = len(MAGIC)

    def take(n: int) -> bytes:
        nonlocal offset
        if offset + n > len(blob):
            raise DataError(f"Truncated parameter file: {path}")
        chunk = blob[offset:offset + n]
        offset += n
        return chunk

    (version,) = struct.unpack("<I", take(4))
    if version != FORMAT_VERSION:
        raise DataError(f"Unsupported IVLM1 version {version} in {path}")

    arrays: Dict[str, np.ndarray] = {}
    while offset < len(blob):
        (name_len,) = struct.unpack("<I", take(4))
        name = take(name_len).decode("utf-8")
        (rank,) = struct.unpack("<I", take(4))
        dims = tuple(struct.unpack("<Q", take(8))[0] for _ in range(rank))
        count = int(np.prod(dims)) if dims else 1
        payload = np.frombuffer(take(8 * count), dtype="<f8")
        arrays[name] = payload.reshape(dims).astype(np.float64)
    return arrays


def _file_hash(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]


@dataclass
class CheckpointBundle:
    """Everything needed to rebuild a trained model."""
    arrays: Dict[str, np.ndarray]
    config: Dict
    vocab_tokens: List[str]
    manifest: Dict = field(default_factory=dict)


def save_checkpoint(directory: Path,
                    params: ModelParams,
                    config: Dict,
                    vocab_tokens: List[str],
                    stages: Optional[List[Dict]] = None) -> Dict:
    """
    Write a checkpoint directory.

    Args:
        directory: Target directory (created if needed)
        params: Parameters to store
        config: JSON-serializable model configuration
        vocab_tokens: Corpus tokens in id order past the reserved range
        stages: Training stage history recorded in the manifest

    Returns:
        The manifest dictionary
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    params_path = directory / PARAMS_FILE
    write_params(params_path, {name: t.data for name, t in params.named()})

    with open(directory / VOCAB_FILE, "w", encoding="utf-8") as f:
        for token in vocab_tokens:
            f.write(token + "\n")

    with open(directory / CONFIG_FILE, "w", encoding="utf-8") as f:
        json.dump(config, f, indent=2, sort_keys=True)

    manifest = {
        "format": MAGIC.decode("ascii"),
        "version": FORMAT_VERSION,
        "content_hash": _file_hash(params_path),
        "parameters": [name for name, _ in params.named()],
        "parameter_count": params.count(),
        "frozen": params.frozen_names(),
        "stages": stages or [],
    }
    with open(directory / MANIFEST_FILE, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
    return manifest


def load_checkpoint(directory: Path, verify: bool = True) -> CheckpointBundle:
    """
    Load a checkpoint directory written by `save_checkpoint`.

    Raises:
        DataError: missing files or content hash mismatch
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"Checkpoint directory not found: {directory}")
    for required in (PARAMS_FILE, VOCAB_FILE, CONFIG_FILE, MANIFEST_FILE):
        if not (directory / required).exists():
            raise DataError(f"Checkpoint {directory} is missing {required}")

    try:
        with open(directory / MANIFEST_FILE, "r", encoding="utf-8") as f:
            manifest = json.load(f)
        with open(directory / CONFIG_FILE, "r", encoding="utf-8") as f:
            config = json.load(f)
        with open(directory / VOCAB_FILE, "r", encoding="utf-8") as f:
            vocab_tokens = [line.rstrip("\n") for line in f if line.rstrip("\n")]
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise DataError(f"Checkpoint {directory} has an unreadable metadata file ({type(e).__name__})") from None
    if verify and manifest.get("content_hash") != _file_hash(directory / PARAMS_FILE):
        raise DataError(f"Checkpoint {directory} failed its content hash check")

    return CheckpointBundle(
        arrays=read_params(directory / PARAMS_FILE),
        config=config,
        vocab_tokens=vocab_tokens,
        manifest=manifest,
    )
