"""
Volume data model, preprocessing and file storage.

Preprocessing follows the training recipe: min-max normalization, depth
replication for native 2D scans, then a single trilinear corner-aligned
resize to 512x512x4 (2D) or 256x256xD (3D) with D the nearest multiple
of 4 in [4, 64].

Volume file format: an ASCII header line
    IVLM-VOL v1 H W D C MODALITY NATIVE2D\\n
followed by H*W*D*C little-endian float64 voxels in row-major order.
"""

from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Tuple

import numpy as np
from PIL import Image

from tools.errors import DataError, ShapeError

VOLUME_MAGIC = "IVLM-VOL"
VOLUME_VERSION = "v1"


class Modality(Enum):
    """Imaging technology of a scan."""
    CT = "CT"
    MRI = "MRI"
    ULTRASOUND = "Ultrasound"
    PET = "PET"
    XRAY = "X-ray"
    ANGIOGRAPHY = "Angiography"
    OTHER = "Other"

    @classmethod
    def parse(cls, value: str) -> "Modality":
        for member in cls:
            if member.value.lower() == str(value).lower():
                return member
        raise DataError(f"Unknown modality: {value}")


RADIOLOGIC_MODALITIES = [m for m in Modality if m is not Modality.OTHER]


@dataclass
class Volume:
    """Dense H x W x D x C intensity array with its modality tag."""
    voxels: np.ndarray
    modality: Modality = Modality.OTHER
    is_native_2d: bool = False

    def __post_init__(self):
        self.voxels = np.asarray(self.voxels, dtype=np.float64)
        if self.voxels.ndim != 4 or min(self.voxels.shape) < 1:
            raise ShapeError(f"Volume needs four axes of length >= 1, got shape {self.voxels.shape}")

    @property
    def height(self) -> int:
        return self.voxels.shape[0]

    @property
    def width(self) -> int:
        return self.voxels.shape[1]

    @property
    def depth(self) -> int:
        return self.voxels.shape[2]

    @property
    def channels(self) -> int:
        return self.voxels.shape[3]

    @property
    def dims(self) -> Tuple[int, int, int, int]:
        return self.voxels.shape


@dataclass
class PreprocessConfig:
    """Target geometry of the preprocessing pipeline."""
    size_2d: int = 512
    size_3d: int = 256
    patch_depth: int = 4
    max_depth: int = 64


def min_max_normalize(volume: Volume) -> Volume:
    """Map voxels linearly onto [0, 1]; constant volumes become all zeros."""
    lo = volume.voxels.min()
    hi = volume.voxels.max()
    if hi - lo == 0:
        voxels = np.zeros_like(volume.voxels)
    else:
        voxels = (volume.voxels - lo) / (hi - lo)
    return replace(volume, voxels=voxels)


def expand_2d(volume: Volume, depth: int = 4) -> Volume:
    """Replicate a single-slice volume along depth."""
    if volume.depth != 1:
        raise ShapeError(f"expand_2d needs depth 1, got depth {volume.depth} (already 3D)")
    voxels = np.repeat(volume.voxels, depth, axis=2)
    return replace(volume, voxels=voxels, is_native_2d=True)


def round_depth(d: int, multiple: int = 4, cap: int = 64) -> int:
    """
    Nearest multiple of `multiple` to d, ties rounded up, clamped to [multiple, cap].

    Raises:
        ShapeError: d < 1
    """
    if d < 1:
        raise ShapeError(f"Depth must be >= 1, got {d}")
    nearest = multiple * ((d + multiple // 2) // multiple)
    return int(min(max(nearest, multiple), cap))


def _resize_axis(array: np.ndarray, axis: int, size: int) -> np.ndarray:
    n = array.shape[axis]
    if n == size:
        return array
    if n == 1:
        return np.repeat(array, size, axis=axis)
    positions = np.linspace(0.0, n - 1, size) if size > 1 else np.zeros(1)
    lo = np.minimum(np.floor(positions).astype(np.int64), n - 2)
    frac = positions - lo
    shape = [1] * array.ndim
    shape[axis] = size
    frac = frac.reshape(shape)
    below = np.take(array, lo, axis=axis)
    above = np.take(array, lo + 1, axis=axis)
    return below * (1.0 - frac) + above * frac


def resize(volume: Volume, target_h: int, target_w: int, target_d: int) -> Volume:
    """Trilinear, corner-aligned resize of the three spatial axes."""
    if min(target_h, target_w, target_d) < 1:
        raise ShapeError(f"Resize targets must be >= 1, got {(target_h, target_w, target_d)}")
    voxels = volume.voxels
    for axis, size in enumerate((target_h, target_w, target_d)):
        voxels = _resize_axis(voxels, axis, size)
    if voxels is volume.voxels:
        voxels = voxels.copy()
    return replace(volume, voxels=voxels)


def preprocess(volume: Volume, config: PreprocessConfig = None) -> Volume:
    """
    Full preprocessing pipeline.

    Native 2D scans are expanded to the patch depth and resized to
    size_2d x size_2d; 3D scans are resized to size_3d x size_3d x
    round_depth(depth). The range is re-anchored to [0, 1] after resizing,
    which makes the pipeline idempotent.
    """
    config = config or PreprocessConfig()
    v = min_max_normalize(volume)
    if v.is_native_2d:
        if v.depth == 1:
            v = expand_2d(v, config.patch_depth)
        v = resize(v, config.size_2d, config.size_2d, config.patch_depth)
    else:
        depth = round_depth(v.depth, config.patch_depth, config.max_depth)
        v = resize(v, config.size_3d, config.size_3d, depth)
    return min_max_normalize(v)


# ---------------------------------------------------------------------------
# Storage


def save_volume(volume: Volume, path: Path):
    """Write a volume in the IVLM-VOL v1 format."""
    h, w, d, c = volume.dims
    header = (
        f"{VOLUME_MAGIC} {VOLUME_VERSION} {h} {w} {d} {c} "
        f"{volume.modality.value} {1 if volume.is_native_2d else 0}\n"
    )
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        f.write(np.ascontiguousarray(volume.voxels, dtype="<f8").tobytes(order="C"))


@dataclass
class VolumeHeader:
    dims: Tuple[int, int, int, int]
    modality: Modality
    is_native_2d: bool


def _parse_header(line: bytes, path: Path) -> VolumeHeader:
    fields = line.decode("ascii", errors="replace").split(" ")
    if len(fields) != 8 or fields[0] != VOLUME_MAGIC or fields[1] != VOLUME_VERSION:
        raise DataError(f"Volume file {path} has an invalid header")
    try:
        dims = tuple(int(x) for x in fields[2:6])
    except ValueError:
        raise DataError(f"Volume file {path} has non-integer dimensions") from None
    return VolumeHeader(dims=dims, modality=Modality.parse(fields[6]), is_native_2d=fields[7] == "1")


def read_volume_header(path: Path) -> VolumeHeader:
    """Header of a volume file without reading the voxel payload."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"Volume file not found: {path}")
    with open(path, "rb") as f:
        line = f.readline()
    if not line.endswith(b"\n"):
        raise DataError(f"Volume file {path} has no header line")
    return _parse_header(line[:-1], path)


def load_volume(path: Path) -> Volume:
    """
    Read an IVLM-VOL v1 file.

    Raises:
        DataError: missing file, bad header or truncated payload
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"Volume file not found: {path}")
    blob = path.read_bytes()
    newline = blob.find(b"\n")
    if newline < 0:
        raise DataError(f"Volume file {path} has no header line")
    header = _parse_header(blob[:newline], path)
    h, w, d, c = header.dims
    payload = blob[newline + 1:]
    if len(payload) != 8 * h * w * d * c:
        raise DataError(f"Volume file {path} payload does not match {h}x{w}x{d}x{c}")
    voxels = np.frombuffer(payload, dtype="<f8").reshape(h, w, d, c).astype(np.float64)
    return Volume(voxels=voxels, modality=header.modality, is_native_2d=header.is_native_2d)


def save_preview(volume: Volume, path: Path):
    """Save the middle depth slice (first channel) as an 8-bit grayscale PNG."""
    plane = volume.voxels[:, :, volume.depth // 2, 0]
    lo, hi = plane.min(), plane.max()
    scaled = np.zeros_like(plane) if hi == lo else (plane - lo) / (hi - lo)
    image = Image.fromarray((scaled * 255.0).round().astype(np.uint8))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    image.save(path)
