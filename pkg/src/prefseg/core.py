"""Shared domain types: masks, feature maps, image records, dataset manifests.

All values are immutable after construction (arrays are frozen via the
writeable flag) and safe to share across threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .tensor_io import FormatError, read_image, read_mask, read_tensor

UNIT_NORM_TOL = 1e-5

FOREGROUND = 1
BACKGROUND = 0


class ValidationError(ValueError):
    """A domain invariant was violated (dimensions, norms, manifest schema)."""


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr).copy()
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Mask:
    """Binary segmentation over the pixel grid; bits is HxW uint8 of {0,1}."""

    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=np.uint8)
        if bits.ndim != 2:
            raise ValidationError(f"mask must be 2-D, got shape {bits.shape}")
        if not np.isin(bits, (0, 1)).all():
            raise ValidationError("mask values must be 0 or 1")
        object.__setattr__(self, "bits", _freeze(bits))

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @classmethod
    def zeros(cls, height: int, width: int) -> "Mask":
        return cls(np.zeros((height, width), dtype=np.uint8))

    @classmethod
    def ones(cls, height: int, width: int) -> "Mask":
        return cls(np.ones((height, width), dtype=np.uint8))

    def same_grid(self, other: "Mask") -> bool:
        return self.bits.shape == other.bits.shape


@dataclass(frozen=True)
class FeatureMap:
    """Grid of unit-norm patch feature vectors, shape (grid_h, grid_w, dim)."""

    vectors: np.ndarray

    def __post_init__(self):
        vec = np.asarray(self.vectors, dtype=np.float32)
        if vec.ndim != 3:
            raise ValidationError(f"feature map must be 3-D, got shape {vec.shape}")
        if not np.isfinite(vec).all():
            raise ValidationError("feature map contains non-finite values")
        norms = np.linalg.norm(vec.astype(np.float64), axis=-1)
        off = np.abs(norms - 1.0)
        if off.max(initial=0.0) > UNIT_NORM_TOL:
            gr, gc = np.unravel_index(int(np.argmax(off)), norms.shape)
            raise ValidationError(
                f"patch ({gr},{gc}) has norm {norms[gr, gc]:.6f}, expected 1 within {UNIT_NORM_TOL}"
            )
        object.__setattr__(self, "vectors", _freeze(vec))

    @property
    def grid_h(self) -> int:
        return self.vectors.shape[0]

    @property
    def grid_w(self) -> int:
        return self.vectors.shape[1]

    @property
    def dim(self) -> int:
        return self.vectors.shape[2]


@dataclass(frozen=True)
class ImageRecord:
    """One dataset entry: image tensor, optional ground truth, feature locator."""

    id: str
    image: np.ndarray  # CxHxW float32 in [0,1]
    feature_path: Path
    gt_mask: Optional[Mask] = None

    def __post_init__(self):
        img = np.asarray(self.image, dtype=np.float32)
        if img.ndim != 3 or img.shape[0] not in (1, 3):
            raise ValidationError(f"{self.id}: image must be CxHxW with C in {{1,3}}, got {img.shape}")
        if not np.isfinite(img).all() or img.min() < 0.0 or img.max() > 1.0:
            raise ValidationError(f"{self.id}: image values must lie in [0,1]")
        if self.gt_mask is not None and self.gt_mask.bits.shape != img.shape[1:]:
            raise ValidationError(
                f"{self.id}: gt mask grid {self.gt_mask.bits.shape} != image grid {img.shape[1:]}"
            )
        object.__setattr__(self, "image", _freeze(img))

    @property
    def height(self) -> int:
        return self.image.shape[1]

    @property
    def width(self) -> int:
        return self.image.shape[2]

    @property
    def channels(self) -> int:
        return self.image.shape[0]


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    patch_size: int
    records: tuple[ImageRecord, ...]
    root: Path = field(default_factory=Path)

    def grid_shape(self, record: ImageRecord) -> tuple[int, int]:
        return record.height // self.patch_size, record.width // self.patch_size


def pixel_to_patch(row: int, col: int, patch_size: int,
                   height: int | None = None, width: int | None = None) -> tuple[int, int]:
    """Map a pixel coordinate to its patch-grid index.

    >>> pixel_to_patch(15, 7, 8)
    (1, 0)
    """
    if patch_size < 1:
        raise ValidationError(f"patch_size must be >= 1, got {patch_size}")
    if row < 0 or col < 0:
        raise ValidationError(f"pixel ({row},{col}) out of bounds")
    if height is not None and row >= height:
        raise ValidationError(f"row {row} outside image height {height}")
    if width is not None and col >= width:
        raise ValidationError(f"col {col} outside image width {width}")
    return row // patch_size, col // patch_size


def patch_center_pixel(gr: int, gc: int, patch_size: int) -> tuple[int, int]:
    """Center pixel of a patch; inverse-ish of pixel_to_patch."""
    return gr * patch_size + patch_size // 2, gc * patch_size + patch_size // 2


def patch_majority_labels(mask: Mask, patch_size: int) -> np.ndarray:
    """Per-patch majority pixel label; exact ties count as background.

    Returns a (grid_h, grid_w) uint8 array. Used consistently wherever a
    pixel mask is reduced to patch granularity (learner targets, triplet
    mining, the agent's mask channel).
    """
    h, w = mask.bits.shape
    if h % patch_size or w % patch_size:
        raise ValidationError(f"grid {h}x{w} not divisible by patch_size {patch_size}")
    gh, gw = h // patch_size, w // patch_size
    blocks = mask.bits.reshape(gh, patch_size, gw, patch_size)
    counts = blocks.sum(axis=(1, 3), dtype=np.int64)
    return (2 * counts > patch_size * patch_size).astype(np.uint8)


def expand_patches(patch_labels: np.ndarray, patch_size: int) -> Mask:
    """Blockwise-constant expansion of a patch-grid label array to pixels."""
    pix = np.repeat(np.repeat(patch_labels, patch_size, axis=0), patch_size, axis=1)
    return Mask(pix.astype(np.uint8))


def load_feature_map(path: str | Path) -> FeatureMap:
    """Read a PFT1 feature file; rejects wrong rank or non-unit-norm vectors."""
    arr = read_tensor(path)
    if arr.ndim != 3:
        raise ValidationError(f"{path}: feature tensor must be 3-D (grid_h, grid_w, dim), got {arr.shape}")
    if arr.dtype != np.float32:
        raise ValidationError(f"{path}: feature tensors must be float32 on disk")
    return FeatureMap(arr)


def load_manifest(path: str | Path) -> DatasetManifest:
    """Parse and fully validate a dataset manifest.

    Every referenced file must exist and dimension-check against the others;
    feature vectors off unit norm are rejected (never silently renormalized).
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"manifest not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ValidationError(f"{path}: not valid JSON: {e}") from e
    for key in ("name", "patch_size", "records"):
        if key not in doc:
            raise ValidationError(f"{path}: manifest missing key {key!r}")
    patch_size = doc["patch_size"]
    if not isinstance(patch_size, int) or patch_size < 1:
        raise ValidationError(f"{path}: patch_size must be a positive integer")
    root = path.parent
    records = []
    seen: set[str] = set()
    for entry in doc["records"]:
        for key in ("id", "image", "features"):
            if key not in entry:
                raise ValidationError(f"{path}: record missing key {key!r}: {entry}")
        rid = entry["id"]
        if rid in seen:
            raise ValidationError(f"record id {rid!r} is not unique")
        seen.add(rid)
        try:
            image = read_image(root / entry["image"])
        except (FormatError, FileNotFoundError) as e:
            raise type(e)(f"record {rid!r}: {e}") from e
        _, h, w = image.shape
        if h % patch_size or w % patch_size:
            raise ValidationError(f"record {rid!r}: image {h}x{w} not divisible by patch_size {patch_size}")
        gt = None
        if entry.get("gt_mask"):
            try:
                gt_bits = read_mask(root / entry["gt_mask"])
            except (FormatError, FileNotFoundError) as e:
                raise type(e)(f"record {rid!r}: {e}") from e
            if gt_bits.shape != (h, w):
                raise ValidationError(
                    f"record {rid!r}: gt mask is {gt_bits.shape[0]}x{gt_bits.shape[1]}, image is {h}x{w}"
                )
            gt = Mask(gt_bits)
        feature_path = root / entry["features"]
        try:
            fmap = load_feature_map(feature_path)
        except (FormatError, FileNotFoundError, ValidationError) as e:
            raise type(e)(f"record {rid!r}: {e}") from e
        if (fmap.grid_h, fmap.grid_w) != (h // patch_size, w // patch_size):
            raise ValidationError(
                f"record {rid!r}: feature grid {fmap.grid_h}x{fmap.grid_w} != "
                f"{h // patch_size}x{w // patch_size} implied by image and patch_size"
            )
        records.append(ImageRecord(id=rid, image=image, feature_path=feature_path, gt_mask=gt))
    return DatasetManifest(name=doc["name"], patch_size=patch_size, records=tuple(records), root=root)
