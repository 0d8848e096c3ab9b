"""Deterministic synthetic dataset generator: blob images, ground-truth
masks, and patch features drawn from two class clusters.

Each image contains 1..k smooth star-shaped blobs (foreground). A patch's
feature vector interpolates the two class centers by its foreground pixel
fraction (boundary patches carry mixed content, like pooled backbone
features do), then picks up two Gaussian corruptions scaled by noise_sigma:
an isotropic per-patch term, and a per-image appearance shift along the
class-contrast axis shared by the whole image. The shift is what keeps a
single global readout from ever matching per-image interactive refinement.
Class centers satisfy cos(center_fg, center_bg) == 1 - fg_bg_separation, so
the [0, 2] range runs identical -> orthogonal -> antipodal. noise_sigma=0
reproduces exact cluster geometry. The whole output tree is a pure function
of the config (byte-identical reruns).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import DatasetManifest, Mask, ValidationError, load_manifest
from .tensor_io import write_mask, write_pgm, write_tensor

BLOB_RADIUS_RANGE = (0.34, 0.46)  # fraction of image_size
APPEARANCE_SHIFT_FACTOR = 4.0  # half-normal per-image shift std, in units of noise_sigma
MIX_SHARPNESS = 6.0  # boundary-patch feature polarization around the majority divide


@dataclass(frozen=True)
class SyntheticWorldConfig:
    image_size: int = 64
    patch_size: int = 8
    blob_count_range: tuple[int, int] = (1, 2)
    feature_dim: int = 8
    fg_bg_separation: float = 1.2  # 1 - cos(center_fg, center_bg), in [0, 2]
    noise_sigma: float = 0.15
    seed: int = 0

    def __post_init__(self):
        if self.image_size % self.patch_size:
            raise ValidationError(
                f"image_size {self.image_size} not divisible by patch_size {self.patch_size}"
            )
        lo, hi = self.blob_count_range
        if lo < 1 or hi < lo:
            raise ValidationError(f"bad blob_count_range {self.blob_count_range}")
        if not (0.0 <= self.fg_bg_separation <= 2.0):
            raise ValidationError("fg_bg_separation must be in [0, 2]")
        if self.noise_sigma < 0:
            raise ValidationError("noise_sigma must be non-negative")

    @classmethod
    def from_json(cls, path: str | Path) -> "SyntheticWorldConfig":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        doc["blob_count_range"] = tuple(doc["blob_count_range"])
        return cls(**doc)

    def to_json(self) -> str:
        doc = {
            "image_size": self.image_size,
            "patch_size": self.patch_size,
            "blob_count_range": list(self.blob_count_range),
            "feature_dim": self.feature_dim,
            "fg_bg_separation": self.fg_bg_separation,
            "noise_sigma": self.noise_sigma,
            "seed": self.seed,
        }
        return json.dumps(doc, indent=2) + "\n"


def class_centers(config: SyntheticWorldConfig, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Unit vectors with cos(c_fg, c_bg) == 1 - fg_bg_separation."""
    u1 = rng.standard_normal(config.feature_dim)
    u1 /= np.linalg.norm(u1)
    u2 = rng.standard_normal(config.feature_dim)
    u2 -= (u2 @ u1) * u1
    u2 /= np.linalg.norm(u2)
    cos = 1.0 - config.fg_bg_separation
    c_bg = cos * u1 + np.sqrt(max(0.0, 1.0 - cos * cos)) * u2
    return u1, c_bg


def _blob_field(size: int, rng: np.random.Generator, blob_count: int) -> np.ndarray:
    """Smooth [0,1] field whose 0.5 level set outlines the blobs."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    field = np.zeros((size, size))
    for _ in range(blob_count):
        cy, cx = rng.uniform(0.08 * size, 0.92 * size, size=2)
        radius = rng.uniform(BLOB_RADIUS_RANGE[0] * size, BLOB_RADIUS_RANGE[1] * size)
        amps = rng.uniform(0.0, 0.06, size=3)
        phases = rng.uniform(0.0, 2 * np.pi, size=3)
        dy, dx = yy - cy, xx - cx
        dist = np.hypot(dy, dx)
        theta = np.arctan2(dy, dx)
        wobble = 1.0 + sum(a * np.cos((m + 2) * theta + p)
                           for m, (a, p) in enumerate(zip(amps, phases)))
        u = dist / (radius * wobble)
        field = np.maximum(field, 1.0 / (1.0 + np.exp((u - 1.0) * 10.0)))
    return field


def _render_image(field: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Grayscale uint8 image: bright blobs over a low-frequency background."""
    size = field.shape[0]
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) / size
    texture = np.zeros_like(field)
    for _ in range(3):
        fy, fx = rng.uniform(1.0, 3.0, size=2)
        phase = rng.uniform(0, 2 * np.pi)
        texture += rng.uniform(0.01, 0.04) * np.cos(2 * np.pi * (fy * yy + fx * xx) + phase)
    img = np.clip(0.25 + 0.6 * field + texture, 0.0, 1.0)
    return np.rint(img * 255.0).astype(np.uint8)


def make_record_arrays(config: SyntheticWorldConfig, centers: tuple[np.ndarray, np.ndarray],
                       rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Arrays for one record: (image uint8 HxW, gt bits HxW, features f32 gh x gw x d)."""
    lo, hi = config.blob_count_range
    k = int(rng.integers(lo, hi + 1))
    field = _blob_field(config.image_size, rng, k)
    image = _render_image(field, rng)
    gt_bits = (field >= 0.5).astype(np.uint8)
    c_fg, c_bg = centers
    ps = config.patch_size
    gh = gw = config.image_size // ps
    # foreground fraction per patch drives the center interpolation; the
    # sharpening pushes patches toward their majority class so propagation
    # rarely claims across the majority divide
    mix = gt_bits.reshape(gh, ps, gw, ps).mean(axis=(1, 3))
    mix = 0.5 + 0.5 * np.tanh(MIX_SHARPNESS * (mix - 0.5))
    base = mix[..., None] * c_fg + (1.0 - mix[..., None]) * c_bg
    contrast = c_fg - c_bg
    if np.linalg.norm(contrast) > 0:
        shift_dir = contrast / np.linalg.norm(contrast)
    else:
        shift_dir = np.zeros_like(c_fg)
    # one-sided (half-normal) shift: images vary in how foreground-like they
    # read overall, mimicking systematic appearance bias across a dataset
    shift = abs(rng.standard_normal()) * APPEARANCE_SHIFT_FACTOR * config.noise_sigma
    noise = rng.standard_normal((gh, gw, config.feature_dim)) * config.noise_sigma
    vecs = base + shift * shift_dir + noise
    norms = np.linalg.norm(vecs, axis=-1, keepdims=True)
    # an exactly half-mixed patch of antipodal centers is degenerate; nudge it
    # to the background side, matching the majority-tie convention
    degenerate = norms[..., 0] < 1e-9
    if degenerate.any():
        vecs[degenerate] = c_bg
        norms = np.linalg.norm(vecs, axis=-1, keepdims=True)
    vecs /= norms
    return image, gt_bits, vecs.astype(np.float32)


def generate_world(config: SyntheticWorldConfig, n: int, out_dir: str | Path) -> DatasetManifest:
    """Write n records (image, gt mask, features) plus a manifest; returns the
    loaded, validated manifest."""
    if n < 1:
        raise ValidationError("n must be >= 1")
    out = Path(out_dir)
    try:
        for sub in ("images", "masks", "features"):
            (out / sub).mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OSError(f"cannot create output directory {out}: {e}") from e
    ss = np.random.SeedSequence(config.seed)
    center_ss, *record_ss = ss.spawn(n + 1)
    centers = class_centers(config, np.random.default_rng(center_ss))
    entries = []
    for i in range(n):
        rng = np.random.default_rng(record_ss[i])
        image, gt_bits, vecs = make_record_arrays(config, centers, rng)
        rid = f"img_{i:04d}"
        write_pgm(out / "images" / f"{rid}.pgm", image)
        write_mask(out / "masks" / f"{rid}.pgm", gt_bits)
        write_tensor(out / "features" / f"{rid}.pft", vecs)
        entries.append({
            "id": rid,
            "image": f"images/{rid}.pgm",
            "gt_mask": f"masks/{rid}.pgm",
            "features": f"features/{rid}.pft",
        })
    manifest = {"name": f"synthetic-{config.seed}", "patch_size": config.patch_size,
                "records": entries}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return load_manifest(out / "manifest.json")
