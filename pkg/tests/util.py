"""Shared test helpers: tiny mask/feature builders and file corruption tools."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from prefseg.core import FeatureMap, Mask
from prefseg.tensor_io import read_tensor, write_tensor


def mask_from_rows(rows: list[str]) -> Mask:
    """Build a mask from strings of '.' (bg) and '#' (fg)."""
    bits = np.array([[1 if ch == "#" else 0 for ch in row] for row in rows], dtype=np.uint8)
    return Mask(bits)


def square_mask(h: int, w: int, r0: int, c0: int, r1: int, c1: int) -> Mask:
    bits = np.zeros((h, w), dtype=np.uint8)
    bits[r0:r1, c0:c1] = 1
    return Mask(bits)


def random_mask(rng: np.random.Generator, h: int, w: int, p: float = 0.5) -> Mask:
    return Mask((rng.random((h, w)) < p).astype(np.uint8))


def unit_features(vectors: np.ndarray) -> FeatureMap:
    """Normalize an arbitrary (gh, gw, d) array into a FeatureMap."""
    v = np.asarray(vectors, dtype=np.float64)
    v = v / np.linalg.norm(v, axis=-1, keepdims=True)
    return FeatureMap(v.astype(np.float32))


def two_cluster_features(rng: np.random.Generator, labels: np.ndarray, dim: int = 6,
                         noise: float = 0.0, cos_centers: float = 0.0) -> FeatureMap:
    """Features with one cluster per label value; cos between cluster centers fixed."""
    c0 = np.zeros(dim)
    c0[0] = 1.0
    c1 = np.zeros(dim)
    c1[0] = cos_centers
    c1[1] = np.sqrt(1.0 - cos_centers**2)
    base = np.where(labels[..., None] == 1, c1, c0)
    vecs = base + rng.standard_normal(base.shape) * noise
    return unit_features(vecs)


def corrupt_feature_norm(path: Path, scale: float = 0.5) -> None:
    """Scale one vector of a PFT1 feature file so it is no longer unit norm."""
    arr = np.array(read_tensor(path))
    arr[0, 0] *= scale
    # bypass write_tensor's finite check path on purpose: keep it a valid PFT1
    write_tensor(path, arr.astype(np.float32))


def truncate_file(path: Path, n_bytes: int) -> None:
    data = path.read_bytes()
    path.write_bytes(data[: len(data) - n_bytes])


def corrupt_magic(path: Path) -> None:
    data = bytearray(path.read_bytes())
    data[0] = ord(b"X")
    path.write_bytes(bytes(data))


def patch_pgm_dims(path: Path, width: int, height: int) -> None:
    """Rewrite a binary PGM header with new claimed dimensions (payload kept)."""
    data = path.read_bytes()
    assert data[:2] == b"P5"
    # header is P5\n{w} {h}\n255\n as written by tensor_io
    body = data.split(b"\n", 3)[3]
    path.write_bytes(b"P5\n%d %d\n255\n" % (width, height) + body)
