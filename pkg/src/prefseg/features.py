"""Feature supply and adaptation: a trainable linear map over frozen patch
features, trained with a contrastive triplet loss on pseudo-labeled patches.

The adapter multiplies every raw vector by a dim x dim matrix (identity at
init) and renormalizes, sharpening the feature space round over round from
whatever pseudo-labels the interactive phase produced.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .core import (
    FeatureMap,
    ImageRecord,
    Mask,
    ValidationError,
    load_feature_map,
    patch_majority_labels,
)

logger = logging.getLogger(__name__)

TRIPLETS_PER_STEP = 32


@dataclass(frozen=True)
class AdapterParams:
    weight: np.ndarray  # (dim, dim) float64
    learning_rate: float = 1e-2
    margin: float = 0.2

    def __post_init__(self):
        w = np.asarray(self.weight, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValidationError(f"adapter weight must be square, got {w.shape}")
        if not np.isfinite(w).all():
            raise ValidationError("adapter weight contains non-finite values")
        if self.learning_rate <= 0 or self.margin <= 0:
            raise ValidationError("learning_rate and margin must be positive")
        object.__setattr__(self, "weight", w)

    @property
    def dim(self) -> int:
        return self.weight.shape[0]


def make_adapter(dim: int, learning_rate: float = 1e-2, margin: float = 0.2) -> AdapterParams:
    return AdapterParams(weight=np.eye(dim), learning_rate=learning_rate, margin=margin)


def apply_adapter(adapter: AdapterParams, features: FeatureMap) -> FeatureMap:
    """normalize(W v) for every patch vector; output satisfies FeatureMap invariants."""
    if features.dim != adapter.dim:
        raise ValidationError(f"feature dim {features.dim} != adapter dim {adapter.dim}")
    raw = features.vectors.astype(np.float64)
    out = raw @ adapter.weight.T
    norms = np.linalg.norm(out, axis=-1, keepdims=True)
    if not np.isfinite(out).all() or (norms == 0.0).any():
        raise ValidationError("adapter produced a non-finite or zero-norm vector (diverged adapter)")
    return FeatureMap((out / norms).astype(np.float32))


def get_features(record: ImageRecord, adapter: AdapterParams) -> FeatureMap:
    """Load the record's raw feature file and push it through the adapter."""
    return apply_adapter(adapter, load_feature_map(record.feature_path))


def _class_pools(pseudo: Sequence[tuple[FeatureMap, Mask]]) -> tuple[np.ndarray, list[np.ndarray]]:
    """Stack all patch vectors and index them by pseudo-class.

    Returns (vectors (N, dim) float64, [bg indices, fg indices]).
    """
    chunks = []
    labels = []
    for fmap, mask in pseudo:
        if mask.height % fmap.grid_h or mask.width % fmap.grid_w:
            raise ValidationError("mask grid not divisible by feature grid")
        patch_size = mask.height // fmap.grid_h
        lab = patch_majority_labels(mask, patch_size)
        chunks.append(fmap.vectors.reshape(-1, fmap.dim).astype(np.float64))
        labels.append(lab.reshape(-1))
    vecs = np.concatenate(chunks, axis=0)
    lab = np.concatenate(labels)
    return vecs, [np.flatnonzero(lab == 0), np.flatnonzero(lab == 1)]


def triplet_loss_and_grad(weight: np.ndarray, anchors: np.ndarray, positives: np.ndarray,
                          negatives: np.ndarray, margin: float) -> tuple[float, np.ndarray]:
    """Mean hinge triplet loss over a batch and its gradient wrt the adapter weight.

    Loss per triplet: max(0, margin - cos(a, p) + cos(a, n)) on the adapted,
    renormalized vectors. Everything below is the closed-form gradient of
    that expression through the normalization.
    """
    def adapt(v):
        u = v @ weight.T
        n = np.linalg.norm(u, axis=1, keepdims=True)
        return u, n, u / n

    ua, na, ha = adapt(anchors)
    up, npos, hp = adapt(positives)
    un, nn, hn = adapt(negatives)
    cap = np.sum(ha * hp, axis=1)
    can = np.sum(ha * hn, axis=1)
    losses = np.maximum(0.0, margin - cap + can)
    active = losses > 0.0
    grad = np.zeros_like(weight)
    if active.any():
        a = active
        # d cos(x, y) / d u_x = (y_hat - cos * x_hat) / ||u_x||
        g_ua = (-(hp[a] - cap[a, None] * ha[a]) + (hn[a] - can[a, None] * ha[a])) / na[a]
        g_up = -(ha[a] - cap[a, None] * hp[a]) / npos[a]
        g_un = (ha[a] - can[a, None] * hn[a]) / nn[a]
        grad = g_ua.T @ anchors[a] + g_up.T @ positives[a] + g_un.T @ negatives[a]
    return float(losses.mean()), grad / len(losses)


def adapt_features(adapter: AdapterParams, pseudo: Sequence[tuple[FeatureMap, Mask]],
                   steps: int, seed: int) -> tuple[AdapterParams, list[float]]:
    """Run `steps` SGD steps of triplet training; returns (adapter, mean-loss trajectory).

    Triplets are drawn uniformly per class across the whole pseudo-label set.
    With a single-class set this is a warned no-op, not a failure.
    """
    if not pseudo:
        raise ValidationError("adapt_features needs a non-empty pseudo-label set")
    if steps == 0:
        return adapter, []
    vecs, pools = _class_pools(pseudo)
    if len(pools[0]) == 0 or len(pools[1]) == 0:
        logger.warning("adapt_features: pseudo-labels contain a single class, skipping adaptation")
        return adapter, []
    if vecs.shape[1] != adapter.dim:
        raise ValidationError(f"feature dim {vecs.shape[1]} != adapter dim {adapter.dim}")
    rng = np.random.default_rng(seed)
    weight = adapter.weight.copy()
    trajectory = []
    for _ in range(steps):
        cls = rng.integers(0, 2, size=TRIPLETS_PER_STEP)
        a_idx = np.empty(TRIPLETS_PER_STEP, dtype=np.int64)
        p_idx = np.empty(TRIPLETS_PER_STEP, dtype=np.int64)
        n_idx = np.empty(TRIPLETS_PER_STEP, dtype=np.int64)
        for t in range(TRIPLETS_PER_STEP):
            same, other = pools[cls[t]], pools[1 - cls[t]]
            a_idx[t] = rng.choice(same)
            p_idx[t] = rng.choice(same) if len(same) == 1 else _choice_excluding(rng, same, a_idx[t])
            n_idx[t] = rng.choice(other)
        loss, grad = triplet_loss_and_grad(weight, vecs[a_idx], vecs[p_idx], vecs[n_idx],
                                           adapter.margin)
        trajectory.append(loss)
        step = adapter.learning_rate * grad
        if not np.isfinite(step).all():
            logger.warning("adapt_features: non-finite gradient, stopping early")
            break
        weight -= step
    return replace(adapter, weight=weight), trajectory


def _choice_excluding(rng: np.random.Generator, pool: np.ndarray, excluded: int) -> int:
    pick = rng.choice(pool)
    while pick == excluded:
        pick = rng.choice(pool)
    return int(pick)
