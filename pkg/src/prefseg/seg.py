"""The trainable segmentation learner: a logistic classifier over adapted
patch features, fine-tuned each round on that round's pseudo-masks.

The learner is deliberately pluggable: the rest of the engine only needs
predict() and train(), so a heavier network can be swapped in behind the
same contract.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .core import FeatureMap, Mask, ValidationError, expand_patches, patch_majority_labels

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SegModelParams:
    weight: np.ndarray  # (dim,) float64
    bias: float
    learning_rate: float = 0.5
    epochs: int = 20
    batch_size: int = 64

    def __post_init__(self):
        w = np.asarray(self.weight, dtype=np.float64)
        if w.ndim != 1:
            raise ValidationError(f"seg weight must be 1-D, got shape {w.shape}")
        if not np.isfinite(w).all() or not np.isfinite(self.bias):
            raise ValidationError("seg parameters must be finite")
        object.__setattr__(self, "weight", w)

    @property
    def dim(self) -> int:
        return self.weight.shape[0]


def init_seg_params(dim: int, learning_rate: float = 0.5, epochs: int = 20,
                    batch_size: int = 64) -> SegModelParams:
    """Zero-initialized classifier; sigmoid(0) = 0.5 maps to all-foreground."""
    return SegModelParams(weight=np.zeros(dim), bias=0.0, learning_rate=learning_rate,
                          epochs=epochs, batch_size=batch_size)


def predict(params: SegModelParams, features: FeatureMap, patch_size: int) -> Mask:
    """Per-patch sigmoid(w.f + b) >= 0.5 -> foreground, expanded blockwise.

    The tie at exactly 0.5 counts as foreground.
    """
    if features.dim != params.dim:
        raise ValidationError(f"feature dim {features.dim} != seg dim {params.dim}")
    z = features.vectors.astype(np.float64) @ params.weight + params.bias
    return expand_patches((z >= 0.0).astype(np.uint8), patch_size)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def bce_loss_and_grad(weight: np.ndarray, bias: float, feats: np.ndarray,
                      labels: np.ndarray) -> tuple[float, np.ndarray, float]:
    """Mean binary cross-entropy and its gradient wrt (weight, bias)."""
    z = feats @ weight + bias
    p = _sigmoid(z)
    eps = 1e-12
    loss = float(-np.mean(labels * np.log(p + eps) + (1 - labels) * np.log(1 - p + eps)))
    resid = p - labels
    return loss, feats.T @ resid / len(labels), float(resid.mean())


def _patch_dataset(pseudo: Sequence[tuple[FeatureMap, Mask]]) -> tuple[np.ndarray, np.ndarray]:
    feats, labels = [], []
    for fmap, mask in pseudo:
        if mask.height % fmap.grid_h or mask.width % fmap.grid_w:
            raise ValidationError("mask grid not divisible by feature grid")
        patch_size = mask.height // fmap.grid_h
        labels.append(patch_majority_labels(mask, patch_size).reshape(-1).astype(np.float64))
        feats.append(fmap.vectors.reshape(-1, fmap.dim).astype(np.float64))
    return np.concatenate(feats, axis=0), np.concatenate(labels)


def train(params: SegModelParams, pseudo: Sequence[tuple[FeatureMap, Mask]],
          seed: int) -> tuple[SegModelParams, list[float]]:
    """Minibatch SGD on BCE over patches, warm-started from the incoming params.

    Returns (params, loss trajectory); trajectory[0] is the loss before any
    step, so warm-start improvements are observable across rounds. A step
    that goes non-finite is rolled back and training stops with a warning.
    """
    if not pseudo:
        raise ValidationError("train needs a non-empty pseudo-label set")
    feats, labels = _patch_dataset(pseudo)
    if feats.shape[1] != params.dim:
        raise ValidationError(f"feature dim {feats.shape[1]} != seg dim {params.dim}")
    if labels.min() == labels.max():
        logger.warning("seg train: single-class pseudo-labels, fitting anyway")
    weight = params.weight.copy()
    bias = params.bias
    loss0, _, _ = bce_loss_and_grad(weight, bias, feats, labels)
    trajectory = [loss0]
    rng = np.random.default_rng(seed)
    n = len(labels)
    for _ in range(params.epochs):
        order = rng.permutation(n)
        w_before, b_before = weight.copy(), bias
        for start in range(0, n, params.batch_size):
            idx = order[start : start + params.batch_size]
            _, gw, gb = bce_loss_and_grad(weight, bias, feats[idx], labels[idx])
            weight -= params.learning_rate * gw
            bias -= params.learning_rate * gb
        loss, _, _ = bce_loss_and_grad(weight, bias, feats, labels)
        if not np.isfinite(loss) or not np.isfinite(weight).all() or not np.isfinite(bias):
            logger.warning("seg train: loss exploded, rolling back last epoch")
            weight, bias = w_before, b_before
            break
        trajectory.append(loss)
    return replace(params, weight=weight, bias=bias), trajectory


def accuracy(params: SegModelParams, pseudo: Sequence[tuple[FeatureMap, Mask]]) -> float:
    """Patch-level training accuracy of the current parameters."""
    feats, labels = _patch_dataset(pseudo)
    pred = (feats @ params.weight + params.bias >= 0.0).astype(np.float64)
    return float((pred == labels).mean())
