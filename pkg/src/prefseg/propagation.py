"""Densify sparse labeled clicks into pseudo-masks via feature similarity.

Every click claims all patches whose cosine similarity to the clicked patch
meets the threshold; claimed patches take the click's label blockwise at
pixel granularity, unclaimed patches keep the base mask's pixels. A round's
mask is therefore a pure function of (accepted clicks, base), which makes
re-propagation idempotent.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from .core import BACKGROUND, FOREGROUND, FeatureMap, Mask, ValidationError, pixel_to_patch

ConflictRule = Literal["latest_wins", "max_similarity_wins"]

DEFAULT_TAU = 0.8


@dataclass(frozen=True)
class PropagationConfig:
    tau: float = DEFAULT_TAU
    conflict_rule: ConflictRule = "max_similarity_wins"

    def __post_init__(self):
        if not (-1.0 < self.tau <= 1.0):
            raise ValidationError(f"tau must be in (-1, 1], got {self.tau}")
        if self.conflict_rule not in ("latest_wins", "max_similarity_wins"):
            raise ValidationError(f"unknown conflict rule {self.conflict_rule!r}")


@dataclass(frozen=True)
class LabeledClick:
    row: int
    col: int
    label: int  # FOREGROUND or BACKGROUND
    sequence: int = 0  # click ordinal within the episode

    def __post_init__(self):
        if self.label not in (FOREGROUND, BACKGROUND):
            raise ValidationError(f"label must be 0 or 1, got {self.label}")


def similarity_map(click: LabeledClick, features: FeatureMap, patch_size: int) -> np.ndarray:
    """Cosine similarity of every patch to the clicked patch, (grid_h, grid_w) float64."""
    gr, gc = pixel_to_patch(click.row, click.col, patch_size,
                            height=features.grid_h * patch_size,
                            width=features.grid_w * patch_size)
    vecs = features.vectors.astype(np.float64)
    f_click = vecs[gr, gc]
    if not np.isfinite(f_click).all() or np.linalg.norm(f_click) == 0.0:
        raise ValidationError(f"degenerate feature vector at patch ({gr},{gc})")
    return vecs @ f_click


def propagate(clicks: Sequence[LabeledClick], features: FeatureMap, base: Mask,
              config: PropagationConfig, patch_size: int) -> Mask:
    """Compose all clicks' claims over the base mask.

    Conflicting claims on a patch are resolved by config.conflict_rule;
    under max_similarity_wins an exact similarity tie goes to background.
    """
    if not clicks:
        raise ValidationError("propagate needs at least one click")
    gh, gw = features.grid_h, features.grid_w
    if base.bits.shape != (gh * patch_size, gw * patch_size):
        raise ValidationError(
            f"base mask {base.bits.shape} inconsistent with {gh}x{gw} patches of size {patch_size}"
        )
    # claim[s] per click: similarity >= tau, clicked patch always included
    best_sim = {FOREGROUND: np.full((gh, gw), -np.inf),
                BACKGROUND: np.full((gh, gw), -np.inf)}
    latest = {FOREGROUND: np.full((gh, gw), -1, dtype=np.int64),
              BACKGROUND: np.full((gh, gw), -1, dtype=np.int64)}
    claimed_any = np.zeros((gh, gw), dtype=bool)
    for click in clicks:
        sim = similarity_map(click, features, patch_size)
        claim = sim >= config.tau
        gr, gc = pixel_to_patch(click.row, click.col, patch_size)
        claim[gr, gc] = True
        claimed_any |= claim
        lab = click.label
        best_sim[lab] = np.where(claim, np.maximum(best_sim[lab], sim), best_sim[lab])
        latest[lab] = np.where(claim, np.maximum(latest[lab], click.sequence), latest[lab])
    if config.conflict_rule == "max_similarity_wins":
        fg = claimed_any & (best_sim[FOREGROUND] > best_sim[BACKGROUND])
    else:
        fg = claimed_any & (latest[FOREGROUND] > latest[BACKGROUND])
    out = np.array(base.bits, dtype=np.uint8)
    claimed_px = np.repeat(np.repeat(claimed_any, patch_size, axis=0), patch_size, axis=1)
    fg_px = np.repeat(np.repeat(fg, patch_size, axis=0), patch_size, axis=1)
    out[claimed_px] = fg_px[claimed_px].astype(np.uint8)
    return Mask(out)
