"""Synthetic world tests: determinism, geometry, and the clean-world
propagation guarantee."""

import hashlib
from pathlib import Path

import numpy as np
import pytest
from scipy import ndimage

from prefseg.core import FOREGROUND, Mask, ValidationError, expand_patches, patch_majority_labels
from prefseg.propagation import LabeledClick, PropagationConfig, propagate
from prefseg.world import SyntheticWorldConfig, generate_world


def tree_digest(root: Path) -> dict[str, str]:
    out = {}
    for p in sorted(root.rglob("*")):
        if p.is_file():
            out[str(p.relative_to(root))] = hashlib.sha256(p.read_bytes()).hexdigest()
    return out


def test_config_validation():
    with pytest.raises(ValidationError):
        SyntheticWorldConfig(image_size=60, patch_size=8)
    with pytest.raises(ValidationError):
        SyntheticWorldConfig(blob_count_range=(0, 2))
    with pytest.raises(ValidationError):
        SyntheticWorldConfig(fg_bg_separation=2.5)


def test_determinism_byte_identical(tmp_path):
    config = SyntheticWorldConfig(image_size=32, patch_size=8, blob_count_range=(1, 3),
                                  feature_dim=6, fg_bg_separation=1.2, noise_sigma=0.15,
                                  seed=42)
    generate_world(config, 10, tmp_path / "a")
    generate_world(config, 10, tmp_path / "b")
    assert tree_digest(tmp_path / "a") == tree_digest(tmp_path / "b")


def test_different_seed_differs(tmp_path):
    base = dict(image_size=32, patch_size=8, blob_count_range=(1, 2), feature_dim=6,
                fg_bg_separation=1.2, noise_sigma=0.15)
    generate_world(SyntheticWorldConfig(seed=1, **base), 2, tmp_path / "a")
    generate_world(SyntheticWorldConfig(seed=2, **base), 2, tmp_path / "b")
    assert tree_digest(tmp_path / "a") != tree_digest(tmp_path / "b")


def test_clean_world_single_click_recovers_patch_gt(tmp_path):
    # separation 2.0 (antipodal clusters), zero noise: one correct fg click at
    # tau=0.8 must recover the patch-majority gt exactly
    config = SyntheticWorldConfig(image_size=48, patch_size=8, blob_count_range=(1, 2),
                                  feature_dim=6, fg_bg_separation=2.0, noise_sigma=0.0,
                                  seed=5)
    manifest = generate_world(config, 4, tmp_path)
    from prefseg.core import load_feature_map
    for record in manifest.records:
        fmap = load_feature_map(record.feature_path)
        gt_patches = patch_majority_labels(record.gt_mask, config.patch_size)
        expected = expand_patches(gt_patches, config.patch_size)
        fg_cells = np.argwhere(gt_patches == 1)
        assert len(fg_cells), "world must contain foreground patches"
        for gr, gc in fg_cells[:: max(1, len(fg_cells) // 4)]:
            click = LabeledClick(row=int(gr) * 8 + 4, col=int(gc) * 8 + 4,
                                 label=FOREGROUND, sequence=1)
            out = propagate([click], fmap, Mask.zeros(48, 48),
                            PropagationConfig(tau=0.8), 8)
            assert (out.bits == expected.bits).all()


def test_single_blob_is_one_connected_component(tmp_path):
    config = SyntheticWorldConfig(image_size=64, patch_size=8, blob_count_range=(1, 1),
                                  feature_dim=4, fg_bg_separation=1.0, noise_sigma=0.1,
                                  seed=13)
    manifest = generate_world(config, 12, tmp_path)
    four_conn = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])
    for record in manifest.records:
        _, n = ndimage.label(record.gt_mask.bits, structure=four_conn)
        assert n == 1, record.id


def test_images_and_masks_nonempty_in_bounds(tmp_path):
    config = SyntheticWorldConfig(image_size=32, patch_size=4, blob_count_range=(1, 3),
                                  feature_dim=5, fg_bg_separation=1.0, noise_sigma=0.2,
                                  seed=77)
    manifest = generate_world(config, 8, tmp_path)
    for record in manifest.records:
        assert record.gt_mask.bits.any()
        assert not record.gt_mask.bits.all()
        assert 0.0 <= record.image.min() and record.image.max() <= 1.0


def test_world_config_json_roundtrip(tmp_path):
    config = SyntheticWorldConfig(image_size=32, patch_size=8, blob_count_range=(2, 3),
                                  feature_dim=7, fg_bg_separation=0.9, noise_sigma=0.05,
                                  seed=21)
    p = tmp_path / "w.json"
    p.write_text(config.to_json())
    assert SyntheticWorldConfig.from_json(p) == config
