"""Segmentation learner tests: prediction conventions, BCE gradient vs finite
differences, training behavior, warm starting."""

import logging

import numpy as np
import pytest

from prefseg.core import Mask, ValidationError
from prefseg.seg import (
    SegModelParams,
    accuracy,
    bce_loss_and_grad,
    init_seg_params,
    predict,
    train,
)
from prefseg.world import SyntheticWorldConfig, class_centers

from util import two_cluster_features, unit_features


def test_zero_params_predict_all_foreground():
    rng = np.random.default_rng(0)
    fmap = unit_features(rng.standard_normal((3, 3, 4)))
    mask = predict(init_seg_params(4), fmap, patch_size=2)
    assert mask.bits.all()  # sigmoid(0) = 0.5 and the 0.5 tie counts as foreground


def test_negated_params_complement():
    rng = np.random.default_rng(1)
    fmap = unit_features(rng.standard_normal((4, 4, 5)))
    params = SegModelParams(weight=rng.standard_normal(5), bias=0.3)
    flipped = SegModelParams(weight=-params.weight, bias=-params.bias)
    a = predict(params, fmap, 2).bits
    b = predict(flipped, fmap, 2).bits
    z = fmap.vectors.astype(np.float64) @ params.weight + params.bias
    off_boundary = np.repeat(np.repeat(z != 0.0, 2, axis=0), 2, axis=1)
    assert (a[off_boundary] != b[off_boundary]).all()


def test_aligned_weight_recovers_clean_world():
    # weight = fg center, bias = -0.5 * (separation-implied z gap) splits the
    # clusters exactly on a noiseless world
    config = SyntheticWorldConfig(feature_dim=6, fg_bg_separation=1.2, noise_sigma=0.0)
    c_fg, c_bg = class_centers(config, np.random.default_rng(3))
    labels = (np.random.default_rng(4).random((4, 4)) < 0.4).astype(np.uint8)
    vecs = np.where(labels[..., None] == 1, c_fg, c_bg)
    fmap = unit_features(vecs)
    # z_fg = 1, z_bg = 1 - separation; midpoint threshold
    params = SegModelParams(weight=c_fg, bias=-(1.0 + (1.0 - config.fg_bg_separation)) / 2)
    got = predict(params, fmap, patch_size=8)
    expected = np.repeat(np.repeat(labels, 8, axis=0), 8, axis=1)
    assert (got.bits == expected).all()


def test_predict_dim_mismatch():
    rng = np.random.default_rng(5)
    fmap = unit_features(rng.standard_normal((2, 2, 4)))
    with pytest.raises(ValidationError):
        predict(init_seg_params(6), fmap, 2)


def _separable_set(rng, gh=8, gw=8, dim=6, noise=0.08):
    labels = (rng.random((gh, gw)) < 0.5).astype(np.uint8)
    labels[0, 0], labels[-1, -1] = 0, 1
    fmap = two_cluster_features(rng, labels, dim=dim, noise=noise, cos_centers=-0.5)
    mask = Mask(np.repeat(np.repeat(labels, 2, axis=0), 2, axis=1))
    return fmap, mask


def test_epochs_zero_unchanged():
    rng = np.random.default_rng(6)
    pseudo = [_separable_set(rng)]
    params = init_seg_params(6, epochs=0)
    out, losses = train(params, pseudo, seed=1)
    assert (out.weight == params.weight).all() and out.bias == params.bias
    assert len(losses) == 1  # just the initial loss


def test_train_separable_reaches_high_accuracy():
    rng = np.random.default_rng(7)
    pseudo = [_separable_set(rng) for _ in range(4)]
    params = init_seg_params(6, learning_rate=0.5, epochs=50, batch_size=32)
    trained, losses = train(params, pseudo, seed=2)
    assert losses[-1] < losses[0]
    assert accuracy(trained, pseudo) >= 0.99


def test_train_deterministic():
    rng = np.random.default_rng(8)
    pseudo = [_separable_set(rng)]
    params = init_seg_params(6, epochs=5)
    out1, tr1 = train(params, pseudo, seed=3)
    out2, tr2 = train(params, pseudo, seed=3)
    assert (out1.weight == out2.weight).all() and out1.bias == out2.bias
    assert tr1 == tr2


def test_train_single_class_warns(caplog):
    rng = np.random.default_rng(9)
    fmap = unit_features(rng.standard_normal((3, 3, 4)))
    pseudo = [(fmap, Mask.zeros(6, 6))]
    with caplog.at_level(logging.WARNING):
        trained, _ = train(init_seg_params(4, epochs=5), pseudo, seed=1)
    assert any("single-class" in r.message for r in caplog.records)
    assert np.isfinite(trained.weight).all()


def test_warm_start_lowers_initial_loss():
    rng = np.random.default_rng(10)
    pseudo = [_separable_set(rng) for _ in range(3)]
    params = init_seg_params(6, epochs=5)
    round1, tr1 = train(params, pseudo, seed=4)
    round2, tr2 = train(round1, pseudo, seed=5)
    assert tr2[0] <= tr1[0]


@pytest.mark.parametrize("seed", range(20))
def test_bce_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(2000 + seed)
    dim, n = 6, 40
    feats = rng.standard_normal((n, dim))
    labels = (rng.random(n) < 0.5).astype(np.float64)
    weight = rng.standard_normal(dim) * 0.5
    bias = float(rng.standard_normal())
    _, gw, gb = bce_loss_and_grad(weight, bias, feats, labels)
    eps = 1e-3  # loss is smooth; 1e-4 relative accuracy expected
    fd_w = np.zeros(dim)
    for i in range(dim):
        wp, wm = weight.copy(), weight.copy()
        wp[i] += eps
        wm[i] -= eps
        fd_w[i] = (bce_loss_and_grad(wp, bias, feats, labels)[0]
                   - bce_loss_and_grad(wm, bias, feats, labels)[0]) / (2 * eps)
    fd_b = (bce_loss_and_grad(weight, bias + eps, feats, labels)[0]
            - bce_loss_and_grad(weight, bias - eps, feats, labels)[0]) / (2 * eps)
    assert np.linalg.norm(fd_w - gw) / max(np.linalg.norm(fd_w), np.linalg.norm(gw)) < 1e-4
    assert abs(fd_b - gb) / max(abs(fd_b), abs(gb), 1e-12) < 1e-4
