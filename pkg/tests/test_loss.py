import math

import numpy as np
import pytest

from pixellink.errors import NonFiniteLogits, ShapeMismatch
from pixellink.geometry import Polygon
from pixellink.gt_encoder import Annotation, LabelMaps, encode_labels, instance_weights
from pixellink.loss import (
    LossConfig,
    link_loss,
    loss_gradient,
    mine_negatives,
    pixel_loss,
    softmax_pair,
    total_loss,
    total_loss_with_weights,
)

from oracle_utils import finite_diff_gradient

LN2 = math.log(2.0)


def blank_labels(h, w):
    z = np.zeros((h, w), dtype=np.uint8)
    return LabelMaps(z, z.astype(np.int32), z, np.zeros((h, w, 8), np.uint8))


def labels_with(pixel, ids=None, ignore=None, link=None):
    pixel = np.asarray(pixel, dtype=np.uint8)
    h, w = pixel.shape
    if ids is None:
        ids = pixel.astype(np.int32)
    if ignore is None:
        ignore = np.zeros((h, w), np.uint8)
    if link is None:
        link = np.zeros((h, w, 8), np.uint8)
    return LabelMaps(pixel, ids, ignore, link)


# -------------------------------------------------------------------- softmax


def test_softmax_symmetry_and_stability():
    assert np.allclose(softmax_pair(np.zeros((1, 2))), 0.5)
    big = softmax_pair(np.array([[1000.0, 0.0]]))
    assert np.isfinite(big).all()
    assert abs(big[0, 0] - 1.0) < 1e-12 and big[0, 1] >= 0


def test_softmax_normalizes():
    rng = np.random.default_rng(4)
    p = softmax_pair(rng.normal(0, 5, (6, 7, 2)))
    assert np.abs(p.sum(axis=-1) - 1).max() < 1e-12


def test_softmax_rejects_bad_input():
    with pytest.raises(NonFiniteLogits):
        softmax_pair(np.array([[np.nan, 0.0]]))
    with pytest.raises(ShapeMismatch):
        softmax_pair(np.zeros((3, 3)))


# ----------------------------------------------------------------- pixel loss


def test_pixel_loss_hand_case():
    pixel = np.array([[1, 0], [0, 0]], dtype=np.uint8)
    labels = labels_with(pixel)
    logits = np.zeros((2, 2, 2))
    loss, w = pixel_loss(logits, labels, pixel.astype(np.float64))
    assert abs(loss - LN2) < 1e-12
    assert np.array_equal(w, np.ones((2, 2)))


def test_pixel_loss_confident_correct_is_tiny():
    labels = encode_labels([Annotation(Polygon([[0, 0], [4, 0], [4, 3], [0, 3]]))], 8, 8)
    weights, _ = instance_weights(labels)
    logits = np.zeros((8, 8, 2))
    on = labels.pixel_label == 1
    logits[..., 1] = np.where(on, 20.0, 0.0)
    logits[..., 0] = np.where(on, 0.0, 20.0)
    loss, _ = pixel_loss(logits, labels, weights)
    assert 0 <= loss < 1e-8


def test_pixel_loss_zero_positives():
    labels = blank_labels(4, 4)
    loss, w = pixel_loss(np.random.default_rng(0).normal(size=(4, 4, 2)), labels, np.zeros((4, 4)))
    assert loss == 0.0 and not w.any()


def test_pixel_loss_normalization_identity():
    rng = np.random.default_rng(9)
    pixel = (rng.random((6, 6)) < 0.3).astype(np.uint8)
    labels = labels_with(pixel)
    weights_in = pixel * rng.uniform(0.5, 2.0, (6, 6))
    logits = rng.normal(0, 3, (6, 6, 2))
    cfg = LossConfig()
    loss, w = pixel_loss(logits, labels, weights_in, cfg)
    prob = softmax_pair(logits)
    ce = -np.log(np.where(pixel == 1, prob[..., 1], prob[..., 0]))
    s = pixel.sum()
    assert abs(loss * (1 + cfg.negative_ratio) * s - (w * ce).sum()) < 1e-10


def test_ohem_selection_properties():
    rng = np.random.default_rng(21)
    pixel = np.zeros((10, 10), dtype=np.uint8)
    pixel[4:6, 3:5] = 1  # 4 positives
    ignore = np.zeros_like(pixel)
    ignore[0, :] = 1
    labels = labels_with(pixel, ignore=ignore)
    logits = rng.normal(0, 2, (10, 10, 2))
    _, w = pixel_loss(logits, labels, pixel.astype(np.float64))
    mined = (w == 1.0) & (pixel == 0)
    assert mined.sum() == 12
    assert not (mined & ignore.astype(bool)).any()
    prob = softmax_pair(logits)
    ce_neg = -np.log(prob[..., 0])
    unselected = (pixel == 0) & (ignore == 0) & ~mined
    assert ce_neg[mined].min() >= ce_neg[unselected].max() - 1e-12


def test_ohem_exhausts_small_negative_pool():
    pixel = np.ones((3, 3), dtype=np.uint8)
    pixel[0, 0] = 0
    labels = labels_with(pixel)
    _, w = pixel_loss(np.zeros((3, 3, 2)), labels, pixel.astype(np.float64))
    # 8 positives want 24 negatives but only 1 exists
    assert w[0, 0] == 1.0


def test_mine_negatives_tie_break_is_row_major():
    ce = np.zeros((2, 3))
    negative = np.ones((2, 3), dtype=bool)
    mask = mine_negatives(ce, negative, 2)
    assert np.flatnonzero(mask.ravel()).tolist() == [0, 1]


def test_pixel_loss_shape_errors():
    labels = blank_labels(4, 4)
    with pytest.raises(ShapeMismatch):
        pixel_loss(np.zeros((4, 5, 2)), labels, np.zeros((4, 4)))
    with pytest.raises(ShapeMismatch):
        pixel_loss(np.zeros((4, 4, 2)), labels, np.zeros((5, 4)))


# ------------------------------------------------------------------ link loss


def test_link_loss_hand_case():
    pixel = np.zeros((3, 3), dtype=np.uint8)
    pixel[1, 1] = 1
    link = np.zeros((3, 3, 8), np.uint8)
    link[1, 1, :] = 1
    labels = labels_with(pixel, link=link)
    pos, neg = link_loss(np.zeros((3, 3, 8, 2)), labels, np.ones((3, 3)))
    assert abs(pos - LN2) < 1e-12
    assert neg == 0.0


def test_link_loss_no_positives():
    labels = blank_labels(3, 3)
    assert link_loss(np.zeros((3, 3, 8, 2)), labels, np.zeros((3, 3))) == (0.0, 0.0)


def test_link_loss_uniform_weight_scale_invariance():
    rng = np.random.default_rng(31)
    pixel = (rng.random((5, 5)) < 0.5).astype(np.uint8)
    link = (rng.random((5, 5, 8)) < 0.5).astype(np.uint8)
    labels = labels_with(pixel, link=link)
    logits = rng.normal(0, 2, (5, 5, 8, 2))
    w = np.ones((5, 5))
    a = link_loss(logits, labels, w)
    b = link_loss(logits, labels, 2.0 * w)
    assert abs(a[0] - b[0]) < 1e-12 and abs(a[1] - b[1]) < 1e-12


def test_link_terms_are_weighted_means():
    rng = np.random.default_rng(33)
    pixel = (rng.random((6, 6)) < 0.5).astype(np.uint8)
    link = (rng.random((6, 6, 8)) < 0.4).astype(np.uint8)
    labels = labels_with(pixel, link=link)
    logits = rng.normal(0, 2, (6, 6, 8, 2))
    w = rng.uniform(0.1, 3.0, (6, 6))
    pos, neg = link_loss(logits, labels, w)
    prob = softmax_pair(logits)
    ce = -np.log(np.where(link == 1, prob[..., 1], prob[..., 0]))
    in_bounds = np.ones((6, 6, 8), dtype=bool)
    for k, (dx, dy) in enumerate(
        ((-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1))
    ):
        if dx == 1:
            in_bounds[:, -1, k] = False
        elif dx == -1:
            in_bounds[:, 0, k] = False
        if dy == 1:
            in_bounds[-1, :, k] = False
        elif dy == -1:
            in_bounds[0, :, k] = False
    eligible = (pixel == 1)[:, :, None] & in_bounds
    on = link.astype(bool)
    for term, mask in ((pos, eligible & on), (neg, eligible & ~on)):
        if mask.any():
            assert ce[mask].min() - 1e-12 <= term <= ce[mask].max() + 1e-12


def test_link_loss_out_of_bounds_directions_carry_no_weight():
    pixel = np.ones((1, 1), dtype=np.uint8)
    link = np.ones((1, 1, 8), np.uint8)
    labels = labels_with(pixel, link=link)
    assert link_loss(np.zeros((1, 1, 8, 2)), labels, np.ones((1, 1))) == (0.0, 0.0)


# ---------------------------------------------------------------- total loss


def test_total_loss_hand_case():
    pixel = np.array([[1, 0], [0, 0]], dtype=np.uint8)
    link = np.zeros((2, 2, 8), np.uint8)
    link[0, 0, [4, 6, 7]] = 1
    labels = labels_with(pixel, link=link)
    out = total_loss(
        np.zeros((2, 2, 2)), np.zeros((2, 2, 8, 2)), labels, pixel.astype(np.float64)
    )
    assert abs(out.pixel - LN2) < 1e-12
    assert abs(out.link_pos - LN2) < 1e-12
    assert out.link_neg == 0.0
    assert abs(out.total - 3 * LN2) < 1e-12


def test_total_loss_empty_image_is_zero():
    labels = blank_labels(4, 4)
    out = total_loss(np.zeros((4, 4, 2)), np.zeros((4, 4, 8, 2)), labels, np.zeros((4, 4)))
    assert out.total == 0.0


def test_total_monotone_in_pixel_scale():
    rng = np.random.default_rng(41)
    pixel = (rng.random((5, 5)) < 0.4).astype(np.uint8)
    labels = labels_with(pixel)
    pl = rng.normal(0, 2, (5, 5, 2))
    ll = rng.normal(0, 2, (5, 5, 8, 2))
    w = pixel.astype(np.float64)
    t1 = total_loss(pl, ll, labels, w, LossConfig(pixel_scale=1.0)).total
    t2 = total_loss(pl, ll, labels, w, LossConfig(pixel_scale=2.0)).total
    t3 = total_loss(pl, ll, labels, w, LossConfig(pixel_scale=3.0)).total
    assert t1 < t2 < t3


def test_total_loss_with_weights_matches_total():
    rng = np.random.default_rng(43)
    pixel = (rng.random((6, 6)) < 0.35).astype(np.uint8)
    link = (rng.random((6, 6, 8)) < 0.5).astype(np.uint8)
    labels = labels_with(pixel, link=link)
    pl = rng.normal(0, 2, (6, 6, 2))
    ll = rng.normal(0, 2, (6, 6, 8, 2))
    w_in = pixel * rng.uniform(0.5, 1.5, (6, 6))
    out = total_loss(pl, ll, labels, w_in)
    frozen = total_loss_with_weights(pl, ll, labels, out.pixel_weights)
    assert abs(frozen - out.total) < 1e-12


def test_loss_config_validation():
    with pytest.raises(ValueError):
        LossConfig(pixel_scale=0.0)
    with pytest.raises(ValueError):
        LossConfig(negative_ratio=-1.0)


# ------------------------------------------------------------------ gradients


def test_gradient_zero_weights():
    labels = blank_labels(3, 3)
    gp, gl = loss_gradient(
        np.zeros((3, 3, 2)), np.zeros((3, 3, 8, 2)), labels, np.zeros((3, 3))
    )
    assert not gp.any() and not gl.any()


def test_gradient_hand_case():
    # lone positive pixel, zero logits: pixel CE grad = (0.5, -0.5),
    # scaled by pixel_scale * weight / ((1 + ratio) * count)
    pixel = np.zeros((2, 2), dtype=np.uint8)
    pixel[0, 0] = 1
    labels = labels_with(pixel)
    gp, _ = loss_gradient(
        np.zeros((2, 2, 2)), np.zeros((2, 2, 8, 2)), labels, pixel.astype(np.float64)
    )
    assert abs(gp[0, 0, 0] - 2.0 * 0.5 / 4.0) < 1e-12
    assert abs(gp[0, 0, 1] + 2.0 * 0.5 / 4.0) < 1e-12


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(47)
    for _ in range(3):
        pixel = (rng.random((6, 6)) < 0.3).astype(np.uint8)
        ids = pixel.astype(np.int32)
        ids[3:, :] *= 2
        link = (rng.random((6, 6, 8)) < 0.5).astype(np.uint8)
        ignore = (rng.random((6, 6)) < 0.1).astype(np.uint8)
        ignore[pixel == 1] = 0
        labels = LabelMaps(pixel, ids, ignore, link)
        w_in = pixel * rng.uniform(0.5, 2.0, (6, 6))
        pl = rng.normal(0, 2, (6, 6, 2))
        ll = rng.normal(0, 2, (6, 6, 8, 2))

        gp, gl = loss_gradient(pl, ll, labels, w_in)
        _, w_fixed = pixel_loss(pl, labels, w_in)
        fd_p = finite_diff_gradient(
            lambda: total_loss_with_weights(pl, ll, labels, w_fixed), pl
        )
        fd_l = finite_diff_gradient(
            lambda: total_loss_with_weights(pl, ll, labels, w_fixed), ll
        )
        scale = max(np.abs(fd_p).max(), np.abs(fd_l).max(), 1e-8)
        assert np.abs(gp - fd_p).max() / scale < 1e-6
        assert np.abs(gl - fd_l).max() / scale < 1e-6
