"""Weighted softmax cross-entropy training objective.

Three stacked pieces:
  * pixel loss: per-pixel text/non-text CE, positives carrying
    instance-balanced weights, hardest negatives mined online at a fixed
    negative:positive ratio, normalized by (1 + ratio) * positive count
  * link loss: per-direction CE on positive pixels only, split into a
    positive-link and a negative-link term, each normalized by its own
    weight mass so the two link classes are balanced
  * total = pixel_scale * pixel + link_pos + link_neg

All entry points take raw logits (channel pairs, index 1 = "on") and
softmax internally. Analytic gradients treat the mined negative set as a
fixed selection, which is what `total_loss_with_weights` exposes for
finite-difference checks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonFiniteLogits, ShapeMismatch
from .gt_encoder import LabelMaps
from .neighbors import NEIGHBOR_OFFSETS, overlap_slices


@dataclass(frozen=True)
class LossConfig:
    """pixel_scale weights the pixel term; negative_ratio is mined
    negatives per positive."""

    pixel_scale: float = 2.0
    negative_ratio: float = 3.0

    def __post_init__(self):
        if not self.pixel_scale > 0:
            raise ValueError(f"pixel_scale must be > 0, got {self.pixel_scale}")
        if self.negative_ratio < 0:
            raise ValueError(f"negative_ratio must be >= 0, got {self.negative_ratio}")


@dataclass(frozen=True)
class LossBreakdown:
    total: float
    pixel: float
    link_pos: float
    link_neg: float
    pixel_weights: np.ndarray  # (H, W): instance weights + mined negatives at 1


def _checked_logits(logits, name: str, shape=None) -> np.ndarray:
    a = np.asarray(logits, dtype=np.float64)
    if a.ndim < 1 or a.shape[-1] != 2:
        raise ShapeMismatch(f"{name}: last dim must be 2, got shape {a.shape}")
    if shape is not None and a.shape != shape:
        raise ShapeMismatch(f"{name}: expected shape {shape}, got {a.shape}")
    if not np.isfinite(a).all():
        raise NonFiniteLogits(f"{name} contains nan or inf")
    return a


def softmax_pair(logits) -> np.ndarray:
    """Softmax over the last axis (size 2), max-subtracted for stability."""
    a = _checked_logits(logits, "logits")
    shifted = a - a.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _cross_entropy_pair(logits: np.ndarray, on: np.ndarray) -> np.ndarray:
    """-log softmax(logits)[label] with label = `on` (bool), computed as
    logsumexp - chosen logit."""
    m = logits.max(axis=-1)
    lse = m + np.log(np.exp(logits[..., 0] - m) + np.exp(logits[..., 1] - m))
    chosen = np.where(on, logits[..., 1], logits[..., 0])
    return lse - chosen


def _pixel_masks(labels: LabelMaps):
    care = labels.ignore_mask == 0
    positive = (labels.pixel_label == 1) & care
    negative = (labels.pixel_label == 0) & care
    return positive, negative


def mine_negatives(ce: np.ndarray, negative: np.ndarray, count: int) -> np.ndarray:
    """Boolean mask of the `count` highest-CE pixels among `negative`.

    Ties at the selection boundary go to the lower row-major index, so
    the choice is deterministic.
    """
    flat_idx = np.flatnonzero(negative.ravel())
    count = min(count, len(flat_idx))
    if count <= 0:
        return np.zeros(ce.shape, dtype=bool)
    order = np.lexsort((flat_idx, -ce.ravel()[flat_idx]))
    mask = np.zeros(ce.size, dtype=bool)
    mask[flat_idx[order[:count]]] = True
    return mask.reshape(ce.shape)


def pixel_loss(pixel_logits, labels: LabelMaps, inst_weights, cfg: LossConfig = LossConfig()):
    """Instance-balanced, hard-negative-mined pixel CE.

    Returns (loss, weights): weights holds the instance-balanced values
    on positive pixels and 1.0 on the mined negatives, 0 elsewhere. With
    no positive pixels both are zero.
    """
    h, w = labels.shape
    logits = _checked_logits(pixel_logits, "pixel_logits", shape=(h, w, 2))
    weights_in = np.asarray(inst_weights, dtype=np.float64)
    if weights_in.shape != (h, w):
        raise ShapeMismatch(f"inst_weights: expected shape {(h, w)}, got {weights_in.shape}")

    positive, negative = _pixel_masks(labels)
    pos_count = int(positive.sum())
    weights = np.where(positive, weights_in, 0.0)
    if pos_count == 0:
        return 0.0, weights

    ce = _cross_entropy_pair(logits, positive)
    mined = mine_negatives(ce, negative, int(cfg.negative_ratio * pos_count))
    weights[mined] = 1.0
    denom = (1.0 + cfg.negative_ratio) * pos_count
    return float((weights * ce).sum() / denom), weights


def _link_parts(link_logits, labels: LabelMaps, weights):
    h, w = labels.shape
    logits = _checked_logits(link_logits, "link_logits", shape=(h, w, 8, 2))
    wmat = np.asarray(weights, dtype=np.float64)
    if wmat.shape != (h, w):
        raise ShapeMismatch(f"weights: expected shape {(h, w)}, got {wmat.shape}")

    positive, _ = _pixel_masks(labels)
    in_bounds = np.zeros((h, w, 8), dtype=bool)
    for k, (dx, dy) in enumerate(NEIGHBOR_OFFSETS):
        here, _ = overlap_slices(h, w, dx, dy)
        in_bounds[here[0], here[1], k] = True

    on = labels.link_label.astype(bool)
    base = wmat[:, :, None] * (positive[:, :, None] & in_bounds)
    w_pos = base * on
    w_neg = base * ~on
    return logits, on, w_pos, w_neg


def link_loss(link_logits, labels: LabelMaps, weights):
    """Class-balanced link CE over positive pixels.

    `weights` is the matrix returned by pixel_loss. Each term is a
    weighted mean of CE over its link class (labels 1 vs 0); a class
    with zero weight mass contributes 0. Out-of-bounds directions carry
    no weight. Returns (positive_term, negative_term).
    """
    logits, on, w_pos, w_neg = _link_parts(link_logits, labels, weights)
    ce = _cross_entropy_pair(logits, on)
    out = []
    for wk in (w_pos, w_neg):
        denom = wk.sum()
        out.append(float((wk * ce).sum() / denom) if denom > 0 else 0.0)
    return tuple(out)


def total_loss(
    pixel_logits, link_logits, labels: LabelMaps, inst_weights, cfg: LossConfig = LossConfig()
) -> LossBreakdown:
    """Full objective: pixel_scale * pixel + link_pos + link_neg."""
    pixel, weights = pixel_loss(pixel_logits, labels, inst_weights, cfg)
    link_pos, link_neg = link_loss(link_logits, labels, weights)
    total = cfg.pixel_scale * pixel + link_pos + link_neg
    return LossBreakdown(total, pixel, link_pos, link_neg, weights)


def total_loss_with_weights(
    pixel_logits, link_logits, labels: LabelMaps, weights, cfg: LossConfig = LossConfig()
) -> float:
    """Total loss with the pixel weight matrix held fixed.

    Skips negative mining, so the result is smooth in the logits; this
    is the function the analytic gradients differentiate. Feeding back
    the weights returned by pixel_loss reproduces total_loss().total.
    """
    h, w = labels.shape
    logits = _checked_logits(pixel_logits, "pixel_logits", shape=(h, w, 2))
    wmat = np.asarray(weights, dtype=np.float64)
    if wmat.shape != (h, w):
        raise ShapeMismatch(f"weights: expected shape {(h, w)}, got {wmat.shape}")

    positive, _ = _pixel_masks(labels)
    pos_count = int(positive.sum())
    pixel = 0.0
    if pos_count:
        ce = _cross_entropy_pair(logits, positive)
        pixel = float((wmat * ce).sum() / ((1.0 + cfg.negative_ratio) * pos_count))
    link_pos, link_neg = link_loss(link_logits, labels, wmat)
    return cfg.pixel_scale * pixel + link_pos + link_neg


def loss_gradient(
    pixel_logits, link_logits, labels: LabelMaps, inst_weights, cfg: LossConfig = LossConfig()
):
    """Analytic d(total)/d(logits), negative mining held fixed.

    Softmax-CE differentiates to (softmax - onehot); each element is
    scaled by its weight over its term's normalizer. Returns
    (pixel_grad (H, W, 2), link_grad (H, W, 8, 2)).
    """
    _, weights = pixel_loss(pixel_logits, labels, inst_weights, cfg)
    h, w = labels.shape
    logits = _checked_logits(pixel_logits, "pixel_logits", shape=(h, w, 2))

    positive, _ = _pixel_masks(labels)
    pos_count = int(positive.sum())
    pixel_grad = np.zeros((h, w, 2), dtype=np.float64)
    if pos_count:
        sm = softmax_pair(logits)
        onehot = np.stack([~positive, positive], axis=-1).astype(np.float64)
        scale = cfg.pixel_scale * weights / ((1.0 + cfg.negative_ratio) * pos_count)
        pixel_grad = scale[:, :, None] * (sm - onehot)

    link_logits_arr, on, w_pos, w_neg = _link_parts(link_logits, labels, weights)
    sm_link = softmax_pair(link_logits_arr)
    onehot_link = np.stack([~on, on], axis=-1).astype(np.float64)
    diff = sm_link - onehot_link
    link_grad = np.zeros((h, w, 8, 2), dtype=np.float64)
    for wk in (w_pos, w_neg):
        denom = wk.sum()
        if denom > 0:
            link_grad += (wk / denom)[..., None] * diff
    return pixel_grad, link_grad
