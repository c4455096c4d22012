"""Multi-scale test-time fusion of prediction maps.

Runs of the same image at several input scales produce probability maps
of different sizes; all are resized (corner-aligned bilinear) to the
largest height and largest width present, then averaged element-wise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ChannelMismatch, EmptyInput, OutOfRangeProbability, ShapeMismatch

DEFAULT_SCALES = ((384, 384), (512, 512), (768, 384), (384, 768), (768, 768))
DEFAULT_MAX_LONGER_SIDE = 1600


@dataclass(frozen=True)
class ScaleSet:
    """Input sizes to run at, plus a cap on the longer image side."""

    scales: tuple = DEFAULT_SCALES
    max_longer_side: int = DEFAULT_MAX_LONGER_SIDE

    def __post_init__(self):
        scales = tuple((int(h), int(w)) for h, w in self.scales)
        if not scales:
            raise ValueError("need at least one scale")
        if any(h < 1 or w < 1 for h, w in scales):
            raise ValueError("scale dims must be >= 1")
        if self.max_longer_side < 1:
            raise ValueError("max_longer_side must be >= 1")
        object.__setattr__(self, "scales", scales)
        object.__setattr__(self, "max_longer_side", int(self.max_longer_side))

    def clamp(self, height: int, width: int):
        """Shrink (height, width) to respect max_longer_side, keeping aspect."""
        longer = max(height, width)
        if longer <= self.max_longer_side:
            return height, width
        f = self.max_longer_side / longer
        return max(1, round(height * f)), max(1, round(width * f))


def _axis_coords(n_in: int, n_out: int) -> np.ndarray:
    if n_out == 1:
        return np.full(1, (n_in - 1) / 2.0)
    return np.arange(n_out, dtype=np.float64) * ((n_in - 1) / (n_out - 1))


def resize_bilinear(arr, out_h: int, out_w: int) -> np.ndarray:
    """Corner-aligned bilinear resize of an (H, W) or (H, W, C) map.

    Output corners sample input corners exactly; every output value is a
    convex combination of inputs, so constant maps stay constant and
    values never leave the input range.
    """
    a = np.asarray(arr, dtype=np.float64)
    if a.ndim not in (2, 3):
        raise ShapeMismatch(f"expected (H, W) or (H, W, C), got shape {a.shape}")
    if out_h < 1 or out_w < 1:
        raise ValueError("output dims must be >= 1")
    h, w = a.shape[:2]
    if (out_h, out_w) == (h, w):
        return a.copy()

    ys = _axis_coords(h, out_h)
    xs = _axis_coords(w, out_w)
    y0 = np.minimum(ys.astype(np.int64), h - 1)
    x0 = np.minimum(xs.astype(np.int64), w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0).reshape(-1, 1)
    wx = (xs - x0).reshape(1, -1)
    if a.ndim == 3:
        wy = wy[..., None]
        wx = wx[..., None]

    r0 = a[y0[:, None], x0[None, :]] * (1 - wx) + a[y0[:, None], x1[None, :]] * wx
    r1 = a[y1[:, None], x0[None, :]] * (1 - wx) + a[y1[:, None], x1[None, :]] * wx
    return r0 * (1 - wy) + r1 * wy


def _checked_pair(pixel, link, index: int, channels):
    p = np.asarray(pixel, dtype=np.float64)
    lk = np.asarray(link, dtype=np.float64)
    if p.ndim != 2:
        raise ShapeMismatch(f"scale {index}: pixel map must be (H, W), got shape {p.shape}")
    if lk.ndim != 3 or lk.shape[:2] != p.shape:
        raise ShapeMismatch(
            f"scale {index}: link map must be {p.shape} x C, got shape {lk.shape}"
        )
    if channels is not None and lk.shape[2] != channels:
        raise ChannelMismatch(
            f"scale {index}: link map has {lk.shape[2]} channels, expected {channels}"
        )
    for name, m in (("pixel", p), ("link", lk)):
        if not np.isfinite(m).all() or (m < 0).any() or (m > 1).any():
            raise OutOfRangeProbability(f"scale {index}: {name} map must lie in [0, 1]")
    return p, lk


def fuse_multiscale(maps):
    """Average (pixel_prob, link_prob) pairs over scales.

    Every map is resized to the largest height and largest width among
    the inputs, then averaged. Returns one (pixel_prob, link_prob) pair.
    """
    if not maps:
        raise EmptyInput("no maps to fuse")
    checked = []
    channels = None
    for i, (pixel, link) in enumerate(maps):
        p, lk = _checked_pair(pixel, link, i, channels)
        channels = lk.shape[2]
        checked.append((p, lk))

    out_h = max(p.shape[0] for p, _ in checked)
    out_w = max(p.shape[1] for p, _ in checked)
    pixel_sum = np.zeros((out_h, out_w), dtype=np.float64)
    link_sum = np.zeros((out_h, out_w, channels), dtype=np.float64)
    for p, lk in checked:
        pixel_sum += resize_bilinear(p, out_h, out_w)
        link_sum += resize_bilinear(lk, out_h, out_w)
    n = len(checked)
    return pixel_sum / n, link_sum / n
