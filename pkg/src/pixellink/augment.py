"""Seeded geometric augmentation for image + annotation pairs.

Transforms operate jointly on the pixel buffer (uint8, (H, W) or
(H, W, C)) and the quad annotations so the two stay aligned: quarter
turns are exact pixel permutations, crops clip quads to the window and
track how much of each instance survived, the final square resize scales
vertices with the image. Instances that come out too thin or too clipped
are flagged ignored, never deleted, so they still mask the loss.

Randomness comes from RngStream, a self-contained xorshift64* generator
(shift triple 12/25/27, multiplier 0x2545F4914F6CDD1D) seeded through
the splitmix64 scrambler. All arithmetic is modulo 2**64: uniform doubles
take the top 53 bits / 2**53, bounded ints reduce modulo n. The same
seed therefore reproduces the same augmentation sequence in any
implementation of the recipe, independent of numpy's RNG.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .fusion import resize_bilinear
from .geometry import Polygon, clip_polygon, min_area_rect, polygon_area
from .gt_encoder import Annotation

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_XORSHIFT_MULT = 0x2545F4914F6CDD1D
_CROP_ATTEMPTS = 50


def _mix64(z: int) -> int:
    """splitmix64 output scrambler."""
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


class RngStream:
    """Deterministic 64-bit generator: same seed, same draw sequence."""

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        state = _mix64(self.seed + _GOLDEN)
        # xorshift state must never be zero
        self._state = state if state != 0 else _GOLDEN

    def next_u64(self) -> int:
        x = self._state
        x ^= x >> 12
        x ^= (x << 25) & _MASK64
        x ^= x >> 27
        self._state = x
        return (x * _XORSHIFT_MULT) & _MASK64

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        """Float in [lo, hi) from the top 53 bits."""
        f = (self.next_u64() >> 11) * 2.0**-53
        return lo + f * (hi - lo)

    def randrange(self, n: int) -> int:
        """Integer in [0, n). Modulo reduction; the tiny bias is
        irrelevant for augmentation and keeps the recipe portable."""
        if n < 1:
            raise ValueError(f"randrange needs n >= 1, got {n}")
        return self.next_u64() % n

    def spawn(self, index: int) -> "RngStream":
        """Independent child stream; a pure function of (seed, index)."""
        if index < 0:
            raise ValueError("spawn index must be >= 0")
        return RngStream(_mix64(self.seed + (index + 2) * _GOLDEN))


@dataclass(frozen=True)
class AugmentConfig:
    rotate_prob: float = 0.2
    crop_area_range: tuple = (0.1, 1.0)
    crop_aspect_range: tuple = (0.5, 2.0)
    out_size: int = 512
    min_short_side_ignore: float = 10.0
    min_remain_fraction: float = 0.2

    def __post_init__(self):
        if not 0.0 <= self.rotate_prob <= 1.0:
            raise ValueError(f"rotate_prob must be in [0, 1], got {self.rotate_prob}")
        for name in ("crop_area_range", "crop_aspect_range"):
            lo, hi = getattr(self, name)
            if not (0 < lo <= hi):
                raise ValueError(f"{name} must satisfy 0 < lo <= hi, got ({lo}, {hi})")
        if self.crop_area_range[1] > 1.0:
            raise ValueError("crop_area_range is a fraction of the image, upper bound <= 1")
        if self.out_size < 1:
            raise ValueError("out_size must be >= 1")
        if self.min_short_side_ignore < 0 or not 0.0 <= self.min_remain_fraction <= 1.0:
            raise ValueError("ignore thresholds out of range")


def _checked_image(img) -> np.ndarray:
    a = np.asarray(img)
    if a.ndim not in (2, 3) or a.shape[0] < 1 or a.shape[1] < 1:
        raise ValueError(f"image must be (H, W) or (H, W, C) and non-empty, got shape {a.shape}")
    return a


def rotate_quarter(img, annots, k: int):
    """Rotate image and quads by k quarter turns, losslessly.

    One turn sends vertex (x, y) to (y, W - x) where W is the width
    before that turn; pixels follow the same permutation.
    """
    if k not in (0, 1, 2, 3):
        raise ValueError(f"k must be in 0..3, got {k}")
    a = _checked_image(img)
    out = np.ascontiguousarray(np.rot90(a, k))
    new_annots = list(annots)
    width = a.shape[1]
    height = a.shape[0]
    for _ in range(k):
        rotated = []
        for ann in new_annots:
            v = ann.quad.vertices
            rotated.append(replace(ann, quad=Polygon(np.stack([v[:, 1], width - v[:, 0]], axis=1))))
        new_annots = rotated
        width, height = height, width
    return out, new_annots


def _requad(clipped: np.ndarray) -> np.ndarray:
    """Restore the 4-vertex invariant after clipping.

    Clipping a quad can leave 3..8 vertices. Four pass through
    unchanged (an untouched quad stays exactly itself), a triangle gains
    the midpoint of its longest edge (same region), anything larger is
    replaced by its minimum-area rectangle.
    """
    if len(clipped) == 4:
        return clipped
    if len(clipped) == 3:
        edges = np.roll(clipped, -1, axis=0) - clipped
        i = int(np.argmax((edges**2).sum(axis=1)))
        mid = (clipped[i] + clipped[(i + 1) % 3]) / 2.0
        return np.insert(clipped, i + 1, mid, axis=0)
    return min_area_rect(clipped).vertices()


def random_crop(img, annots, rng: RngStream, cfg: AugmentConfig = AugmentConfig()):
    """Crop a random window with bounded area fraction and aspect ratio.

    Samples (area, aspect) pairs until the window fits, up to 50
    attempts, then falls back to the full image. Quads are clipped to
    the window: instances left with zero area are dropped, the rest have
    their 4-vertex form restored (see _requad) and `remain` scaled by
    the surviving area fraction.
    """
    a = _checked_image(img)
    h, w = a.shape[:2]
    x0 = y0 = 0
    cw, ch = w, h
    for _ in range(_CROP_ATTEMPTS):
        area = rng.uniform(*cfg.crop_area_range) * h * w
        aspect = rng.uniform(*cfg.crop_aspect_range)
        trial_w = round(math.sqrt(area * aspect))
        trial_h = round(math.sqrt(area / aspect))
        if 1 <= trial_w <= w and 1 <= trial_h <= h:
            cw, ch = trial_w, trial_h
            x0 = rng.randrange(w - cw + 1)
            y0 = rng.randrange(h - ch + 1)
            break

    out = np.ascontiguousarray(a[y0 : y0 + ch, x0 : x0 + cw])
    window = Polygon([[x0, y0], [x0 + cw, y0], [x0 + cw, y0 + ch], [x0, y0 + ch]])
    kept = []
    for ann in annots:
        full = polygon_area(ann.quad)
        clipped = clip_polygon(ann.quad, window)
        part = polygon_area(clipped) if len(clipped) >= 3 else 0.0
        if part <= 0.0 or full <= 0.0:
            continue
        quad = _requad(clipped) - np.array([x0, y0], dtype=np.float64)
        kept.append(
            replace(ann, quad=Polygon(quad), remain=ann.remain * min(1.0, part / full))
        )
    return out, kept


def resize_uniform(img, annots, out_size: int):
    """Resize to out_size x out_size; vertices scale by the same factors."""
    if out_size < 1:
        raise ValueError(f"out_size must be >= 1, got {out_size}")
    a = _checked_image(img)
    h, w = a.shape[:2]
    if (h, w) == (out_size, out_size):
        return np.ascontiguousarray(a), list(annots)
    resized = resize_bilinear(a.astype(np.float64), out_size, out_size)
    out = np.clip(np.rint(resized), 0, 255).astype(np.uint8)
    fx, fy = out_size / w, out_size / h
    scaled = [
        replace(ann, quad=Polygon(ann.quad.vertices * np.array([fx, fy]))) for ann in annots
    ]
    return out, scaled


def apply_ignore_rules(annots, cfg: AugmentConfig = AugmentConfig()):
    """Flag instances that are too thin or mostly cropped away.

    An instance whose minimum-area rectangle has a short side under
    cfg.min_short_side_ignore, or whose remaining fraction is under
    cfg.min_remain_fraction, becomes ignored. Never deletes and never
    un-ignores, so applying twice changes nothing.
    """
    out = []
    for ann in annots:
        if not ann.ignored:
            thin = min_area_rect(ann.quad.vertices).short_side < cfg.min_short_side_ignore
            if thin or ann.remain < cfg.min_remain_fraction:
                ann = replace(ann, ignored=True)
        out.append(ann)
    return out


def augment_sample(img, annots, rng: RngStream, cfg: AugmentConfig = AugmentConfig()):
    """Full pipeline: maybe rotate, crop, resize square, apply ignore rules.

    Draw order is fixed (rotation coin first, then k only if it hit,
    then crop samples), so a given stream position always maps to the
    same transform.
    """
    if rng.uniform() < cfg.rotate_prob:
        img, annots = rotate_quarter(img, annots, rng.randrange(4))
    img, annots = random_crop(img, annots, rng, cfg)
    img, annots = resize_uniform(img, annots, cfg.out_size)
    return img, apply_ignore_rules(annots, cfg)
