"""Ground-truth encoding: quad annotations to per-pixel supervision maps.

Produces, at prediction-map resolution:
  * pixel_label: 1 on pixels covered by exactly one live text quad
    (pixels shared by two or more quads of any kind are negative)
  * instance_id: 1-based id of the owning quad, 0 elsewhere
  * ignore_mask: 1 on pixels of do-not-care or ignored quads
  * link_label: per-direction 1 when a pixel and its neighbor share an id
  * instance-balanced pixel weights: every live instance receives the
    same total weight, spread uniformly over its pixels

Annotation text format (one instance per line, UTF-8, BOM tolerated):

    x1,y1,x2,y2,x3,y3,x4,y4,transcription

A transcription of "###" marks the instance do-not-care.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import AnnotationParseError, ShapeMismatch
from .geometry import Polygon, as_polygon, rasterize_polygon
from .neighbors import NEIGHBOR_OFFSETS, overlap_slices

DONT_CARE_TOKEN = "###"
_PLACEHOLDER_TEXT = "text"


@dataclass(frozen=True)
class Annotation:
    """One text instance: a quadrilateral plus care flags.

    `dont_care` comes from the dataset ("###" transcription); `ignored`
    is set later by augmentation rules. Both exclude the instance from
    positive supervision, they are kept separate so ignore decisions
    never overwrite dataset flags. `remain` is the fraction of the
    original quad area still visible after cropping (1.0 when uncropped);
    the ignore rules read it.
    """

    quad: Polygon
    dont_care: bool = False
    ignored: bool = False
    remain: float = 1.0

    def __post_init__(self):
        quad = as_polygon(self.quad)
        if len(quad.vertices) != 4:
            raise ValueError(f"annotation quad needs exactly 4 vertices, got {len(quad.vertices)}")
        if not 0.0 <= self.remain <= 1.0:
            raise ValueError(f"remain fraction must be in [0, 1], got {self.remain}")
        object.__setattr__(self, "quad", quad)
        object.__setattr__(self, "dont_care", bool(self.dont_care))
        object.__setattr__(self, "ignored", bool(self.ignored))
        object.__setattr__(self, "remain", float(self.remain))

    @property
    def counts(self) -> bool:
        """True when the instance contributes positive supervision."""
        return not (self.dont_care or self.ignored)


def parse_annotations(text: str) -> list:
    """Parse annotation lines; blank lines are skipped.

    Raises AnnotationParseError on malformed coordinates or degenerate
    quads, with a 1-based line number in the message.
    """
    annots = []
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.strip().lstrip("﻿").strip()
        if not line:
            continue
        parts = line.split(",", 8)
        if len(parts) < 8:
            raise AnnotationParseError(
                f"line {lineno}: expected 8 coordinates plus transcription, got {len(parts)} fields"
            )
        try:
            coords = [float(v) for v in parts[:8]]
        except ValueError as exc:
            raise AnnotationParseError(f"line {lineno}: bad coordinate: {exc}") from None
        transcription = parts[8].strip() if len(parts) > 8 else ""
        try:
            quad = Polygon(np.asarray(coords, dtype=np.float64).reshape(4, 2))
            annots.append(Annotation(quad, dont_care=transcription == DONT_CARE_TOKEN))
        except ValueError as exc:
            raise AnnotationParseError(f"line {lineno}: {exc}") from None
    return annots


def _format_coord(v: float) -> str:
    return str(int(v)) if v == int(v) else repr(v)


def format_annotations(annots) -> str:
    """Serialize back to the line format; excluded instances become "###".

    Annotations carry no transcription text, so live instances get a
    fixed placeholder word.
    """
    lines = []
    for a in annots:
        coords = ",".join(_format_coord(float(v)) for v in a.quad.vertices.ravel())
        word = _PLACEHOLDER_TEXT if a.counts else DONT_CARE_TOKEN
        lines.append(f"{coords},{word}")
    return "".join(line + "\n" for line in lines)


def scale_annotations(annots, factor: float) -> list:
    """Multiply every vertex by `factor` (e.g. 1/4 to reach map resolution)."""
    factor = float(factor)
    if not factor > 0:
        raise ValueError(f"scale factor must be > 0, got {factor}")
    return [replace(a, quad=Polygon(a.quad.vertices * factor)) for a in annots]


@dataclass(frozen=True, eq=False)
class LabelMaps:
    """Supervision maps for one image at prediction resolution.

    Encoder outputs additionally satisfy: pixel_label = 1 implies
    instance_id > 0, and link_label[y, x, k] = 1 implies the pixel and
    its k-th neighbor are both positive with equal instance_id. The
    constructor only checks shapes and value domains so maps loaded from
    files stay usable when instance ids were not saved.
    """

    pixel_label: np.ndarray
    instance_id: np.ndarray
    ignore_mask: np.ndarray
    link_label: np.ndarray

    def __post_init__(self):
        pixel = _checked_map(self.pixel_label, "pixel_label", np.uint8)
        h, w = pixel.shape
        ids = _checked_map(self.instance_id, "instance_id", np.int32, shape=(h, w), binary=False)
        ignore = _checked_map(self.ignore_mask, "ignore_mask", np.uint8, shape=(h, w))
        link = _checked_map(self.link_label, "link_label", np.uint8, shape=(h, w, 8))
        for name, arr in (
            ("pixel_label", pixel),
            ("instance_id", ids),
            ("ignore_mask", ignore),
            ("link_label", link),
        ):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def shape(self):
        return self.pixel_label.shape


def _checked_map(arr, name: str, dtype, shape=None, binary: bool = True) -> np.ndarray:
    a = np.asarray(arr)
    expect_ndim = len(shape) if shape is not None else 2
    if a.ndim != expect_ndim or (shape is not None and a.shape != shape):
        raise ShapeMismatch(f"{name}: expected shape {shape or '(H, W)'}, got {a.shape}")
    if binary:
        if not np.isin(a, (0, 1)).all():
            raise ShapeMismatch(f"{name} must contain only 0 and 1")
    else:
        if (np.mod(a, 1) != 0).any() or (a < 0).any():
            raise ShapeMismatch(f"{name} must contain non-negative integers")
    return np.ascontiguousarray(a.astype(dtype, copy=True))


@dataclass(frozen=True)
class InstanceStats:
    """Positive-area bookkeeping behind instance balancing.

    `areas[i]` is the positive-pixel count of instance id i+1, up to the
    largest id present in the map; instances that rasterized to nothing
    (or were fully overlap-suppressed) have area 0 and are excluded from
    `count`. `budget` is the per-instance weight total, total_area /
    count (0 when there are no live instances).
    """

    count: int
    areas: np.ndarray
    total_area: int
    budget: float


def encode_labels(annots, height: int, width: int) -> LabelMaps:
    """Rasterize annotations into LabelMaps.

    A pixel is positive only when covered by exactly one quad overall and
    that quad is live; overlapped pixels are negative for everyone.
    Do-not-care/ignored quads mask their pixels instead of labeling them.
    """
    if height < 1 or width < 1:
        raise ValueError("map dims must be >= 1")
    coverage = np.zeros((height, width), dtype=np.int32)
    owner = np.zeros((height, width), dtype=np.int32)
    ignore = np.zeros((height, width), dtype=np.uint8)

    next_id = 0
    for a in annots:
        inside = rasterize_polygon(a.quad, height, width).astype(bool)
        coverage[inside] += 1
        if a.counts:
            next_id += 1
            owner[inside] = next_id
        else:
            ignore[inside] = 1

    positive = (coverage == 1) & (owner > 0)
    pixel = positive.astype(np.uint8)
    ids = np.where(positive, owner, 0).astype(np.int32)

    link = np.zeros((height, width, 8), dtype=np.uint8)
    for k, (dx, dy) in enumerate(NEIGHBOR_OFFSETS):
        here, there = overlap_slices(height, width, dx, dy)
        link[here[0], here[1], k] = (
            positive[here] & positive[there] & (ids[here] == ids[there])
        )
    return LabelMaps(pixel, ids, ignore, link)


def instance_weights(labels: LabelMaps):
    """Instance-balanced positive-pixel weights, plus the stats behind them.

    Each live instance gets the same weight budget (total positive area /
    live instance count), spread uniformly over its own pixels, so small
    instances are not drowned out by large ones. Negative and ignored
    pixels get 0. Returns (weights (H, W) float64, InstanceStats).
    """
    positive = labels.pixel_label.astype(bool)
    ids = labels.instance_id
    max_id = int(ids.max(initial=0))
    areas = np.bincount(ids[positive].ravel(), minlength=max_id + 1)[1:]
    live = areas > 0
    count = int(live.sum())
    total = int(areas.sum())
    weights = np.zeros(ids.shape, dtype=np.float64)
    budget = 0.0
    if count:
        budget = total / count
        per_id = np.zeros(max_id + 1, dtype=np.float64)
        per_id[1:][live] = budget / areas[live]
        weights = per_id[ids] * positive
    return weights, InstanceStats(count=count, areas=areas, total_area=total, budget=budget)
