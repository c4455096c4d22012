"""Inference post-processing: probability maps to oriented text boxes.

Pipeline: threshold the pixel/link probabilities separately, join
neighboring positive pixels whenever at least one of the two directed
link bits between them is on, take the minimum-area rotated rectangle of
each component's pixel-corner cloud, then drop boxes that are too thin
or too small.

Joining uses an undirected graph over positive pixels (edges from the
symmetrized link rule) and scipy's connected-components; ids are then
relabeled densely in row-major first-encounter order so results are
reproducible bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import EmptyInput, OutOfRangeProbability, ShapeMismatch
from .geometry import OrientedBox, min_area_rect
from .neighbors import NEIGHBOR_OFFSETS, opposite_link, overlap_slices

# forward half of the 8-neighborhood; the reverse arcs are covered by
# the opposite pixel's forward scan
_FORWARD_DIRS = tuple(
    (k, dx, dy) for k, (dx, dy) in enumerate(NEIGHBOR_OFFSETS) if (dy, dx) > (0, 0)
)


@dataclass(frozen=True)
class DecodeConfig:
    """Thresholds and filters for decoding one probability-map pair.

    scale_back converts map coordinates to input-image coordinates (2
    when predictions are at half resolution, 4 at quarter).
    """

    pixel_threshold: float = 0.8
    link_threshold: float = 0.8
    min_short_side: float = 10.0
    min_area: float = 300.0
    scale_back: float = 1.0

    def __post_init__(self):
        for name in ("pixel_threshold", "link_threshold"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.min_short_side < 0 or self.min_area < 0:
            raise ValueError("filter minimums must be >= 0")
        if self.scale_back < 1:
            raise ValueError(f"scale_back must be >= 1, got {self.scale_back}")


@dataclass(frozen=True, eq=False)
class ComponentMap:
    """Dense component labeling: 0 = background, ids 1..count."""

    labels: np.ndarray
    count: int

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 2:
            raise ShapeMismatch(f"labels must be 2D, got shape {labels.shape}")
        if int(labels.max(initial=0)) != self.count or (labels < 0).any():
            raise ValueError("component ids must be dense 1..count")
        labels = np.ascontiguousarray(labels.astype(np.int32, copy=True))
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)


@dataclass(frozen=True)
class DetectionSet:
    boxes: tuple
    dropped: int


def _checked_prob(arr, name: str, shape) -> np.ndarray:
    a = np.asarray(arr, dtype=np.float64)
    if a.shape != shape:
        raise ShapeMismatch(f"{name}: expected shape {shape}, got {a.shape}")
    if not np.isfinite(a).all() or (a < 0).any() or (a > 1).any():
        raise OutOfRangeProbability(f"{name} must lie in [0, 1]")
    return a


def threshold_maps(pixel_prob, link_prob, cfg: DecodeConfig):
    """Binarize with the >= convention; returns (pixel_bin, link_bin)."""
    pixel = np.asarray(pixel_prob)
    if pixel.ndim != 2:
        raise ShapeMismatch(f"pixel_prob must be (H, W), got shape {pixel.shape}")
    h, w = pixel.shape
    pixel = _checked_prob(pixel, "pixel_prob", (h, w))
    link = _checked_prob(link_prob, "link_prob", (h, w, 8))
    return (
        (pixel >= cfg.pixel_threshold).astype(np.uint8),
        (link >= cfg.link_threshold).astype(np.uint8),
    )


def link_components(pixel_bin, link_bin) -> ComponentMap:
    """Join positive pixels into components via the one-or-both link rule.

    Neighbors p, q merge iff p's link toward q or q's link toward p is
    on (and both pixels are positive). Component ids are assigned in
    row-major order of each component's first pixel.
    """
    pixel = np.ascontiguousarray(np.asarray(pixel_bin, dtype=bool))
    if pixel.ndim != 2:
        raise ShapeMismatch(f"pixel_bin must be (H, W), got shape {pixel.shape}")
    h, w = pixel.shape
    link = np.asarray(link_bin, dtype=bool)
    if link.shape != (h, w, 8):
        raise ShapeMismatch(f"link_bin: expected shape {(h, w, 8)}, got {link.shape}")

    labels = np.zeros((h, w), dtype=np.int32)
    flat_pos = np.flatnonzero(pixel.ravel())
    n = len(flat_pos)
    if n == 0:
        return ComponentMap(labels, 0)
    node = np.full(h * w, -1, dtype=np.int64)
    node[flat_pos] = np.arange(n)

    rows, cols = [], []
    for k, dx, dy in _FORWARD_DIRS:
        here, there = overlap_slices(h, w, dx, dy)
        joined = (
            pixel[here]
            & pixel[there]
            & (link[here[0], here[1], k] | link[there[0], there[1], opposite_link(k)])
        )
        hy, hx = np.nonzero(joined)
        rows.append((hy + here[0].start) * w + hx + here[1].start)
        cols.append((hy + there[0].start) * w + hx + there[1].start)
    src = node[np.concatenate(rows)]
    dst = node[np.concatenate(cols)]

    graph = csr_matrix((np.ones(len(src), dtype=np.int8), (src, dst)), shape=(n, n))
    count, raw = connected_components(graph, directed=False)

    # flat_pos is sorted, so first occurrence order is row-major order
    uniq, first = np.unique(raw, return_index=True)
    rank = np.empty(count, dtype=np.int32)
    rank[uniq[np.argsort(first)]] = np.arange(1, count + 1)
    labels.ravel()[flat_pos] = rank[raw]
    return ComponentMap(labels, count)


def _component_box(xs, ys, scale: float) -> OrientedBox:
    """Min-area rect of the pixel-corner cloud, reduced per row first.

    Only row-extreme corners can lie on the corner cloud's hull, so the
    candidate set {xmin, xmax+1} x {y, y+1} per occupied row is enough.
    """
    uy, inv = np.unique(ys, return_inverse=True)
    xmin = np.full(len(uy), np.inf)
    xmax = np.full(len(uy), -np.inf)
    np.minimum.at(xmin, inv, xs)
    np.maximum.at(xmax, inv, xs)
    xmax += 1.0
    top, bot = uy.astype(np.float64), uy + 1.0
    corners = np.concatenate(
        [
            np.stack([xmin, top], axis=1),
            np.stack([xmax, top], axis=1),
            np.stack([xmin, bot], axis=1),
            np.stack([xmax, bot], axis=1),
        ]
    )
    box = min_area_rect(corners)
    return OrientedBox(box.cx * scale, box.cy * scale, box.w * scale, box.h * scale, box.theta)


def extract_boxes(components: ComponentMap, cfg: DecodeConfig) -> list:
    """One oriented box per component, in input-image coordinates.

    Boxes cover pixel squares (corner points), so a lone pixel yields a
    1x1 box and box area matches pixel count for solid rectangles.
    """
    ys, xs = np.nonzero(components.labels)
    ids = components.labels[ys, xs]
    order = np.argsort(ids, kind="stable")
    xs, ys, ids = xs[order], ys[order], ids[order]
    starts = np.searchsorted(ids, np.arange(1, components.count + 1))
    bounds = np.append(starts, len(ids))
    return [
        _component_box(xs[bounds[i] : bounds[i + 1]], ys[bounds[i] : bounds[i + 1]], cfg.scale_back)
        for i in range(components.count)
    ]


def post_filter(boxes, cfg: DecodeConfig) -> DetectionSet:
    """Drop boxes thinner than min_short_side or smaller than min_area."""
    kept = tuple(
        b for b in boxes if b.short_side >= cfg.min_short_side and b.area >= cfg.min_area
    )
    return DetectionSet(kept, dropped=len(boxes) - len(kept))


def decode(pixel_prob, link_prob, cfg: DecodeConfig = DecodeConfig()) -> DetectionSet:
    """threshold -> join -> box per component -> filter."""
    pixel_bin, link_bin = threshold_maps(pixel_prob, link_prob, cfg)
    components = link_components(pixel_bin, link_bin)
    return post_filter(extract_boxes(components, cfg), cfg)


def percentile_threshold(values, keep_fraction: float) -> float:
    """Cutoff t with at least keep_fraction of values >= t.

    Taken as the (1 - keep_fraction) quantile with lower interpolation,
    which lands on an actual data value (integer stats stay integers)
    and errs toward keeping more rather than fewer.
    """
    vals = np.asarray(values, dtype=np.float64).ravel()
    if vals.size == 0:
        raise EmptyInput("no values to take a percentile of")
    if not 0.0 < keep_fraction <= 1.0:
        raise ValueError(f"keep_fraction must be in (0, 1], got {keep_fraction}")
    return float(np.percentile(vals, (1.0 - keep_fraction) * 100.0, method="lower"))
