"""Detection scoring: IoU matching and precision/recall/F-score.

Protocol: one-to-one greedy matching in descending IoU order at a fixed
threshold (0.5), detections swallowed by do-not-care regions removed
first, do-not-care ground truth excluded from the counts. Dataset
results are micro-averaged: match/gt/detection counts are summed over
images before computing the ratios.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .errors import EmptyDataset, MissingPair
from .geometry import as_polygon, clip_polygon, convex_polygon_iou, polygon_area


@dataclass(frozen=True)
class EvalConfig:
    """iou_thresh gates matches; dontcare_overlap is the detection-area
    fraction above which a do-not-care region absorbs a detection."""

    iou_thresh: float = 0.5
    dontcare_overlap: float = 0.5

    def __post_init__(self):
        for name in ("iou_thresh", "dontcare_overlap"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")


@dataclass(frozen=True)
class Metrics:
    recall: float
    precision: float
    fscore: float
    matches: int
    num_gt: int
    num_det: int


def filter_dontcare(dets, dontcare_gts, tau: float = 0.5) -> list:
    """Drop detections mostly covered by a do-not-care region.

    A detection is removed when intersection area with some region,
    divided by the detection's own area, strictly exceeds tau.
    """
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must be in [0, 1], got {tau}")
    regions = [as_polygon(g) for g in dontcare_gts]
    kept = []
    for det in dets:
        det = as_polygon(det)
        area = polygon_area(det)
        absorbed = False
        if area > 0:
            for region in regions:
                inter = clip_polygon(region, det)
                if len(inter) >= 3 and polygon_area(inter) / area > tau:
                    absorbed = True
                    break
        if not absorbed:
            kept.append(det)
    return kept


def match_greedy(dets, gts, iou_thresh: float = 0.5) -> list:
    """One-to-one matching, best IoU first.

    Pairs are visited in descending IoU, ties broken by detection index
    then ground-truth index; a pair is accepted when IoU >= iou_thresh
    and neither side is taken. Returns (det index, gt index) pairs.
    Polygons are expected convex.
    """
    dets = [as_polygon(d) for d in dets]
    gts = [as_polygon(g) for g in gts]
    scored = []
    for gi, gt in enumerate(gts):
        for di, det in enumerate(dets):
            iou = convex_polygon_iou(gt, det)
            if iou >= iou_thresh:
                scored.append((-iou, di, gi))
    scored.sort()
    det_used = [False] * len(dets)
    gt_used = [False] * len(gts)
    pairs = []
    for _, di, gi in scored:
        if not det_used[di] and not gt_used[gi]:
            det_used[di] = True
            gt_used[gi] = True
            pairs.append((di, gi))
    return pairs


def compute_metrics(matches: int, num_gt: int, num_det: int) -> Metrics:
    """Precision/recall over counts; empty denominators give 0."""
    if min(matches, num_gt, num_det) < 0:
        raise ValueError("counts must be >= 0")
    if matches > min(num_gt, num_det):
        raise ValueError("more matches than pairs available")
    recall = matches / num_gt if num_gt else 0.0
    precision = matches / num_det if num_det else 0.0
    fscore = (
        2.0 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    )
    return Metrics(recall, precision, fscore, matches, num_gt, num_det)


def evaluate_image(dets, gt_annots, cfg: EvalConfig = EvalConfig()) -> Metrics:
    """Score one image: detections vs parsed ground-truth annotations.

    Ground truth flagged do-not-care (or ignored) is excluded from the
    counts and instead absorbs overlapping detections.
    """
    care = [a.quad for a in gt_annots if a.counts]
    excluded = [a.quad for a in gt_annots if not a.counts]
    kept = filter_dontcare(dets, excluded, cfg.dontcare_overlap)
    pairs = match_greedy(kept, care, cfg.iou_thresh)
    return compute_metrics(len(pairs), len(care), len(kept))


def image_id(path) -> str:
    """Pairing key for a detection/ground-truth file.

    The stem with a leading "gt_" or "res_" tag removed, so
    gt_img_1.txt and res_img_1.txt both map to img_1.
    """
    stem = Path(path).stem
    for prefix in ("gt_", "res_"):
        if stem.startswith(prefix):
            return stem[len(prefix) :]
    return stem


def evaluate_dataset(
    dets_by_image: dict, gts_by_image: dict, cfg: EvalConfig = EvalConfig()
) -> Metrics:
    """Micro-average over a dataset.

    Both mappings are keyed by image id; every id must appear in both
    (MissingPair otherwise), and there must be at least one image
    (EmptyDataset). Counts are summed across images before the ratios
    are taken, so the result is independent of image order.
    """
    if not gts_by_image and not dets_by_image:
        raise EmptyDataset("no images to evaluate")
    missing_det = sorted(set(gts_by_image) - set(dets_by_image))
    missing_gt = sorted(set(dets_by_image) - set(gts_by_image))
    if missing_det:
        raise MissingPair(f"no detections for image(s): {', '.join(missing_det)}")
    if missing_gt:
        raise MissingPair(f"no ground truth for image(s): {', '.join(missing_gt)}")

    matches = num_gt = num_det = 0
    for key in sorted(gts_by_image):
        m = evaluate_image(dets_by_image[key], gts_by_image[key], cfg)
        matches += m.matches
        num_gt += m.num_gt
        num_det += m.num_det
    return compute_metrics(matches, num_gt, num_det)
