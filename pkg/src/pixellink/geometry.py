"""Computational geometry kernel.

Convex hull (monotone chain), minimum-area rotated rectangle (edge-aligned
rotating scan over hull edges), convex polygon intersection / IoU
(Sutherland-Hodgman), and polygon rasterization against pixel centers.

Conventions used throughout:
  * points are (x, y) pairs, arrays of shape (N, 2), float64
  * polygons are stored counter-clockwise (in the mathematical sense,
    positive shoelace area)
  * pixel (x, y) covers the unit square [x, x+1) x [y, y+1); its center
    sits at (x + 0.5, y + 0.5) and points on a polygon edge count as inside
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometry

_HALF_PI = math.pi / 2.0


def _as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError(f"expected points of shape (N, 2), got {pts.shape}")
    if not np.isfinite(pts).all():
        raise ValueError("points must be finite")
    return pts


def _signed_area(verts: np.ndarray) -> float:
    x, y = verts[:, 0], verts[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


@dataclass(frozen=True, eq=False)
class Polygon:
    """Simple polygon, >= 3 distinct vertices, normalized counter-clockwise."""

    vertices: np.ndarray

    def __post_init__(self):
        verts = _as_points(self.vertices)
        # collapse exact consecutive duplicates (wrap-around pair included)
        keep = np.any(verts != np.roll(verts, 1, axis=0), axis=1)
        verts = verts[keep]
        if len(verts) < 3:
            raise ValueError("polygon needs at least 3 distinct vertices")
        if _signed_area(verts) < 0:
            verts = verts[::-1]
        verts = np.ascontiguousarray(verts)
        verts.setflags(write=False)
        object.__setattr__(self, "vertices", verts)


def as_polygon(p) -> Polygon:
    return p if isinstance(p, Polygon) else Polygon(np.asarray(p, dtype=np.float64))


def _vertex_array(p) -> np.ndarray:
    return p.vertices if isinstance(p, Polygon) else _as_points(p)


@dataclass(frozen=True, eq=False)
class OrientedBox:
    """Rotated rectangle: center, side lengths and rotation of the w side.

    Normalized so that w >= h and theta lies in [0, pi) (mod pi/2 for
    squares), which makes the representation unique.
    """

    cx: float
    cy: float
    w: float
    h: float
    theta: float

    def __post_init__(self):
        cx, cy, w, h, theta = (float(v) for v in (self.cx, self.cy, self.w, self.h, self.theta))
        if not all(math.isfinite(v) for v in (cx, cy, w, h, theta)):
            raise ValueError("box parameters must be finite")
        if w < 0 or h < 0:
            raise ValueError("box sides must be >= 0")
        theta = theta % math.pi
        if w < h:
            w, h = h, w
            theta = (theta + _HALF_PI) % math.pi
        if w == h:
            theta = theta % _HALF_PI
        for name, val in (("cx", cx), ("cy", cy), ("w", w), ("h", h), ("theta", theta)):
            object.__setattr__(self, name, val)

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def short_side(self) -> float:
        return min(self.w, self.h)

    def vertices(self) -> np.ndarray:
        """Corner points, shape (4, 2), counter-clockwise."""
        c, s = math.cos(self.theta), math.sin(self.theta)
        hw, hh = self.w / 2.0, self.h / 2.0
        local = np.array([[-hw, -hh], [hw, -hh], [hw, hh], [-hw, hh]])
        rot = np.array([[c, -s], [s, c]])
        return local @ rot.T + np.array([self.cx, self.cy])


def convex_hull(points) -> Polygon:
    """Smallest convex polygon containing the points, CCW, strictly convex.

    Raises DegenerateGeometry when all points are coincident or collinear.
    """
    pts = _as_points(points)
    if len(pts) == 0:
        raise ValueError("need at least one point")
    pts = np.unique(pts, axis=0)
    if len(pts) < 3:
        raise DegenerateGeometry(f"{len(pts)} distinct point(s), no 2D hull")
    eps = 1e-9 * max(1.0, float(np.abs(pts).max()))
    coords = pts.tolist()

    def build(chain_pts):
        chain = []
        for p in chain_pts:
            while len(chain) >= 2:
                ox, oy = chain[-2]
                ax, ay = chain[-1]
                if (ax - ox) * (p[1] - oy) - (ay - oy) * (p[0] - ox) <= eps:
                    chain.pop()
                else:
                    break
            chain.append(p)
        return chain

    lower = build(coords)
    upper = build(coords[::-1])
    hull = lower[:-1] + upper[:-1]
    if len(hull) < 3:
        raise DegenerateGeometry("all points collinear")
    return Polygon(np.asarray(hull))


def min_area_rect(points) -> OrientedBox:
    """Minimum-area rotated rectangle enclosing the points.

    The optimum has one side collinear with a hull edge, so only hull-edge
    orientations are scanned. Collinear input degenerates to h = 0, a single
    point to w = h = 0.
    """
    pts = _as_points(points)
    if len(pts) == 0:
        raise ValueError("need at least one point")
    uniq = np.unique(pts, axis=0)
    if len(uniq) == 1:
        x, y = uniq[0]
        return OrientedBox(x, y, 0.0, 0.0, 0.0)
    try:
        hull = convex_hull(uniq).vertices
    except DegenerateGeometry:
        # collinear: lexicographic extremes are the segment endpoints
        d = uniq[-1] - uniq[0]
        u = d / math.hypot(*d)
        t = (uniq - uniq[0]) @ u
        center = uniq[0] + u * (float(t.min()) + float(t.max())) / 2.0
        return OrientedBox(
            center[0], center[1], float(t.max() - t.min()), 0.0, math.atan2(u[1], u[0])
        )

    edges = np.roll(hull, -1, axis=0) - hull
    best = None
    for ex, ey in edges:
        length = math.hypot(ex, ey)
        ux, uy = ex / length, ey / length
        pu = hull @ (ux, uy)
        pv = hull @ (-uy, ux)
        w = float(pu.max() - pu.min())
        h = float(pv.max() - pv.min())
        if best is None or w * h < best[0]:
            cu = (float(pu.max()) + float(pu.min())) / 2.0
            cv = (float(pv.max()) + float(pv.min())) / 2.0
            best = (w * h, cu * ux - cv * uy, cu * uy + cv * ux, w, h, math.atan2(uy, ux))
    _, cx, cy, w, h, theta = best
    return OrientedBox(cx, cy, w, h, theta)


def polygon_area(p) -> float:
    """Shoelace area, non-negative."""
    return abs(_signed_area(_vertex_array(p)))


def clip_polygon(subject, clip) -> np.ndarray:
    """Sutherland-Hodgman: clip `subject` by the convex polygon `clip`.

    Returns the intersection vertices as an (M, 2) array; M may be < 3 when
    the intersection is empty or degenerate. Points on a clip edge are kept.
    """
    out = [tuple(p) for p in _vertex_array(subject)]
    clip_v = _vertex_array(clip)
    if _signed_area(clip_v) < 0:
        clip_v = clip_v[::-1]
    clip_list = clip_v.tolist()

    for i in range(len(clip_list)):
        ax, ay = clip_list[i]
        bx, by = clip_list[(i + 1) % len(clip_list)]
        if not out:
            break
        inp = out
        out = []
        sx, sy = inp[-1]
        s_in = (bx - ax) * (sy - ay) - (by - ay) * (sx - ax) >= 0
        for ex, ey in inp:
            e_in = (bx - ax) * (ey - ay) - (by - ay) * (ex - ax) >= 0
            if e_in != s_in:
                dcx, dcy = ax - bx, ay - by
                dpx, dpy = sx - ex, sy - ey
                den = dcx * dpy - dcy * dpx
                if den != 0:
                    n1 = ax * by - ay * bx
                    n2 = sx * ey - sy * ex
                    out.append(((n1 * dpx - n2 * dcx) / den, (n1 * dpy - n2 * dcy) / den))
            if e_in:
                out.append((ex, ey))
            sx, sy, s_in = ex, ey, e_in
    return np.asarray(out, dtype=np.float64).reshape(-1, 2)


def convex_polygon_iou(a, b) -> float:
    """Intersection-over-union of two convex polygons, in [0, 1]."""
    va, vb = _vertex_array(a), _vertex_array(b)
    area_a, area_b = abs(_signed_area(va)), abs(_signed_area(vb))
    inter_v = clip_polygon(va, vb)
    inter = abs(_signed_area(inter_v)) if len(inter_v) >= 3 else 0.0
    union = area_a + area_b - inter
    if union <= 0.0:
        return 0.0
    return min(1.0, max(0.0, inter / union))


def rasterize_polygon(p, height: int, width: int) -> np.ndarray:
    """Binary (H, W) uint8 mask of pixels whose center lies inside `p`.

    Pixel centers are (x + 0.5, y + 0.5); boundary points count as inside.
    Even-odd rule, so vertex orientation does not matter.
    """
    if height < 1 or width < 1:
        raise ValueError("mask dims must be >= 1")
    verts = _vertex_array(p)
    mask = np.zeros((height, width), dtype=np.uint8)

    x0 = max(0, int(math.floor(verts[:, 0].min())) - 1)
    x1 = min(width - 1, int(math.ceil(verts[:, 0].max())) + 1)
    y0 = max(0, int(math.floor(verts[:, 1].min())) - 1)
    y1 = min(height - 1, int(math.ceil(verts[:, 1].max())) + 1)
    if x0 > x1 or y0 > y1:
        return mask

    cx = np.arange(x0, x1 + 1, dtype=np.float64) + 0.5
    cy = np.arange(y0, y1 + 1, dtype=np.float64) + 0.5
    px = cx[None, :]
    py = cy[:, None]

    tol = 1e-9 * max(1.0, float(np.abs(verts).max()), cx[-1], cy[-1])
    crossings = np.zeros((len(cy), len(cx)), dtype=np.int32)
    on_edge = np.zeros_like(crossings, dtype=bool)

    n = len(verts)
    for i in range(n):
        x1v, y1v = verts[i]
        x2v, y2v = verts[(i + 1) % n]
        dx, dy = x2v - x1v, y2v - y1v
        seg2 = dx * dx + dy * dy
        if seg2 == 0.0:
            continue
        if dy != 0.0:
            cond = (y1v > py) != (y2v > py)
            xint = x1v + (py - y1v) * dx / dy
            crossings += cond & (px < xint)
        seg = math.sqrt(seg2)
        cross = dx * (py - y1v) - dy * (px - x1v)
        dot = (px - x1v) * dx + (py - y1v) * dy
        on_edge |= (np.abs(cross) <= tol * seg) & (dot >= -tol * seg) & (dot <= seg2 + tol * seg)

    mask[y0 : y1 + 1, x0 : x1 + 1] = ((crossings % 2 == 1) | on_edge).astype(np.uint8)
    return mask


def axis_aligned_bbox(box: OrientedBox) -> Polygon:
    """Tight axis-aligned rectangle over the box corners."""
    v = box.vertices()
    xmin, ymin = v.min(axis=0)
    xmax, ymax = v.max(axis=0)
    return Polygon(np.array([[xmin, ymin], [xmax, ymin], [xmax, ymax], [xmin, ymax]]))
