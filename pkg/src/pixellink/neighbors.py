"""Eight-neighbor convention shared by label encoding and decoding.

Directions are indexed k = 0..7 in row-major scan order over the 3x3
neighborhood (top-left to bottom-right, center skipped):

    k       0        1       2       3       4       5       6       7
    (dx,dy) (-1,-1)  (0,-1)  (1,-1)  (-1,0)  (1,0)   (-1,1)  (0,1)   (1,1)

x grows rightward (columns), y grows downward (rows). The reverse of
direction k is 7 - k.
"""

NEIGHBOR_OFFSETS = ((-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1))


def opposite_link(k: int) -> int:
    return 7 - k


def overlap_slices(height: int, width: int, dx: int, dy: int):
    """Slice pairs aligning each pixel with its (dx, dy) neighbor.

    Returns (here, there), each a (rows, cols) slice tuple, such that
    map[here] and map[there] have equal shape and map[there] holds the
    neighbor of the corresponding pixel in map[here]. Pixels whose
    neighbor falls outside the map are excluded.
    """
    y0, y1 = max(0, -dy), max(max(0, -dy), min(height, height - dy))
    x0, x1 = max(0, -dx), max(max(0, -dx), min(width, width - dx))
    here = (slice(y0, y1), slice(x0, x1))
    there = (slice(y0 + dy, y1 + dy), slice(x0 + dx, x1 + dx))
    return here, there
