"""Planar polygon helpers: monotone-chain hull, shoelace area, centroid."""

from __future__ import annotations

import numpy as np

from .errors import DegenerateHullError


def cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def wedge2(a, b):
    """Scalar 2D wedge ``a_x b_y - a_y b_x`` (broadcasts over leading axes)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def convex_hull(points) -> np.ndarray:
    """Counter-clockwise convex hull by Andrew's monotone chain.

    Collinear boundary points are dropped. Raises DegenerateHullError when
    the points do not span a 2D region.
    """
    pts = np.unique(np.asarray(points, dtype=float).reshape(-1, 2), axis=0)
    if len(pts) < 3:
        raise DegenerateHullError("hull needs at least 3 distinct points")
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = [tuple(p) for p in pts[order]]

    def half(seq):
        chain = []
        for p in seq:
            while len(chain) >= 2 and cross(chain[-2], chain[-1], p) <= 0:
                chain.pop()
            chain.append(p)
        return chain

    lower = half(pts)
    upper = half(reversed(pts))
    hull = np.array(lower[:-1] + upper[:-1])
    if len(hull) < 3 or polygon_area(hull) <= 0:
        raise DegenerateHullError("points are collinear")
    return hull


def polygon_area(poly) -> float:
    """Signed shoelace area; positive for counter-clockwise vertices."""
    poly = np.asarray(poly, dtype=float)
    return 0.5 * float(np.sum(wedge2(poly, np.roll(poly, -1, axis=0))))


def polygon_centroid(poly) -> np.ndarray:
    poly = np.asarray(poly, dtype=float)
    # shift to the first vertex to limit cancellation for large pixel coordinates
    origin = poly[0]
    rel = poly - origin
    nxt = np.roll(rel, -1, axis=0)
    w = wedge2(rel, nxt)
    area = 0.5 * np.sum(w)
    if area == 0:
        raise DegenerateHullError("zero-area polygon has no centroid")
    c = np.sum((rel + nxt) * w[:, None], axis=0) / (6.0 * area)
    return origin + c


def point_in_convex(poly, x, tol: float = 1e-9) -> bool:
    poly = np.asarray(poly, dtype=float)
    nxt = np.roll(poly, -1, axis=0)
    return bool(np.all(wedge2(nxt - poly, np.asarray(x) - poly) >= -tol))
