"""Spatial index over weighted points with disk, box, and polygon queries.

Thin wrapper around scipy's balanced cKDTree, carrying per-point masses
and payload ids; serves density-estimation mass lookups and
brushing-and-linking region queries.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree


def point_in_polygon(points: np.ndarray, vertices: np.ndarray) -> np.ndarray:
    """Even-odd rule containment test; points (N, 2), vertices (P, 2)."""
    pts = np.asarray(points, dtype=np.float64)
    poly = np.asarray(vertices, dtype=np.float64)
    x, y = pts[:, 0], pts[:, 1]
    inside = np.zeros(len(pts), dtype=bool)
    p = len(poly)
    for i in range(p):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % p]
        crosses = (y0 > y) != (y1 > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            x_at = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
        inside ^= crosses & (x < np.where(crosses, x_at, np.inf))
    return inside


class PointIndex:
    """Balanced k-d index over points with masses and optional payload ids."""

    def __init__(self, points: np.ndarray, masses: np.ndarray | None = None,
                 ids: np.ndarray | None = None):
        self.points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        self.n = self.points.shape[0]
        self.k = self.points.shape[1] if self.n else 0
        self.masses = (np.ones(self.n) if masses is None
                       else np.asarray(masses, dtype=np.float64))
        self.ids = (np.arange(self.n) if ids is None
                    else np.asarray(ids))
        self.total_mass = float(self.masses.sum())
        self._tree = cKDTree(self.points) if self.n else None

    def query_disk(self, center, r: float) -> np.ndarray:
        """Indices of points within distance r of center (inclusive)."""
        if self._tree is None:
            return np.empty(0, dtype=np.intp)
        idx = self._tree.query_ball_point(np.asarray(center, dtype=np.float64), r)
        return np.asarray(sorted(idx), dtype=np.intp)

    def disk_mass(self, center, r: float) -> float:
        return float(self.masses[self.query_disk(center, r)].sum())

    def query_rect(self, lo, hi) -> np.ndarray:
        """Indices inside the closed axis-aligned box [lo, hi]."""
        if self._tree is None:
            return np.empty(0, dtype=np.intp)
        lo = np.asarray(lo, dtype=np.float64)
        hi = np.asarray(hi, dtype=np.float64)
        center = (lo + hi) / 2.0
        radius = float(np.linalg.norm(hi - center)) + 1e-12
        cand = self.query_disk(center, radius)
        pts = self.points[cand]
        keep = np.all((pts >= lo) & (pts <= hi), axis=1)
        return cand[keep]

    def query_polygon(self, vertices: np.ndarray) -> np.ndarray:
        """Indices inside a simple polygon (2D indexes only)."""
        if self.k != 2:
            raise ValueError("polygon queries need 2D points")
        if self._tree is None:
            return np.empty(0, dtype=np.intp)
        poly = np.asarray(vertices, dtype=np.float64)
        cand = self.query_rect(poly.min(axis=0), poly.max(axis=0))
        keep = point_in_polygon(self.points[cand], poly)
        return cand[keep]
