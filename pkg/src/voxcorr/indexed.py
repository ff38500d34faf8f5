"""Indexed points: duals of local linear fits in parallel coordinates.

A fitted line (1-flat) in an adjacent-attribute pair maps to a point; a
fitted plane (2-flat) over an attribute triple maps to a point through its
generating dual line. The angle-uniform transform then bounds every dual
in a band of width 3d per subspace, with the horizontal coordinate affine
in the Cartesian orientation angle and the vertical coordinate encoding
the line's signed offset from the data-domain center.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .fitting import FitVolume, LocalFit

V_CLAMP = (-0.25, 1.25)
DIR_EPS = 1e-9


@dataclass
class AxisLayout:
    m: int
    d: float = 1.0

    def __post_init__(self):
        if self.m < 2:
            raise ValueError("need at least 2 axes")
        self.axis_x = np.arange(self.m, dtype=np.float64) * self.d

    def band(self, subspace: int) -> tuple[float, float]:
        """Horizontal extent of a subspace's bounded band (width 3d)."""
        x_left = float(self.axis_x[subspace])
        return x_left - self.d, x_left + 2.0 * self.d


@dataclass
class HomogeneousLine:
    """Canonical line c1*a + c2*b + c3 = 0 with (c1, c2) = (-sin phi, cos phi)."""
    c1: float
    c2: float
    c3: float
    phi: float          # Cartesian orientation in [0, pi)


@dataclass
class IndexedPoint:
    u: float
    v: float
    subspace: int
    flat_order: int = 1


@dataclass
class Plane2Flat:
    normal: np.ndarray          # (3,) unit normal of the fitted plane
    offset: float               # n . xi
    line: HomogeneousLine | None    # generating dual line (None = degenerate)
    pre_point: tuple[float, float]  # indexed point before the bounded transform


@dataclass
class IndexedPointVolume:
    layout: AxisLayout
    axis_order: tuple[int, ...]
    dims: tuple[int, int, int]
    pair_u: np.ndarray          # (m-1, V)
    pair_v: np.ndarray
    pair_skip: np.ndarray       # (m-1, V) bool
    triple_u: np.ndarray | None = None    # (m-2, V)
    triple_v: np.ndarray | None = None
    triple_skip: np.ndarray | None = None

    @property
    def n_pairs(self) -> int:
        return self.pair_u.shape[0]

    @property
    def n_triples(self) -> int:
        return 0 if self.triple_u is None else self.triple_u.shape[0]


def fold_angle(phi: np.ndarray) -> np.ndarray:
    """Fold an angle into line-orientation range [0, pi)."""
    out = np.mod(phi, math.pi)
    return np.where(np.isclose(out, math.pi), 0.0, out)


def _canonical_lines(points: np.ndarray, dirs: np.ndarray):
    """Vectorized canonical homogeneous lines through `points` along `dirs`.

    points/dirs are (N, 2). Returns (phi, c) with c (N, 3), plus a defined
    mask; undefined rows (near-zero direction) keep zeros.
    """
    defined = np.hypot(dirs[:, 0], dirs[:, 1]) >= DIR_EPS
    phi = np.zeros(points.shape[0])
    phi[defined] = fold_angle(np.arctan2(dirs[defined, 1], dirs[defined, 0]))
    c = np.zeros((points.shape[0], 3))
    c[:, 0] = -np.sin(phi)
    c[:, 1] = np.cos(phi)
    c[:, 2] = -(c[:, 0] * points[:, 0] + c[:, 1] * points[:, 1])
    c[~defined] = 0.0
    return phi, c, defined


def _canonicalize_raw_lines(c_raw: np.ndarray):
    """Canonical (phi, c) from arbitrary-scale homogeneous lines (N, 3)."""
    norm = np.hypot(c_raw[:, 0], c_raw[:, 1])
    defined = norm >= DIR_EPS
    c = np.zeros_like(c_raw)
    c[defined] = c_raw[defined] / norm[defined, None]
    # direction (c2, -c1); fold and rebuild so c2 = cos(phi) exactly
    phi = np.zeros(c_raw.shape[0])
    phi[defined] = fold_angle(np.arctan2(-c[defined, 0], c[defined, 1]))
    flip = defined & (c[:, 0] * (-np.sin(phi)) + c[:, 1] * np.cos(phi) < 0.0)
    c[flip] *= -1.0
    return phi, c, defined


def angle_uniform_arrays(phi: np.ndarray, c: np.ndarray, x_left: float, d: float):
    """Bounded (u, v) from canonical lines.

    u is affine in the folded angle (phi - pi/4) mod pi, spanning exactly
    [x_left - d, x_left + 2d]; slope -1 lands on the inter-axis midpoint
    and slope +1 on the band edges. v encodes the signed perpendicular
    offset of the line from the data-domain center (1/2, 1/2), clamped.
    """
    u = x_left - d + 3.0 * d * np.mod(phi - math.pi / 4.0, math.pi) / math.pi
    s = -(0.5 * c[:, 0] + 0.5 * c[:, 1] + c[:, 2])
    v = np.clip(0.5 + s / math.sqrt(2.0), V_CLAMP[0], V_CLAMP[1])
    return u, v


def angle_uniform(line: HomogeneousLine, x_left: float, d: float) -> tuple[float, float]:
    u, v = angle_uniform_arrays(
        np.array([line.phi]), np.array([[line.c1, line.c2, line.c3]]), x_left, d)
    return float(u[0]), float(v[0])


def line_dual_point(line: HomogeneousLine, x_left: float, d: float) -> tuple[float, float]:
    """Classic (unbounded) parallel-coordinates dual point of a Cartesian line.

    All polyline segments of points on the line pass through it. Infinite
    for slope-1 lines (c1 + c2 = 0).
    """
    denom = line.c1 + line.c2
    if abs(denom) < 1e-300:
        return math.inf, math.inf
    return x_left + d * line.c2 / denom, -line.c3 / denom


def dual_1flat(fit: LocalFit, pair: tuple[int, int],
               layout: AxisLayout) -> HomogeneousLine | None:
    """Line through the fit's value point along e1, projected to one pair.

    Returns None when the projected direction vanishes (such voxels are
    skipped during splatting).
    """
    i, j = pair
    point = np.array([[fit.xi[i], fit.xi[j]]])
    direction = np.array([[fit.e1[i], fit.e1[j]]])
    phi, c, defined = _canonical_lines(point, direction)
    if not defined[0]:
        return None
    return HomogeneousLine(c1=float(c[0, 0]), c2=float(c[0, 1]),
                           c3=float(c[0, 2]), phi=float(phi[0]))


def _plane_generating_lines(normals: np.ndarray, offsets: np.ndarray):
    """Raw generating dual lines of planes n.x = k over an axis triple.

    The plane's first indexed point in axes at (0, d, 2d) sits at
    (d*(n2 + 2*n3)/S, k/S) with S = n1+n2+n3; the line below is the unique
    Cartesian line whose pair dual lands on that point, kept in
    homogeneous form so planes with S ~ 0 stay finite.
    """
    n1, n2, n3 = normals[:, 0], normals[:, 1], normals[:, 2]
    return np.stack([n1 - n3, n2 + 2.0 * n3, -offsets], axis=-1)


def plane_pre_point(normal: np.ndarray, offset: float, d: float) -> tuple[float, float]:
    """First indexed point of a plane, in the subspace's unbounded plane."""
    s = float(normal.sum())
    if abs(s) < 1e-300:
        return math.inf, math.inf
    return d * float(normal[1] + 2.0 * normal[2]) / s, offset / s


def dual_2flat(fit: LocalFit, triple: tuple[int, int, int],
               layout: AxisLayout) -> Plane2Flat | None:
    """Plane spanned by (e1, e2) at xi, projected to one attribute triple.

    Returns None when the projected eigenvectors are collinear. Planes
    whose dual degenerates entirely carry line=None and are skipped.
    """
    if not fit.valid2flat:
        return None
    t = list(triple)
    e1p, e2p = fit.e1[t], fit.e2[t]
    n = np.cross(e1p, e2p)
    norm = np.linalg.norm(n)
    if norm < DIR_EPS:
        return None
    n = n / norm
    k = float(n @ fit.xi[t])
    raw = _plane_generating_lines(n[None], np.array([k]))
    phi, c, defined = _canonicalize_raw_lines(raw)
    line = None
    if defined[0]:
        line = HomogeneousLine(c1=float(c[0, 0]), c2=float(c[0, 1]),
                               c3=float(c[0, 2]), phi=float(phi[0]))
    return Plane2Flat(normal=n, offset=k, line=line,
                      pre_point=plane_pre_point(n, k, layout.d))


def build_indexed_volumes(fitvol: FitVolume, layout: AxisLayout,
                          do2flat: bool = False,
                          axis_order: tuple[int, ...] | None = None) -> IndexedPointVolume:
    """Per-voxel bounded indexed points for every pair (and triple) subspace."""
    m = fitvol.m
    if layout.m != m:
        raise ValueError("layout axis count != fit attribute count")
    order = tuple(axis_order) if axis_order is not None else tuple(range(m))
    if sorted(order) != list(range(m)):
        raise ValueError(f"axis_order must permute 0..{m - 1}")
    v = fitvol.n_voxels

    pair_u = np.zeros((m - 1, v))
    pair_v = np.zeros((m - 1, v))
    pair_skip = np.zeros((m - 1, v), dtype=bool)
    for p in range(m - 1):
        i, j = order[p], order[p + 1]
        pts = fitvol.xi[:, (i, j)]
        dirs = fitvol.e1[:, (i, j)]
        phi, c, defined = _canonical_lines(pts, dirs)
        x_left = float(layout.axis_x[p])
        u, vv = angle_uniform_arrays(phi, c, x_left, layout.d)
        pair_u[p], pair_v[p] = u, vv
        pair_skip[p] = ~defined

    triple_u = triple_v = triple_skip = None
    if do2flat:
        if m < 3:
            raise ValueError("2-flats need at least 3 attributes")
        triple_u = np.zeros((m - 2, v))
        triple_v = np.zeros((m - 2, v))
        triple_skip = np.zeros((m - 2, v), dtype=bool)
        for p in range(m - 2):
            cols = [order[p], order[p + 1], order[p + 2]]
            e1p = fitvol.e1[:, cols]
            e2p = fitvol.e2[:, cols]
            n = np.cross(e1p, e2p)
            norm = np.linalg.norm(n, axis=1)
            spanned = (norm >= DIR_EPS) & fitvol.valid2flat
            n_unit = np.zeros_like(n)
            n_unit[spanned] = n[spanned] / norm[spanned, None]
            k = np.einsum("ij,ij->i", n_unit, fitvol.xi[:, cols])
            raw = _plane_generating_lines(n_unit, k)
            phi, c, defined = _canonicalize_raw_lines(raw)
            x_left = float(layout.axis_x[p])
            u, vv = angle_uniform_arrays(phi, c, x_left, layout.d)
            triple_u[p], triple_v[p] = u, vv
            triple_skip[p] = ~(spanned & defined)

    return IndexedPointVolume(layout=layout, axis_order=order, dims=fitvol.dims,
                              pair_u=pair_u, pair_v=pair_v, pair_skip=pair_skip,
                              triple_u=triple_u, triple_v=triple_v,
                              triple_skip=triple_skip)
