"""Transfer-function brushes on the indexed-point plane and voxel classification.

Widgets (rectangles or lassos) match indexed points by subspace and
containment, with a circular falloff from the widget centroid. Widgets
sharing a tID form an AND group; distinct groups combine with OR. Axis
brushes gate the result on raw value intervals. Classification composites
per-voxel matches across subspaces by maximum opacity and derives the
extinction grid used by the renderer.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .fitting import FitVolume
from .indexed import IndexedPointVolume
from .kdtree import PointIndex, point_in_polygon
from .volume import MultivariateVolume

ALPHA_MAX = 0.999


@dataclass
class BrushWidget:
    shape: str                                  # "rect" | "lasso"
    rect: tuple[float, float, float, float] | None = None   # u0, v0, u1, v1
    polygon: np.ndarray | None = None           # (P, 2) closed implicitly
    sID: int = -1                               # -1 = any subspace of this flat kind
    flat: int = 1                               # 1-flat or 2-flat layer
    tID: int = 0
    color: tuple[float, float, float] = (1.0, 0.8, 0.2)
    opacity: float = 0.8
    falloff: float = 1.0                        # fraction of centroid->boundary at full strength

    def __post_init__(self):
        if self.shape == "rect":
            u0, v0, u1, v1 = self.rect
            self.rect = (min(u0, u1), min(v0, v1), max(u0, u1), max(v0, v1))
        elif self.shape == "lasso":
            self.polygon = np.asarray(self.polygon, dtype=np.float64)
            if self.polygon.ndim != 2 or self.polygon.shape[0] < 3:
                raise ValueError("lasso needs at least 3 vertices")
        else:
            raise ValueError(f"unknown widget shape '{self.shape}'")
        if not 0.0 <= self.opacity <= 1.0:
            raise ValueError("opacity must be in [0, 1]")

    def centroid(self) -> np.ndarray:
        if self.shape == "rect":
            u0, v0, u1, v1 = self.rect
            return np.array([(u0 + u1) / 2.0, (v0 + v1) / 2.0])
        return self.polygon.mean(axis=0)

    def contains(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        if self.shape == "rect":
            u0, v0, u1, v1 = self.rect
            return (u >= u0) & (u <= u1) & (v >= v0) & (v <= v1)
        return point_in_polygon(np.stack([u, v], axis=-1), self.polygon)

    def to_dict(self) -> dict:
        return {
            "shape": self.shape,
            "rect": list(self.rect) if self.rect is not None else None,
            "polygon": self.polygon.tolist() if self.polygon is not None else None,
            "sID": self.sID, "flat": self.flat, "tID": self.tID,
            "color": list(self.color), "opacity": self.opacity,
            "falloff": self.falloff,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BrushWidget":
        return cls(
            shape=d["shape"],
            rect=tuple(d["rect"]) if d.get("rect") else None,
            polygon=np.asarray(d["polygon"]) if d.get("polygon") else None,
            sID=int(d.get("sID", -1)), flat=int(d.get("flat", 1)),
            tID=int(d.get("tID", 0)), color=tuple(d.get("color", (1.0, 0.8, 0.2))),
            opacity=float(d.get("opacity", 0.8)),
            falloff=float(d.get("falloff", 1.0)),
        )


@dataclass
class TransferFunctionSet:
    widgets: list[BrushWidget] = field(default_factory=list)
    axis_brushes: dict[int, tuple[float, float]] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({
            "widgets": [w.to_dict() for w in self.widgets],
            "axis_brushes": {str(k): list(v) for k, v in self.axis_brushes.items()},
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "TransferFunctionSet":
        d = json.loads(text) if text.strip() else {}
        return cls(
            widgets=[BrushWidget.from_dict(w) for w in d.get("widgets", [])],
            axis_brushes={int(k): (float(v[0]), float(v[1]))
                          for k, v in d.get("axis_brushes", {}).items()},
        )

    def content_hash(self) -> str:
        import hashlib
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]


def _smoothstep(a: float, b: float, x: np.ndarray) -> np.ndarray:
    if b <= a:
        return (x >= b).astype(np.float64)
    t = np.clip((x - a) / (b - a), 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def _boundary_distance(widget: BrushWidget, centroid: np.ndarray,
                       dirs: np.ndarray) -> np.ndarray:
    """Distance from the centroid to the shape boundary along unit rays."""
    if widget.shape == "rect":
        u0, v0, u1, v1 = widget.rect
        with np.errstate(divide="ignore", invalid="ignore"):
            tx = np.where(dirs[:, 0] > 0, (u1 - centroid[0]) / dirs[:, 0],
                          np.where(dirs[:, 0] < 0, (u0 - centroid[0]) / dirs[:, 0], np.inf))
            ty = np.where(dirs[:, 1] > 0, (v1 - centroid[1]) / dirs[:, 1],
                          np.where(dirs[:, 1] < 0, (v0 - centroid[1]) / dirs[:, 1], np.inf))
        return np.minimum(tx, ty)
    # lasso: nearest ray-edge intersection ahead of the centroid
    poly = widget.polygon
    p = len(poly)
    best = np.full(dirs.shape[0], np.inf)
    for i in range(p):
        a = poly[i]
        b = poly[(i + 1) % p]
        e = b - a
        denom = dirs[:, 0] * (-e[1]) + dirs[:, 1] * e[0]
        with np.errstate(divide="ignore", invalid="ignore"):
            rel = a - centroid
            t = (rel[0] * (-e[1]) + rel[1] * e[0]) / denom
            s = (dirs[:, 0] * rel[1] - dirs[:, 1] * rel[0]) / denom
        ok = (np.abs(denom) > 1e-12) & (t > 0) & (s >= 0.0) & (s <= 1.0)
        best = np.where(ok & (t < best), t, best)
    return best


def falloff_factor(widget: BrushWidget, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Circular gradient: 1 at the centroid, easing to 0 at the boundary."""
    if widget.falloff >= 1.0:
        return np.ones_like(u)
    c = widget.centroid()
    du = u - c[0]
    dv = v - c[1]
    dist = np.hypot(du, dv)
    at_center = dist < 1e-12
    dirs = np.stack([du, dv], axis=-1)
    dirs[at_center] = (1.0, 0.0)
    dirs /= np.maximum(np.linalg.norm(dirs, axis=1, keepdims=True), 1e-300)
    reach = _boundary_distance(widget, c, dirs)
    t = np.where(at_center, 0.0, dist / np.maximum(reach, 1e-12))
    return 1.0 - _smoothstep(widget.falloff, 1.0, np.clip(t, 0.0, 1.0))


def eval_tf_arrays(u: np.ndarray, v: np.ndarray, subspace: int, flat: int,
                   tfs: TransferFunctionSet) -> np.ndarray:
    """RGBA (N, 4, straight alpha) of indexed points in one subspace.

    Same-tID widgets AND together (all must contain the point; opacity is
    the group minimum, color comes from the group's first widget);
    distinct groups OR by maximum opacity, ties to the earlier group.
    """
    n = u.shape[0]
    out = np.zeros((n, 4))
    groups: dict[int, list[BrushWidget]] = {}
    order: list[int] = []
    for w in tfs.widgets:
        if w.flat != flat:
            continue
        if w.tID not in groups:
            groups[w.tID] = []
            order.append(w.tID)
        groups[w.tID].append(w)

    best = np.zeros(n)
    for tid in order:
        members = groups[tid]
        relevant = [w for w in members if w.sID == -1 or w.sID == subspace]
        if len(relevant) != len(members):
            # a member pinned to another subspace can never match here
            continue
        g_op = np.full(n, np.inf)
        g_in = np.ones(n, dtype=bool)
        for w in members:
            inside = w.contains(u, v)
            g_in &= inside
            opw = w.opacity * falloff_factor(w, u, v)
            g_op = np.minimum(g_op, np.where(inside, opw, 0.0))
        g_op = np.where(g_in, g_op, 0.0)
        color = members[0].color
        take = g_op > best
        if take.any():
            out[take, 0] = color[0]
            out[take, 1] = color[1]
            out[take, 2] = color[2]
            out[take, 3] = g_op[take]
            best = np.maximum(best, g_op)
    return out


def eval_tf(eta, tfs: TransferFunctionSet) -> tuple[float, float, float, float]:
    """Single-point transfer function lookup (eta has u, v, subspace, flat_order)."""
    rgba = eval_tf_arrays(np.array([eta.u]), np.array([eta.v]),
                          int(eta.subspace), int(getattr(eta, "flat_order", 1)), tfs)
    return tuple(float(x) for x in rgba[0])


def eval_axis_brushes(xi: np.ndarray, tfs: TransferFunctionSet) -> np.ndarray:
    """True where xi lies inside every active closed per-attribute interval."""
    xi = np.atleast_2d(xi)
    ok = np.ones(xi.shape[0], dtype=bool)
    for attr, (lo, hi) in tfs.axis_brushes.items():
        ok &= (xi[:, attr] >= lo) & (xi[:, attr] <= hi)
    return ok


@dataclass
class ColorOpacityVolume:
    dims: tuple[int, int, int]
    rgba: np.ndarray            # (V, 4) premultiplied
    extinction: np.ndarray      # (V,) = -log(1 - alpha), alpha clamped

    @property
    def alpha(self) -> np.ndarray:
        return self.rgba[:, 3]


def classify_volume(ipv: IndexedPointVolume, fitvol: FitVolume,
                    tfs: TransferFunctionSet) -> ColorOpacityVolume:
    """Max-opacity composite of every subspace's widget matches, per voxel."""
    v = fitvol.n_voxels
    best = np.zeros((v, 4))

    def fold(u, vv, skip, subspace, flat):
        nonlocal best
        rgba = eval_tf_arrays(u, vv, subspace, flat, tfs)
        rgba[skip] = 0.0
        take = rgba[:, 3] > best[:, 3]
        best[take] = rgba[take]

    for s in range(ipv.pair_u.shape[0]):
        fold(ipv.pair_u[s], ipv.pair_v[s], ipv.pair_skip[s], s, 1)
    if ipv.triple_u is not None:
        for s in range(ipv.triple_u.shape[0]):
            fold(ipv.triple_u[s], ipv.triple_v[s], ipv.triple_skip[s], s, 2)

    gate = eval_axis_brushes(fitvol.xi, tfs)
    best[~gate] = 0.0

    alpha = np.clip(best[:, 3], 0.0, ALPHA_MAX)
    rgba = np.empty_like(best)
    rgba[:, :3] = best[:, :3] * alpha[:, None]
    rgba[:, 3] = alpha
    extinction = -np.log1p(-alpha)
    return ColorOpacityVolume(dims=fitvol.dims, rgba=rgba, extinction=extinction)


# -- brushing-and-linking ----------------------------------------------------

@dataclass
class LinkIndex:
    """Per-layer point indexes over a downsampled voxel subset."""
    ids: np.ndarray                             # linear voxel indices
    values: PointIndex                          # k = m, over data values
    indexed: dict[tuple[int, int], PointIndex]  # (flat, subspace) -> 2D index
    value_pairs: dict[tuple[int, int], PointIndex]  # SPLOM (i, j) -> 2D index
    axis_order: tuple[int, ...]

    @classmethod
    def build(cls, vol: MultivariateVolume, ipv: IndexedPointVolume,
              step: int = 8) -> "LinkIndex":
        nx, ny, nz = vol.dims
        xs = np.arange(0, nx, step)
        ys = np.arange(0, ny, step)
        zs = np.arange(0, nz, step)
        gz, gy, gx = np.meshgrid(zs, ys, xs, indexing="ij")
        ids = (gx + nx * (gy + ny * gz)).ravel()
        vals = vol.stacked().reshape(vol.n_voxels, vol.m, order="F")[ids]

        indexed = {}
        for s in range(ipv.pair_u.shape[0]):
            keep = ~ipv.pair_skip[s][ids]
            pts = np.stack([ipv.pair_u[s][ids][keep], ipv.pair_v[s][ids][keep]],
                           axis=-1)
            indexed[(1, s)] = PointIndex(pts, ids=ids[keep])
        if ipv.triple_u is not None:
            for s in range(ipv.triple_u.shape[0]):
                keep = ~ipv.triple_skip[s][ids]
                pts = np.stack([ipv.triple_u[s][ids][keep],
                                ipv.triple_v[s][ids][keep]], axis=-1)
                indexed[(2, s)] = PointIndex(pts, ids=ids[keep])

        value_pairs = {}
        m = vol.m
        for i in range(m):
            for j in range(i + 1, m):
                value_pairs[(i, j)] = PointIndex(vals[:, (i, j)], ids=ids)

        return cls(ids=ids, values=PointIndex(vals, ids=ids), indexed=indexed,
                   value_pairs=value_pairs, axis_order=ipv.axis_order)


def _region_indices(index: PointIndex, shape: dict) -> np.ndarray:
    kind = shape["kind"]
    if kind == "rect":
        return index.query_rect(shape["lo"], shape["hi"])
    if kind == "polygon":
        return index.query_polygon(np.asarray(shape["vertices"], dtype=np.float64))
    if kind == "disk":
        return index.query_disk(shape["center"], float(shape["r"]))
    raise ValueError(f"unknown region kind '{kind}'")


def link_query(link: LinkIndex, layer: str, shape: dict,
               subspace: int = 0, flat: int = 1,
               pair: tuple[int, int] | None = None) -> np.ndarray:
    """Voxel ids whose representation in one layer falls inside the region.

    layer "indexed" queries a (flat, subspace) band in (u, v); "splom" a
    value pair; "values" the m-dimensional data tuples (rect regions
    only). The returned ids highlight the same voxels in every other view.
    """
    if layer == "indexed":
        index = link.indexed[(flat, subspace)]
    elif layer == "splom":
        index = link.value_pairs[tuple(pair)]
    elif layer == "values":
        index = link.values
    else:
        raise ValueError(f"unknown layer '{layer}'")
    sel = _region_indices(index, shape)
    return np.sort(np.asarray(index.ids)[sel])
