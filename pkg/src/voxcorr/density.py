"""High-dynamic-range density images of indexed points.

Points are forward-splatted with bilinear mass deposits (mass is conserved
exactly), then smoothed by Epanechnikov kernel density estimation whose
per-pixel bandwidth shrinks where the local mass is already dense. Tone
mapping converts HDR densities to categorical-hue RGBA for display.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .indexed import AxisLayout, IndexedPointVolume
from .kdtree import PointIndex

# qualitative hues, one per subspace (cycled)
CATEGORICAL_COLORS = [
    (0.894, 0.102, 0.110),
    (0.216, 0.494, 0.722),
    (0.302, 0.686, 0.290),
    (0.596, 0.306, 0.639),
    (1.000, 0.498, 0.000),
    (0.651, 0.337, 0.157),
    (0.969, 0.506, 0.749),
    (0.400, 0.651, 0.118),
]


@dataclass
class Viewport:
    u0: float
    u1: float
    v0: float
    v1: float
    width: int
    height: int

    def to_pixels(self, u: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Continuous pixel coordinates; pixel (i, j) is centered at (i+.5, j+.5)."""
        px = (u - self.u0) / (self.u1 - self.u0) * self.width
        py = (self.v1 - v) / (self.v1 - self.v0) * self.height
        return px, py

    @classmethod
    def band(cls, layout: AxisLayout, subspace: int,
             width: int = 900, height: int = 300) -> "Viewport":
        u0, u1 = layout.band(subspace)
        return cls(u0=u0, u1=u1, v0=-0.25, v1=1.25, width=width, height=height)


@dataclass
class DensityBuffer:
    width: int
    height: int
    subspace: int
    kind: str                       # "pair" | "triple"
    values: np.ndarray              # (height, width) float64 >= 0
    total_mass: float
    viewport: Viewport | None = None
    radii: np.ndarray | None = None  # per-pixel KDE radius, set by kde_dynamic


@dataclass
class KdeParams:
    r_max: int = 8
    mass_cap: float = 32.0

    def __post_init__(self):
        if self.r_max < 1:
            raise ValueError("r_max must be >= 1")
        if self.mass_cap <= 0:
            raise ValueError("mass_cap must be > 0")


def splat(u: np.ndarray, v: np.ndarray, skip: np.ndarray | None,
          viewport: Viewport, subspace: int = 0, kind: str = "pair") -> DensityBuffer:
    """Deposit unit mass per non-skipped point, bilinearly over 4 pixels.

    Deposits falling outside the grid clamp to the border pixels, so
    total_mass equals the number of splatted points exactly.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if skip is not None:
        u, v = u[~skip], v[~skip]
    w, h = viewport.width, viewport.height
    px, py = viewport.to_pixels(u, v)
    px -= 0.5
    py -= 0.5
    ix = np.floor(px)
    iy = np.floor(py)
    fx = px - ix
    fy = py - iy
    x0 = np.clip(ix.astype(np.intp), 0, w - 1)
    x1 = np.clip(ix.astype(np.intp) + 1, 0, w - 1)
    y0 = np.clip(iy.astype(np.intp), 0, h - 1)
    y1 = np.clip(iy.astype(np.intp) + 1, 0, h - 1)

    size = h * w
    flat = (
        np.bincount(y0 * w + x0, weights=(1 - fx) * (1 - fy), minlength=size)
        + np.bincount(y0 * w + x1, weights=fx * (1 - fy), minlength=size)
        + np.bincount(y1 * w + x0, weights=(1 - fx) * fy, minlength=size)
        + np.bincount(y1 * w + x1, weights=fx * fy, minlength=size)
    )
    return DensityBuffer(width=w, height=h, subspace=subspace, kind=kind,
                         values=flat.reshape(h, w), total_mass=float(u.size),
                         viewport=viewport)


def splat_volume(ipv: IndexedPointVolume, width: int = 900, height: int = 300,
                 kind: str = "pair") -> list[DensityBuffer]:
    """One density buffer per subspace of the given flat kind."""
    if kind == "pair":
        uu, vv, sk = ipv.pair_u, ipv.pair_v, ipv.pair_skip
    else:
        if ipv.triple_u is None:
            return []
        uu, vv, sk = ipv.triple_u, ipv.triple_v, ipv.triple_skip
    out = []
    for s in range(uu.shape[0]):
        vp = Viewport.band(ipv.layout, s, width, height)
        out.append(splat(uu[s], vv[s], sk[s], vp, subspace=s, kind=kind))
    return out


def build_kdtree2(buffer: DensityBuffer) -> PointIndex:
    """2D index over occupied pixels, carrying their accumulated mass."""
    rows, cols = np.nonzero(buffer.values)
    pts = np.stack([cols, rows], axis=-1).astype(np.float64)
    return PointIndex(pts.reshape(-1, 2), masses=buffer.values[rows, cols])


def epanechnikov(t: np.ndarray) -> np.ndarray:
    """Normalized 2D parabolic kernel: integrates to 1 over the unit disk."""
    t = np.asarray(t, dtype=np.float64)
    return np.where(t <= 1.0, (2.0 / math.pi) * (1.0 - t * t), 0.0)


def _disk_kernel(r: int) -> np.ndarray:
    """Binary disk mask of radius r on the integer lattice."""
    ax = np.arange(-r, r + 1)
    dj, di = np.meshgrid(ax, ax)
    return (di * di + dj * dj <= r * r).astype(np.float64)


def _epan_kernel(r: int) -> np.ndarray:
    ax = np.arange(-r, r + 1)
    dj, di = np.meshgrid(ax, ax)
    dist = np.sqrt(di * di + dj * dj)
    k = np.zeros_like(dist)
    inside = dist <= r
    k[inside] = epanechnikov(dist[inside] / r) / (r * r)
    return k


def _choose_radii_conv(values: np.ndarray, params: KdeParams) -> np.ndarray:
    """Smallest r in 1..r_max whose clipped disk mass reaches mass_cap."""
    chosen = np.zeros(values.shape, dtype=np.int32)
    for r in range(1, params.r_max + 1):
        mass = fftconvolve(values, _disk_kernel(r), mode="same")
        hit = (chosen == 0) & (mass >= params.mass_cap - 1e-9)
        chosen[hit] = r
        if chosen.all():
            break
    chosen[chosen == 0] = params.r_max
    return chosen


def _choose_radii_tree(values: np.ndarray, tree: PointIndex,
                       params: KdeParams) -> np.ndarray:
    h, w = values.shape
    chosen = np.full((h, w), params.r_max, dtype=np.int32)
    for row in range(h):
        for col in range(w):
            for r in range(1, params.r_max + 1):
                if tree.disk_mass((col, row), r) >= params.mass_cap - 1e-9:
                    chosen[row, col] = r
                    break
    return chosen


def kde_dynamic(buffer: DensityBuffer, tree: PointIndex | None,
                params: KdeParams, method: str = "auto") -> DensityBuffer:
    """Dynamic-bandwidth Epanechnikov smoothing of a density buffer.

    Per pixel, the radius grows from 1 until the disk's accumulated mass
    reaches mass_cap (capped at r_max); the output is the kernel-weighted
    disk sum, globally renormalized so total mass is preserved. The
    "tree" method evaluates the definition per pixel through the point
    index; "conv" computes the identical quantities with stacked
    convolutions and is the fast path for full-size buffers.
    """
    values = buffer.values
    if method == "auto":
        method = "conv"
    if method == "tree":
        if tree is None:
            tree = build_kdtree2(buffer)
        chosen = _choose_radii_tree(values, tree, params)
        out = np.zeros_like(values)
        h, w = values.shape
        for row in range(h):
            for col in range(w):
                r = chosen[row, col]
                idx = tree.query_disk((col, row), r)
                if idx.size == 0:
                    continue
                pts = tree.points[idx]
                dist = np.hypot(pts[:, 0] - col, pts[:, 1] - row)
                out[row, col] = float(
                    (tree.masses[idx] * epanechnikov(dist / r)).sum() / (r * r))
    elif method == "conv":
        chosen = _choose_radii_conv(values, params)
        out = np.zeros_like(values)
        for r in np.unique(chosen):
            sel = chosen == r
            out[sel] = fftconvolve(values, _epan_kernel(int(r)), mode="same")[sel]
        np.clip(out, 0.0, None, out=out)
    else:
        raise ValueError(f"unknown method '{method}'")

    total = out.sum()
    if total > 0.0:
        out *= buffer.total_mass / total
    return DensityBuffer(width=buffer.width, height=buffer.height,
                         subspace=buffer.subspace, kind=buffer.kind,
                         values=out, total_mass=buffer.total_mass,
                         viewport=buffer.viewport, radii=chosen)


def tone_map(buffer: DensityBuffer, gamma: float = 1.0,
             color: tuple[float, float, float] | None = None) -> np.ndarray:
    """HDR density to RGBA uint8: log1p, min-max normalize, gamma, hue ramp.

    Alpha follows the mapped intensity so empty pixels stay transparent
    and the layer can blend over the polyline plot.
    """
    if gamma <= 0:
        raise ValueError("gamma must be > 0")
    vals = buffer.values
    if color is None:
        color = CATEGORICAL_COLORS[buffer.subspace % len(CATEGORICAL_COLORS)]
    out = np.zeros((buffer.height, buffer.width, 4), dtype=np.uint8)
    if vals.max() <= 0.0:
        return out
    logv = np.log1p(vals)
    lo, hi = float(logv.min()), float(logv.max())
    t = np.ones_like(logv) if hi - lo <= 0 else (logv - lo) / (hi - lo)
    t = t**gamma
    for ch in range(3):
        out[:, :, ch] = np.round(255.0 * color[ch] * t).astype(np.uint8)
    out[:, :, 3] = np.round(255.0 * t).astype(np.uint8)
    return out


def full_plot_viewport(layout: AxisLayout, px_per_d: int = 300,
                       height: int = 300) -> Viewport:
    """Viewport spanning every subspace band plus the outer half-bands."""
    u0 = float(layout.axis_x[0]) - layout.d
    u1 = float(layout.axis_x[-1]) + layout.d
    width = int(round((u1 - u0) / layout.d * px_per_d))
    return Viewport(u0=u0, u1=u1, v0=-0.25, v1=1.25, width=width, height=height)


def draw_polyline_layer(values: np.ndarray, layout: AxisLayout,
                        viewport: Viewport, stroke_alpha: float = 0.05,
                        color: tuple[float, float, float] = (0.35, 0.35, 0.35),
                        rgba_per_line: np.ndarray | None = None) -> np.ndarray:
    """Classic parallel-coordinates plot by alpha accumulation of sampled lines.

    values is (N, m) in [0, 1] (a downsampled subset of the volume);
    rgba_per_line optionally colors each polyline (float 0..1, straight
    alpha), e.g. from a classification. Returns (H, W, 4) uint8.
    """
    from PIL import Image, ImageDraw

    img = Image.new("RGBA", (viewport.width, viewport.height), (0, 0, 0, 0))
    draw = ImageDraw.Draw(img, "RGBA")
    axis_px, _ = viewport.to_pixels(layout.axis_x, np.zeros(layout.m))
    base = tuple(int(round(255 * c)) for c in color) + (
        max(1, int(round(255 * stroke_alpha))),)
    n = values.shape[0]
    for i in range(n):
        _, py = viewport.to_pixels(layout.axis_x, values[i])
        pts = list(zip(axis_px.tolist(), py.tolist()))
        if rgba_per_line is not None:
            r, g, b, a = rgba_per_line[i]
            if a <= 0:
                continue
            stroke = (int(255 * r), int(255 * g), int(255 * b),
                      max(1, int(255 * min(1.0, a))))
        else:
            stroke = base
        draw.line(pts, fill=stroke, width=1)
    for x in axis_px:
        draw.line([(float(x), 0.0), (float(x), float(viewport.height))],
                  fill=(90, 90, 90, 255), width=1)
    return np.asarray(img)
