"""Multivariate volume data model: loading, trilinear sampling, derived attributes.

Volumes are m-attribute scalar fields on a regular 3D grid, normalized
per attribute to [0, 1] at load time. Positions throughout are continuous
voxel coordinates; grid index order is arr[x, y, z].
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class VolumeLoadError(RuntimeError):
    """Raised when a dataset descriptor or raw file is invalid."""


@dataclass
class MultivariateVolume:
    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    attr_names: list[str]
    attrs: list[np.ndarray]                 # each (nx, ny, nz), float64 in [0, 1]
    norm_ranges: list[tuple[float, float]] = field(default_factory=list)

    @property
    def m(self) -> int:
        return len(self.attrs)

    @property
    def n_voxels(self) -> int:
        return int(np.prod(self.dims))

    def stacked(self) -> np.ndarray:
        """All attributes as one (nx, ny, nz, m) array."""
        return np.stack(self.attrs, axis=-1)

    def with_attribute(self, name: str, grid: np.ndarray) -> "MultivariateVolume":
        """New volume with an extra (normalized) attribute appended."""
        if grid.shape != tuple(self.dims):
            raise ValueError(f"attribute grid shape {grid.shape} != dims {self.dims}")
        norm, rng = normalize_attr(np.asarray(grid, dtype=np.float64))
        return MultivariateVolume(
            dims=self.dims,
            spacing=self.spacing,
            attr_names=self.attr_names + [name],
            attrs=self.attrs + [norm],
            norm_ranges=self.norm_ranges + [rng],
        )


@dataclass
class LabelVolume:
    dims: tuple[int, int, int]
    label: np.ndarray                       # (nx, ny, nz) int32, 0 = background

    @property
    def n_labels(self) -> int:
        return int(self.label.max()) + 1


def normalize_attr(grid: np.ndarray) -> tuple[np.ndarray, tuple[float, float]]:
    """Min-max normalize one attribute grid to [0, 1].

    A constant grid maps to all zeros. Returns (normalized, (min, max))
    so original data ranges stay available for display.
    """
    lo = float(grid.min())
    hi = float(grid.max())
    if hi - lo <= 0.0:
        return np.zeros_like(grid, dtype=np.float64), (lo, hi)
    return (grid - lo) / (hi - lo), (lo, hi)


def load_volume(descriptor: str | Path) -> MultivariateVolume:
    """Load a multivariate volume from a JSON dataset descriptor.

    The descriptor lists dims, spacing, and per-attribute raw files
    (float32 little-endian, x-fastest). A descriptor may instead carry a
    "synthetic" block, in which case the volume is generated on the fly.
    """
    path = Path(descriptor)
    try:
        desc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise VolumeLoadError(f"cannot read descriptor {path}: {exc}") from exc

    if "synthetic" in desc:
        from .synthetic import SyntheticSpec, gen_synthetic

        spec = SyntheticSpec.from_dict(desc["synthetic"])
        vol, _labels = gen_synthetic(spec, seed=int(desc.get("seed", 0)))
        return vol

    try:
        dims = tuple(int(d) for d in desc["dims"])
        attr_entries = desc["attributes"]
    except KeyError as exc:
        raise VolumeLoadError(f"descriptor {path} missing field {exc}") from exc
    if len(dims) != 3 or any(d < 1 for d in dims):
        raise VolumeLoadError(f"descriptor {path}: dims must be 3 positive integers")
    if len(attr_entries) < 2:
        raise VolumeLoadError(
            f"descriptor {path}: need at least 2 attributes, got {len(attr_entries)}"
        )
    spacing = tuple(float(s) for s in desc.get("spacing", (1.0, 1.0, 1.0)))

    n = int(np.prod(dims))
    names, grids, ranges = [], [], []
    for entry in attr_entries:
        name = entry["name"]
        raw_path = path.parent / entry["path"]
        if not raw_path.exists():
            raise VolumeLoadError(f"attribute '{name}': missing raw file {raw_path}")
        data = np.fromfile(raw_path, dtype="<f4")
        if data.size != n:
            raise VolumeLoadError(
                f"attribute '{name}': raw file {raw_path} has {data.size} elements, "
                f"expected {n} for dims {dims}"
            )
        # x-fastest on disk -> arr[x, y, z]
        grid = np.ascontiguousarray(
            data.reshape(dims[2], dims[1], dims[0]).transpose(2, 1, 0).astype(np.float64)
        )
        norm, rng = normalize_attr(grid)
        names.append(name)
        grids.append(norm)
        ranges.append(rng)

    return MultivariateVolume(dims=dims, spacing=spacing, attr_names=names,
                              attrs=grids, norm_ranges=ranges)


def save_raw(grid: np.ndarray, path: str | Path) -> None:
    """Write a grid as float32 little-endian, x-fastest."""
    np.asarray(grid).transpose(2, 1, 0).astype("<f4").tofile(path)


def trilinear_batch(grid: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Trilinear interpolation of `grid` at continuous voxel positions.

    pts outside [0, dims-1] are clamped to the boundary. pts is (N, 3);
    returns (N,) float64.
    """
    nx, ny, nz = grid.shape
    p = np.clip(pts, 0.0, np.array([nx - 1, ny - 1, nz - 1], dtype=np.float64))
    hi = np.array([max(nx - 2, 0), max(ny - 2, 0), max(nz - 2, 0)])
    i0 = np.minimum(np.floor(p).astype(np.intp), hi)
    f = p - i0
    x0, y0, z0 = i0[:, 0], i0[:, 1], i0[:, 2]
    x1 = np.minimum(x0 + 1, nx - 1)
    y1 = np.minimum(y0 + 1, ny - 1)
    z1 = np.minimum(z0 + 1, nz - 1)
    fx, fy, fz = f[:, 0], f[:, 1], f[:, 2]

    c000 = grid[x0, y0, z0]
    c100 = grid[x1, y0, z0]
    c010 = grid[x0, y1, z0]
    c110 = grid[x1, y1, z0]
    c001 = grid[x0, y0, z1]
    c101 = grid[x1, y0, z1]
    c011 = grid[x0, y1, z1]
    c111 = grid[x1, y1, z1]

    c00 = c000 + (c100 - c000) * fx
    c10 = c010 + (c110 - c010) * fx
    c01 = c001 + (c101 - c001) * fx
    c11 = c011 + (c111 - c011) * fx
    c0 = c00 + (c10 - c00) * fy
    c1 = c01 + (c11 - c01) * fy
    return c0 + (c1 - c0) * fz


def sample_trilinear(vol: MultivariateVolume, x, attr: int) -> float:
    """Sample one attribute at a continuous voxel position (clamped)."""
    pts = np.asarray(x, dtype=np.float64).reshape(1, 3)
    return float(trilinear_batch(vol.attrs[attr], pts)[0])


def sample_all_attrs(vol: MultivariateVolume, pts: np.ndarray) -> np.ndarray:
    """Sample every attribute at positions pts (N, 3) -> (N, m)."""
    return np.stack([trilinear_batch(g, pts) for g in vol.attrs], axis=-1)


def _axis_derivative(grid: np.ndarray, axis: int, h: float) -> np.ndarray:
    """Central differences along one axis, one-sided at the two boundary slabs."""
    d = np.empty_like(grid)
    lo = [slice(None)] * 3
    hi = [slice(None)] * 3
    mid = [slice(None)] * 3
    lo[axis], hi[axis], mid[axis] = slice(0, -2), slice(2, None), slice(1, -1)
    d[tuple(mid)] = (grid[tuple(hi)] - grid[tuple(lo)]) / (2.0 * h)
    first = [slice(None)] * 3
    second = [slice(None)] * 3
    first[axis], second[axis] = 0, 1
    d[tuple(first)] = (grid[tuple(second)] - grid[tuple(first)]) / h
    first[axis], second[axis] = -1, -2
    d[tuple(first)] = (grid[tuple(first)] - grid[tuple(second)]) / h
    return d


def gradient_magnitude(grid: np.ndarray, spacing=(1.0, 1.0, 1.0)) -> np.ndarray:
    """Gradient magnitude via central differences, one-sided at boundaries."""
    g = np.asarray(grid, dtype=np.float64)
    gx = _axis_derivative(g, 0, spacing[0])
    gy = _axis_derivative(g, 1, spacing[1])
    gz = _axis_derivative(g, 2, spacing[2])
    return np.sqrt(gx * gx + gy * gy + gz * gz)


def gradient_magnitude_attr(vol: MultivariateVolume, attr: int) -> np.ndarray:
    """Gradient-magnitude grid of one attribute, appendable via with_attribute."""
    if any(d < 3 for d in vol.dims):
        raise ValueError("gradient magnitude needs dims >= 3 per axis")
    return gradient_magnitude(vol.attrs[attr], vol.spacing)
