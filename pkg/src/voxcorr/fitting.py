"""Local linear fitting of multivariate volumes.

Each voxel gets a local PCA frame (mean value xi, eigenvectors e1/e2,
descending eigenvalues) fitted to Monte Carlo samples of its spatial
neighborhood. An octree drives work reuse: homogeneous leaves replicate a
single fit, mildly varying leaves interpolate corner frames on the unit
sphere, and only noisy minimum-size leaves pay for per-voxel PCA.

Per-voxel sample positions come from fixed, index-keyed slabs of one
PCG64 stream, so results are deterministic for a (volume, params, seed)
triple regardless of leaf processing order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .saliency import LeafStrategy, Octree
from .volume import MultivariateVolume, sample_all_attrs

DEGENERACY_FLOOR = 1e-12


@dataclass
class LocalFit:
    xi: np.ndarray              # (m,) sample mean
    e1: np.ndarray              # (m,) unit major eigenvector
    e2: np.ndarray              # (m,) unit second eigenvector, e1.e2 = 0
    eigenvalues: np.ndarray     # (m,) descending, >= 0
    valid2flat: bool


@dataclass
class FitParams:
    halfwidth: int = 3
    n_samples: int = 100
    seed: int = 0

    def stream_stride(self) -> int:
        # one float64 draw consumes one PCG64 step; 3 coords per sample
        return self.n_samples * 3


@dataclass
class FitVolume:
    dims: tuple[int, int, int]
    m: int
    xi: np.ndarray              # (V, m)
    e1: np.ndarray              # (V, m)
    e2: np.ndarray              # (V, m)
    eigenvalues: np.ndarray     # (V, m)
    valid2flat: np.ndarray      # (V,) bool
    params: FitParams = field(default_factory=FitParams)
    stats: dict = field(default_factory=dict)

    @property
    def n_voxels(self) -> int:
        return int(np.prod(self.dims))

    def fit_at(self, index: int) -> LocalFit:
        return LocalFit(xi=self.xi[index], e1=self.e1[index], e2=self.e2[index],
                        eigenvalues=self.eigenvalues[index],
                        valid2flat=bool(self.valid2flat[index]))

    def linear_index(self, x: int, y: int, z: int) -> int:
        nx, ny, _ = self.dims
        return x + nx * (y + ny * z)


def _window_bounds(center: np.ndarray, halfwidth: int, dims) -> tuple[np.ndarray, np.ndarray]:
    ext = halfwidth + 0.5
    upper = np.asarray(dims, dtype=np.float64) - 1.0
    lo = np.clip(center - ext, 0.0, upper)
    hi = np.clip(center + ext, 0.0, upper)
    return lo, hi


def sample_neighborhood(vol: MultivariateVolume, x, halfwidth: int,
                        n_samples: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform Monte Carlo samples of the (2*halfwidth+1)^3 window around x.

    The window is clipped to the volume domain; each position is evaluated
    by trilinear interpolation over all attributes. Returns (n_samples, m).
    """
    if halfwidth < 1:
        raise ValueError("halfwidth must be >= 1")
    if n_samples < vol.m + 1:
        raise ValueError(f"need at least m+1={vol.m + 1} samples")
    center = np.asarray(x, dtype=np.float64)
    lo, hi = _window_bounds(center, halfwidth, vol.dims)
    pts = lo + rng.random((n_samples, 3)) * (hi - lo)
    return sample_all_attrs(vol, pts)


def _canonical_signs(vecs: np.ndarray) -> np.ndarray:
    """Flip eigenvector columns so each column's largest-|.| entry is positive.

    vecs is (B, m, m) with eigenvectors in columns.
    """
    b, m, _ = vecs.shape
    idx = np.abs(vecs).argmax(axis=1)                       # (B, m)
    picked = np.take_along_axis(vecs, idx[:, None, :], axis=1)[:, 0, :]
    return vecs * np.where(picked < 0.0, -1.0, 1.0)[:, None, :]


def _pca_batch(samples: np.ndarray) -> tuple[np.ndarray, ...]:
    """Batched PCA over (B, S, m) -> (xi, e1, e2, eigenvalues, valid2flat)."""
    b, s, m = samples.shape
    xi = samples.mean(axis=1)
    centered = samples - xi[:, None, :]
    cov = np.einsum("bsi,bsj->bij", centered, centered) / (s - 1)
    lam, vecs = np.linalg.eigh(cov)
    lam = np.clip(lam[:, ::-1], 0.0, None)
    vecs = _canonical_signs(vecs[:, :, ::-1])
    e1 = vecs[:, :, 0].copy()
    e2 = vecs[:, :, 1].copy() if m >= 2 else np.zeros_like(e1)
    degenerate = lam[:, 0] < DEGENERACY_FLOOR
    if degenerate.any():
        lam[degenerate] = 0.0
        e1[degenerate] = 0.0
        e1[degenerate, 0] = 1.0
        e2[degenerate] = 0.0
        if m >= 2:
            e2[degenerate, 1] = 1.0
    valid2 = (~degenerate) & (m >= 3) & (lam[:, 1] >= DEGENERACY_FLOOR * lam[:, 0])
    return xi, e1, e2, lam, valid2


def local_pca(samples: np.ndarray) -> LocalFit:
    """PCA of one sample set: mean, unit eigenvectors, descending eigenvalues."""
    samples = np.asarray(samples, dtype=np.float64)
    s, m = samples.shape
    if s < m + 1:
        raise ValueError(f"need at least m+1={m + 1} samples, got {s}")
    xi, e1, e2, lam, valid2 = _pca_batch(samples[None])
    return LocalFit(xi=xi[0], e1=e1[0], e2=e2[0], eigenvalues=lam[0],
                    valid2flat=bool(valid2[0]))


def align_signs(fit: LocalFit, reference: LocalFit) -> LocalFit:
    """Flip e1/e2 so both dot nonnegatively with the reference frame."""
    e1 = -fit.e1 if float(fit.e1 @ reference.e1) < 0.0 else fit.e1
    e2 = -fit.e2 if float(fit.e2 @ reference.e2) < 0.0 else fit.e2
    return LocalFit(xi=fit.xi, e1=e1, e2=e2, eigenvalues=fit.eigenvalues,
                    valid2flat=fit.valid2flat)


def max_pairwise_angle(corner_e1: np.ndarray, corner_e2: np.ndarray) -> float:
    """Largest angle between any two corners' eigenvectors (both vector sets)."""
    theta = 0.0
    for vecs in (corner_e1, corner_e2):
        dots = np.clip(vecs @ vecs.T, -1.0, 1.0)
        theta = max(theta, float(np.arccos(dots).max()))
    return theta


def _sine_weights(d: np.ndarray, theta: float) -> np.ndarray:
    """Spherical blend weights; reduces to the trilinear weights as theta -> 0."""
    if theta < 1e-4:
        return d
    return np.sin(d * theta) / math.sin(theta)


def interpolate_frame(corners: list[LocalFit], weights: np.ndarray,
                      theta: float | None = None) -> tuple[np.ndarray, np.ndarray, bool]:
    """Blend 8 sign-aligned corner frames on the unit sphere.

    weights are the 8 trilinear fractions (sum 1). Returns (e1, e2,
    fell_back); antipodal corner pairs fall back to the nearest corner.
    """
    ce1 = np.stack([c.e1 for c in corners])
    ce2 = np.stack([c.e2 for c in corners])
    if theta is None:
        theta = max_pairwise_angle(ce1, ce2)
    if theta >= math.pi - 1e-6:
        k = int(np.argmax(weights))
        return corners[k].e1.copy(), corners[k].e2.copy(), True
    w = _sine_weights(np.asarray(weights, dtype=np.float64), theta)
    e1 = w @ ce1
    e2 = w @ ce2
    n1 = np.linalg.norm(e1)
    if n1 < 1e-12:
        k = int(np.argmax(weights))
        return corners[k].e1.copy(), corners[k].e2.copy(), True
    e1 /= n1
    e2 = e2 - (e2 @ e1) * e1
    n2 = np.linalg.norm(e2)
    if n2 < 1e-12:
        k = int(np.argmax(weights))
        return e1, corners[k].e2 - (corners[k].e2 @ e1) * e1, True
    return e1, e2 / n2, False


# -- fit volume construction -------------------------------------------------

def _stream_rng(seed: int, stream_index: int, stride: int) -> np.random.Generator:
    bg = np.random.PCG64(seed)
    bg.advance(stream_index * stride)
    return np.random.Generator(bg)


def _fit_run(vol, stacked, first_index: int, centers: np.ndarray, params: FitParams):
    """PCA for a contiguous linear-index run of voxel centers."""
    b = centers.shape[0]
    rng = _stream_rng(params.seed, first_index, params.stream_stride())
    u = rng.random((b, params.n_samples, 3))
    lo, hi = _window_bounds(centers[:, None, :], params.halfwidth, vol.dims)
    pts = (lo + u * (hi - lo)).reshape(-1, 3)
    samples = sample_all_attrs(vol, pts).reshape(b, params.n_samples, vol.m)
    return _pca_batch(samples)


def _fit_single(vol, position: np.ndarray, params: FitParams):
    """One PCA at an arbitrary position, stream-keyed by the nearest voxel."""
    nx, ny, _ = vol.dims
    r = np.rint(position).astype(int)
    index = int(r[0] + nx * (r[1] + ny * r[2]))
    rng = _stream_rng(params.seed, index, params.stream_stride())
    samples = sample_neighborhood(vol, position, params.halfwidth,
                                  params.n_samples, rng)
    xi, e1, e2, lam, v2 = _pca_batch(samples[None])
    return LocalFit(xi=xi[0], e1=e1[0], e2=e2[0], eigenvalues=lam[0],
                    valid2flat=bool(v2[0]))


def _box_indices(lo, size, dims) -> np.ndarray:
    """Linear indices of a voxel box, x-fastest within each (y, z) row."""
    nx, ny, _ = dims
    xs = np.arange(lo[0], lo[0] + size[0])
    ys = np.arange(lo[1], lo[1] + size[1])
    zs = np.arange(lo[2], lo[2] + size[2])
    return (xs[None, None, :] + nx * (ys[None, :, None] + ny * zs[:, None, None])).ravel()


def _box_positions(lo, size) -> np.ndarray:
    xs = np.arange(lo[0], lo[0] + size[0], dtype=np.float64)
    ys = np.arange(lo[1], lo[1] + size[1], dtype=np.float64)
    zs = np.arange(lo[2], lo[2] + size[2], dtype=np.float64)
    gz, gy, gx = np.meshgrid(zs, ys, xs, indexing="ij")
    return np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=-1)


def build_fit_volume(vol: MultivariateVolume, octree: Octree | None,
                     params: FitParams | None = None) -> FitVolume:
    """Fit every voxel, reusing work according to the octree leaf strategies.

    octree=None forces a fresh PCA at every voxel. Deterministic for fixed
    (volume, params, seed).
    """
    params = params or FitParams()
    v = vol.n_voxels
    m = vol.m
    out = FitVolume(
        dims=vol.dims, m=m,
        xi=np.zeros((v, m)), e1=np.zeros((v, m)), e2=np.zeros((v, m)),
        eigenvalues=np.zeros((v, m)), valid2flat=np.zeros(v, dtype=bool),
        params=params,
    )
    stacked = vol.stacked()
    grid_values = stacked.reshape(v, m, order="F")  # arr[x,y,z] -> x-fastest rows
    pca_count = 0
    interp_fallbacks = 0

    def fill_run(first: int, centers: np.ndarray) -> None:
        nonlocal pca_count
        xi, e1, e2, lam, v2 = _fit_run(vol, stacked, first, centers, params)
        sl = slice(first, first + centers.shape[0])
        out.xi[sl], out.e1[sl], out.e2[sl] = xi, e1, e2
        out.eigenvalues[sl], out.valid2flat[sl] = lam, v2
        pca_count += centers.shape[0]

    def per_voxel_box(lo, size) -> None:
        # rows along x are contiguous in linear index space
        for z in range(lo[2], lo[2] + size[2]):
            for y in range(lo[1], lo[1] + size[1]):
                first = lo[0] + vol.dims[0] * (y + vol.dims[1] * z)
                xs = np.arange(lo[0], lo[0] + size[0], dtype=np.float64)
                centers = np.stack(
                    [xs, np.full_like(xs, y), np.full_like(xs, z)], axis=-1)
                fill_run(first, centers)

    if octree is None:
        per_voxel_box((0, 0, 0), vol.dims)
        out.stats = {"pca_count": pca_count, "mode": "per-voxel"}
        return out

    for leaf in octree.leaves():
        lo, size = leaf.lo, leaf.size
        idx = _box_indices(lo, size, vol.dims)
        if leaf.strategy == LeafStrategy.HOMOGENEOUS:
            center = np.asarray(lo, dtype=np.float64) + (np.asarray(size) - 1) / 2.0
            fit = _fit_single(vol, center, params)
            pca_count += 1
            out.xi[idx] = fit.xi
            out.e1[idx] = fit.e1
            out.e2[idx] = fit.e2
            out.eigenvalues[idx] = fit.eigenvalues
            out.valid2flat[idx] = fit.valid2flat
        elif leaf.strategy == LeafStrategy.INTERPOLATE:
            corner_pos = [
                np.array([lo[0] + (size[0] - 1) * dx,
                          lo[1] + (size[1] - 1) * dy,
                          lo[2] + (size[2] - 1) * dz], dtype=np.float64)
                for dz in (0, 1) for dy in (0, 1) for dx in (0, 1)
            ]
            corners = [_fit_single(vol, p, params) for p in corner_pos]
            pca_count += len(corners)
            corners = [corners[0]] + [align_signs(c, corners[0]) for c in corners[1:]]
            ce1 = np.stack([c.e1 for c in corners])
            ce2 = np.stack([c.e2 for c in corners])
            theta = max_pairwise_angle(ce1, ce2)

            pos = _box_positions(lo, size)
            span = np.maximum(np.asarray(size, dtype=np.float64) - 1.0, 1.0)
            t = (pos - np.asarray(lo, dtype=np.float64)) / span
            wx0, wy0, wz0 = 1.0 - t[:, 0], 1.0 - t[:, 1], 1.0 - t[:, 2]
            wx1, wy1, wz1 = t[:, 0], t[:, 1], t[:, 2]
            d = np.stack([
                wx0 * wy0 * wz0, wx1 * wy0 * wz0, wx0 * wy1 * wz0, wx1 * wy1 * wz0,
                wx0 * wy0 * wz1, wx1 * wy0 * wz1, wx0 * wy1 * wz1, wx1 * wy1 * wz1,
            ], axis=-1)

            if theta >= math.pi - 1e-6:
                nearest = d.argmax(axis=1)
                e1 = ce1[nearest]
                e2 = ce2[nearest]
                interp_fallbacks += d.shape[0]
            else:
                w = _sine_weights(d, theta)
                e1 = w @ ce1
                e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
                e2 = w @ ce2
                e2 -= (e2 * e1).sum(axis=1, keepdims=True) * e1
                n2 = np.linalg.norm(e2, axis=1, keepdims=True)
                bad = n2[:, 0] < 1e-12
                if bad.any():
                    nearest = d[bad].argmax(axis=1)
                    fallback = ce2[nearest]
                    fallback -= (fallback * e1[bad]).sum(axis=1, keepdims=True) * e1[bad]
                    e2[bad] = fallback
                    n2[bad] = np.maximum(np.linalg.norm(e2[bad], axis=1, keepdims=True), 1e-12)
                    interp_fallbacks += int(bad.sum())
                e2 /= n2
            lam = d @ np.stack([c.eigenvalues for c in corners])
            out.e1[idx] = e1
            out.e2[idx] = e2
            out.eigenvalues[idx] = lam
            out.xi[idx] = grid_values[idx]
            out.valid2flat[idx] = (lam[:, 0] >= DEGENERACY_FLOOR) & (m >= 3) & \
                (lam[:, 1] >= DEGENERACY_FLOOR * lam[:, 0])
        else:  # PER_VOXEL
            per_voxel_box(lo, size)

    out.stats = {
        "pca_count": pca_count,
        "interp_fallbacks": interp_fallbacks,
        "mode": "octree",
        "leaf_counts": octree.strategy_counts(),
    }
    return out


def data_domain_fit_volume(vol: MultivariateVolume, n_neighbors: int = 100,
                           chunk: int = 16384) -> FitVolume:
    """Comparison baseline: fits from value-space nearest neighbors.

    Each voxel's neighborhood is its n_neighbors closest voxels in the
    data domain regardless of spatial position, mirroring the spatial
    variant's sample count but dropping the spatial constraint.
    Deterministic (no sampling involved).
    """
    from scipy.spatial import cKDTree

    v = vol.n_voxels
    m = vol.m
    values = vol.stacked().reshape(v, m, order="F")
    tree = cKDTree(values)
    out = FitVolume(
        dims=vol.dims, m=m,
        xi=values.copy(), e1=np.zeros((v, m)), e2=np.zeros((v, m)),
        eigenvalues=np.zeros((v, m)), valid2flat=np.zeros(v, dtype=bool),
        stats={"mode": "data-domain", "n_neighbors": n_neighbors},
    )
    for a in range(0, v, chunk):
        b = min(a + chunk, v)
        _, nbr = tree.query(values[a:b], k=n_neighbors, workers=-1)
        samples = values[nbr]                       # (b-a, k, m)
        _, e1, e2, lam, v2 = _pca_batch(samples)
        out.e1[a:b], out.e2[a:b] = e1, e2
        out.eigenvalues[a:b], out.valid2flat[a:b] = lam, v2
    return out
