"""CPU volume renderer: front-to-back ray casting with occlusion shading.

Shading is gradient-free by default: per-sample brightness is the cone-
averaged transmittance toward a light direction, computed on the
classified extinction grid. A Phong mode shaded from the first attribute's
gradient is kept as a comparison baseline (it is wrong for multivariate
classifications, which is the point of comparing).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .classify import ColorOpacityVolume
from .volume import trilinear_batch


@dataclass
class Camera:
    eye: tuple[float, float, float]
    look_at: tuple[float, float, float]
    up: tuple[float, float, float] = (0.0, 0.0, 1.0)
    fov_deg: float = 40.0
    width: int = 256
    height: int = 256

    def basis(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        eye = np.asarray(self.eye, dtype=np.float64)
        look = np.asarray(self.look_at, dtype=np.float64)
        fwd = look - eye
        n = np.linalg.norm(fwd)
        if n < 1e-12:
            raise ValueError("degenerate camera: eye == look_at")
        if not 0.0 < self.fov_deg < 180.0:
            raise ValueError("fov must be in (0, 180) degrees")
        fwd = fwd / n
        up = np.asarray(self.up, dtype=np.float64)
        right = np.cross(fwd, up)
        rn = np.linalg.norm(right)
        if rn < 1e-12:
            raise ValueError("degenerate camera: up parallel to view direction")
        right /= rn
        true_up = np.cross(right, fwd)
        return right, true_up, fwd

    def rays(self) -> tuple[np.ndarray, np.ndarray]:
        """Origins (3,) and unit directions (H*W, 3), row-major pixels."""
        right, up, fwd = self.basis()
        half_h = math.tan(math.radians(self.fov_deg) / 2.0)
        half_w = half_h * self.width / self.height
        xs = (np.arange(self.width) + 0.5) / self.width * 2.0 - 1.0
        ys = 1.0 - (np.arange(self.height) + 0.5) / self.height * 2.0
        gx, gy = np.meshgrid(xs * half_w, ys * half_h)
        dirs = (fwd[None, :] + gx.reshape(-1, 1) * right[None, :]
                + gy.reshape(-1, 1) * up[None, :])
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        return np.asarray(self.eye, dtype=np.float64), dirs

    def to_dict(self) -> dict:
        return {"eye": list(self.eye), "look_at": list(self.look_at),
                "up": list(self.up), "fov_deg": self.fov_deg,
                "width": self.width, "height": self.height}

    @classmethod
    def from_dict(cls, d: dict) -> "Camera":
        return cls(eye=tuple(d["eye"]), look_at=tuple(d["look_at"]),
                   up=tuple(d.get("up", (0, 0, 1))),
                   fov_deg=float(d.get("fov_deg", 40.0)),
                   width=int(d.get("width", 256)), height=int(d.get("height", 256)))


@dataclass
class ConeParams:
    aperture_deg: float = 60.0
    samples: int = 16
    reach: float = 32.0             # voxels

    def __post_init__(self):
        if not 0.0 < self.aperture_deg < 90.0:
            raise ValueError("cone aperture must be in (0, 90) degrees")


@dataclass
class RenderParams:
    sampling_rate: float = 0.5      # samples per voxel along the ray
    shading: str = "occlusion"      # "occlusion" | "phong"
    cone: ConeParams = field(default_factory=ConeParams)
    ambient: float = 0.15
    light_dir: tuple[float, float, float] = (0.3, -0.5, 0.8)
    background: tuple[float, float, float] = (0.0, 0.0, 0.0)
    seed: int = 0

    def __post_init__(self):
        if self.sampling_rate <= 0:
            raise ValueError("sampling_rate must be > 0")

    @property
    def step(self) -> float:
        return 1.0 / self.sampling_rate


def cone_directions(axis, aperture_deg: float, count: int, seed: int = 0) -> np.ndarray:
    """Deterministic low-discrepancy directions in a cone around `axis`.

    Golden-spiral distribution over the spherical cap; the seed only
    rotates the spiral's starting azimuth.
    """
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    cos_ap = math.cos(math.radians(aperture_deg))
    i = np.arange(count, dtype=np.float64)
    z = 1.0 - (i + 0.5) / count * (1.0 - cos_ap)
    phi = i * math.pi * (3.0 - math.sqrt(5.0)) + seed * 0.61803398875
    r = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    local = np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=-1)
    # rotate +z onto axis
    helper = np.array([1.0, 0.0, 0.0]) if abs(axis[2]) > 0.9 else np.array([0.0, 0.0, 1.0])
    bx = np.cross(helper, axis)
    bx /= np.linalg.norm(bx)
    by = np.cross(axis, bx)
    return local[:, 0:1] * bx + local[:, 1:2] * by + local[:, 2:3] * axis


def _extinction_at(grid: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Trilinear extinction; zero outside the sample domain."""
    dims = np.asarray(grid.shape, dtype=np.float64) - 1.0
    inside = np.all((pts >= 0.0) & (pts <= dims), axis=1)
    out = np.zeros(pts.shape[0])
    if inside.any():
        out[inside] = trilinear_batch(grid, pts[inside])
    return out


def occlusion_factor(extinction: np.ndarray, positions: np.ndarray,
                     light_dir, cone: ConeParams, step: float,
                     ambient: float = 0.15, seed: int = 0) -> np.ndarray:
    """Cone-averaged transmittance toward the light, clamped to [ambient, 1].

    positions are (N, 3) in voxel coordinates; each secondary ray marches
    at `step` voxels up to cone.reach, integrating extinction trilinearly.
    """
    positions = np.atleast_2d(np.asarray(positions, dtype=np.float64))
    dirs = cone_directions(light_dir, cone.aperture_deg, cone.samples, seed)
    n = positions.shape[0]
    avg = np.zeros(n)
    n_steps = max(1, int(math.ceil(cone.reach / step)))
    for d in dirs:
        tau = np.zeros(n)
        for k in range(n_steps):
            s = (k + 0.5) * step
            if s > cone.reach:
                break
            seg = min(step, cone.reach - k * step)
            tau += _extinction_at(extinction, positions + d[None, :] * s) * seg
        avg += np.exp(-tau)
    avg /= len(dirs)
    return np.clip(avg, ambient, 1.0)


def precompute_occlusion(extinction_grid: np.ndarray, params: RenderParams,
                         chunk: int = 65536) -> np.ndarray:
    """Occlusion factor at every voxel, as a grid for trilinear lookup."""
    nx, ny, nz = extinction_grid.shape
    xs = np.arange(nx, dtype=np.float64)
    ys = np.arange(ny, dtype=np.float64)
    zs = np.arange(nz, dtype=np.float64)
    gz, gy, gx = np.meshgrid(zs, ys, xs, indexing="ij")
    pos = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=-1)
    out = np.empty(pos.shape[0])
    for a in range(0, pos.shape[0], chunk):
        b = min(a + chunk, pos.shape[0])
        out[a:b] = occlusion_factor(extinction_grid, pos[a:b], params.light_dir,
                                    params.cone, params.step, params.ambient,
                                    params.seed)
    # x-fastest linear order back to arr[x, y, z]
    return out.reshape(nz, ny, nx).transpose(2, 1, 0)


def _ray_box(origin: np.ndarray, dirs: np.ndarray, hi: np.ndarray):
    """Slab intersection with [0, hi]; returns (t_near, t_far) clipped at 0."""
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
    t0 = (0.0 - origin[None, :]) * inv
    t1 = (hi[None, :] - origin[None, :]) * inv
    tmin = np.nanmax(np.minimum(t0, t1), axis=1)
    tmax = np.nanmin(np.maximum(t0, t1), axis=1)
    tmin = np.maximum(tmin, 0.0)
    return tmin, tmax


def _phong_shade(normal: np.ndarray, view: np.ndarray, light: np.ndarray) -> np.ndarray:
    ndl = np.clip((normal * light[None, :]).sum(axis=1), 0.0, None)
    half = light[None, :] - view
    half /= np.maximum(np.linalg.norm(half, axis=1, keepdims=True), 1e-12)
    spec = np.clip((normal * half).sum(axis=1), 0.0, None) ** 20
    return 0.2 + 0.7 * ndl + 0.3 * spec


def raycast(covol: ColorOpacityVolume, cam: Camera, params: RenderParams,
            occlusion_grid: np.ndarray | None = None,
            phong_attr: np.ndarray | None = None) -> np.ndarray:
    """Front-to-back composite of the classified volume; returns (H, W, 4) float.

    Per-sample opacity follows 1 - exp(-extinction * segment), which makes
    a homogeneous medium's transmittance exp(-sigma * L) independent of
    step size. Rays terminate once accumulated alpha reaches 0.99.
    """
    nx, ny, nz = covol.dims
    rgba_grid = [covol.rgba[:, ch].reshape(nz, ny, nx).transpose(2, 1, 0)
                 for ch in range(4)]
    ext_grid = covol.extinction.reshape(nz, ny, nx).transpose(2, 1, 0)

    if params.shading == "occlusion" and occlusion_grid is None:
        occlusion_grid = precompute_occlusion(ext_grid, params)
    grad = None
    if params.shading == "phong":
        if phong_attr is None:
            raise ValueError("phong shading needs the first attribute grid")
        grad = np.stack(np.gradient(phong_attr), axis=-1)

    origin, dirs = cam.rays()
    hi = np.array([nx - 1, ny - 1, nz - 1], dtype=np.float64)
    t_near, t_far = _ray_box(origin, dirs, hi)
    n_rays = dirs.shape[0]
    color = np.zeros((n_rays, 3))
    trans = np.ones(n_rays)
    hit = t_far > t_near
    step = params.step
    max_steps = int(math.ceil(float((t_far[hit] - t_near[hit]).max()) / step)) if hit.any() else 0
    light = np.asarray(params.light_dir, dtype=np.float64)
    light = light / np.linalg.norm(light)

    active = hit.copy()
    for k in range(max_steps):
        if not active.any():
            break
        t0 = t_near[active] + k * step
        seg = np.minimum(step, t_far[active] - t0)
        live = seg > 0.0
        if not live.any():
            active[active] = False
            continue
        idx = np.flatnonzero(active)[live]
        t_mid = t0[live] + seg[live] / 2.0
        pos = origin[None, :] + dirs[idx] * t_mid[:, None]
        sigma = trilinear_batch(ext_grid, pos)
        a_step = 1.0 - np.exp(-sigma * seg[live])
        contributes = a_step > 1e-7
        if contributes.any():
            cidx = idx[contributes]
            cpos = pos[contributes]
            premul = np.stack([trilinear_batch(g, cpos) for g in rgba_grid], axis=-1)
            alpha_s = np.maximum(premul[:, 3], 1e-12)
            base = premul[:, :3] / alpha_s[:, None]
            if params.shading == "occlusion":
                shade = trilinear_batch(occlusion_grid, cpos)
            else:
                g = np.stack([trilinear_batch(grad[..., i], cpos) for i in range(3)],
                             axis=-1)
                norm = np.linalg.norm(g, axis=1, keepdims=True)
                normal = -g / np.maximum(norm, 1e-12)
                shade = _phong_shade(normal, dirs[cidx], light)
            color[cidx] += (trans[cidx] * a_step[contributes] * shade)[:, None] * base
        trans[idx] *= 1.0 - a_step
        done = trans < 0.01
        active &= ~done
        exhausted = active & (t_near + (k + 1) * step >= t_far)
        active &= ~exhausted

    alpha = 1.0 - trans
    bg = np.asarray(params.background, dtype=np.float64)
    rgb = color + trans[:, None] * bg[None, :]
    img = np.concatenate([rgb, alpha[:, None]], axis=1)
    return img.reshape(cam.height, cam.width, 4)


def image_to_png_bytes(img: np.ndarray) -> bytes:
    """Float RGBA (H, W, 4) in [0, 1] to PNG bytes."""
    from io import BytesIO

    from PIL import Image

    arr = np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)
    buf = BytesIO()
    Image.fromarray(arr, "RGBA").save(buf, format="PNG")
    return buf.getvalue()
