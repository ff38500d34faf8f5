"""Synthetic ground-truth volumes for testing and demos.

Structures (sphere / dome / box) are filled with correlated Gaussian
attribute tuples whose per-attribute-pair orientation angles are exact in
expectation, alongside an integer label volume. Per-attribute range pins
keep min-max normalization an exact identity so the configured
orientations survive into normalized data space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .volume import LabelVolume, MultivariateVolume, normalize_attr


@dataclass
class Distribution:
    """Attribute-tuple distribution of one structure.

    kind "gaussian": mean + major * t * u + minor * (noise orthogonal to u),
    where u is the unit direction chained from per-pair orientation angles;
    the sample covariance of pair (i, i+1) then has its major eigenvector
    at exactly orientations[i]. kind "constant": every tuple equals mean.
    """

    kind: str                                # "gaussian" | "constant"
    mean: tuple[float, ...]
    orientations: tuple[float, ...] = ()     # m-1 angles, each in (-pi/2, pi/2]
    major: float = 0.1
    minor: float = 0.02

    def direction(self) -> np.ndarray:
        """Unit direction whose pair projections realize the orientation chain."""
        m = len(self.mean)
        if len(self.orientations) != m - 1:
            raise ValueError(
                f"need {m - 1} pair orientations for {m} attributes, "
                f"got {len(self.orientations)}"
            )
        u = np.zeros(m, dtype=np.float64)
        th0 = self.orientations[0]
        u[0], u[1] = math.cos(th0), math.sin(th0)
        for k, th in enumerate(self.orientations[1:], start=1):
            if abs(math.cos(th)) < 1e-12:
                if abs(u[k]) > 1e-12:
                    raise ValueError(f"orientation chain inconsistent at pair {k}")
                u[k + 1] = 1.0
            else:
                if abs(u[k]) < 1e-12 and abs(math.sin(th)) > 1e-12:
                    raise ValueError(f"orientation chain inconsistent at pair {k}")
                u[k + 1] = u[k] * math.tan(th)
        n = np.linalg.norm(u)
        if n < 1e-12:
            raise ValueError("degenerate direction chain")
        return u / n

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        mean = np.asarray(self.mean, dtype=np.float64)
        if self.kind == "constant":
            return np.tile(mean, (count, 1))
        if self.kind != "gaussian":
            raise ValueError(f"unknown distribution kind '{self.kind}'")
        u = self.direction()
        t = rng.standard_normal(count)
        g = rng.standard_normal((count, len(mean)))
        g_perp = g - np.outer(g @ u, u)
        return mean + self.major * np.outer(t, u) + self.minor * g_perp

    @classmethod
    def from_dict(cls, d: dict) -> "Distribution":
        return cls(
            kind=d["kind"],
            mean=tuple(d["mean"]),
            orientations=tuple(d.get("orientations", ())),
            major=float(d.get("major", 0.1)),
            minor=float(d.get("minor", 0.02)),
        )

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "mean": list(self.mean),
            "orientations": list(self.orientations),
            "major": self.major,
            "minor": self.minor,
        }


@dataclass
class Structure:
    shape: str                               # "sphere" | "dome" | "box"
    center: tuple[float, float, float]
    radius: float = 0.0                      # sphere/dome
    extent: tuple[float, float, float] = (0.0, 0.0, 0.0)  # box half-widths
    axis: tuple[float, float, float] = (0.0, 0.0, 1.0)    # dome cut normal
    distribution: Distribution = None

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Tight axis-aligned bounds of the structure, in voxel units."""
        c = np.asarray(self.center, dtype=np.float64)
        if self.shape == "box":
            e = np.asarray(self.extent, dtype=np.float64)
            return c - e, c + e
        r = self.radius
        if self.shape == "sphere":
            return c - r, c + r
        # dome: the half-ball u.axis >= 0 reaches only sqrt(1-a_i^2) against the cut
        ax = np.asarray(self.axis, dtype=np.float64)
        ax = ax / np.linalg.norm(ax)
        reach_pos = np.where(ax >= 0.0, 1.0, np.sqrt(1.0 - ax * ax))
        reach_neg = np.where(ax <= 0.0, 1.0, np.sqrt(1.0 - ax * ax))
        return c - r * reach_neg, c + r * reach_pos

    def mask(self, coords: np.ndarray) -> np.ndarray:
        """Membership mask over coords (..., 3) in voxel units."""
        c = np.asarray(self.center, dtype=np.float64)
        d = coords - c
        if self.shape == "sphere":
            return (d * d).sum(axis=-1) <= self.radius**2
        if self.shape == "dome":
            ax = np.asarray(self.axis, dtype=np.float64)
            ax = ax / np.linalg.norm(ax)
            inside = (d * d).sum(axis=-1) <= self.radius**2
            return inside & ((d @ ax) >= 0.0)
        if self.shape == "box":
            e = np.asarray(self.extent, dtype=np.float64)
            return np.all(np.abs(d) <= e, axis=-1)
        raise ValueError(f"unknown structure shape '{self.shape}'")

    @classmethod
    def from_dict(cls, d: dict) -> "Structure":
        return cls(
            shape=d["shape"],
            center=tuple(d["center"]),
            radius=float(d.get("radius", 0.0)),
            extent=tuple(d.get("extent", (0.0, 0.0, 0.0))),
            axis=tuple(d.get("axis", (0.0, 0.0, 1.0))),
            distribution=Distribution.from_dict(d["distribution"]),
        )

    def to_dict(self) -> dict:
        return {
            "shape": self.shape,
            "center": list(self.center),
            "radius": self.radius,
            "extent": list(self.extent),
            "axis": list(self.axis),
            "distribution": self.distribution.to_dict(),
        }


@dataclass
class SyntheticSpec:
    dims: tuple[int, int, int]
    structures: list[Structure]
    background: Distribution
    attr_names: list[str] = field(default_factory=list)
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    @property
    def m(self) -> int:
        return len(self.background.mean)

    def validate(self) -> None:
        dims = np.asarray(self.dims)
        for i, s in enumerate(self.structures):
            lo, hi = s.bounds()
            if np.any(lo < -0.5) or np.any(hi > dims - 0.5):
                raise ValueError(f"structure {i} does not fit inside dims {self.dims}")
            for th in s.distribution.orientations:
                if not (-math.pi / 2 < th <= math.pi / 2 + 1e-12):
                    raise ValueError(f"structure {i}: orientation {th} outside (-pi/2, pi/2]")
            if len(s.distribution.mean) != self.m:
                raise ValueError(f"structure {i}: mean length != background's")

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        return cls(
            dims=tuple(int(x) for x in d["dims"]),
            structures=[Structure.from_dict(s) for s in d.get("structures", [])],
            background=Distribution.from_dict(d["background"]),
            attr_names=list(d.get("attr_names", [])),
            spacing=tuple(d.get("spacing", (1.0, 1.0, 1.0))),
        )

    def to_dict(self) -> dict:
        return {
            "dims": list(self.dims),
            "structures": [s.to_dict() for s in self.structures],
            "background": self.background.to_dict(),
            "attr_names": list(self.attr_names),
            "spacing": list(self.spacing),
        }


def gen_synthetic(spec: SyntheticSpec, seed: int) -> tuple[MultivariateVolume, LabelVolume]:
    """Generate a labeled multivariate volume from a synthetic spec.

    Deterministic for a fixed seed. Overlapping structures resolve by list
    order (later wins). Values are clipped to [0, 1]; one 0-valued and one
    1-valued pin voxel per attribute (on the x edge, background-labeled)
    makes the subsequent min-max normalization an exact identity.
    """
    spec.validate()
    rng = np.random.default_rng(seed)
    dims = spec.dims
    m = spec.m
    n = int(np.prod(dims))

    coords = np.stack(
        np.meshgrid(*(np.arange(d, dtype=np.float64) for d in dims), indexing="ij"),
        axis=-1,
    ).reshape(n, 3)

    values = spec.background.sample(n, rng)
    labels = np.zeros(n, dtype=np.int32)
    for k, s in enumerate(spec.structures, start=1):
        member = s.mask(coords)
        cnt = int(member.sum())
        if cnt:
            values[member] = s.distribution.sample(cnt, rng)
        labels[member] = k

    np.clip(values, 0.0, 1.0, out=values)
    # range pins: 2 background edge voxels per attribute carry the exact extremes
    for j in range(m):
        values[2 * j, j] = 0.0
        values[2 * j + 1, j] = 1.0

    names = list(spec.attr_names) or [f"v{j}" for j in range(m)]
    attrs, ranges = [], []
    for j in range(m):
        grid, rg = normalize_attr(values[:, j].reshape(dims))
        attrs.append(grid)
        ranges.append(rg)
    vol = MultivariateVolume(dims=dims, spacing=spec.spacing, attr_names=names,
                             attrs=attrs, norm_ranges=ranges)
    return vol, LabelVolume(dims=dims, label=labels.reshape(dims))


def three_gaussian_phantom(size: int = 64,
                           structure_size: int | None = None) -> SyntheticSpec:
    """Canonical test phantom: a sphere and two domes with distinct correlations.

    All three structures and the background share their mean, so they
    overlap completely in value space and are separable only through local
    correlation: the sphere at pi/6, the domes at +pi/4 and -pi/4. The
    background carries a weak correlation at 1.2 rad, keeping its fitted
    direction well defined and away from all structure angles.

    structure_size scales the structure geometry independently of the
    domain (defaults to size), so the background fraction can be varied
    while keeping the structures' member counts.
    """
    if size < 24:
        raise ValueError("phantom geometry needs size >= 24")
    s = (structure_size if structure_size is not None else size) / 64.0
    c = size / 2.0
    mean = (0.5, 0.5, 0.5)
    return SyntheticSpec(
        dims=(size, size, size),
        structures=[
            Structure(
                shape="sphere", center=(c, c, c - 0.5 * s), radius=13.5 * s,
                distribution=Distribution("gaussian", mean,
                                          (math.pi / 6, math.pi / 6), 0.13, 0.03),
            ),
            Structure(
                shape="dome", center=(c, c, c + 13.5 * s), radius=17 * s,
                axis=(0.0, 0.0, 1.0),
                distribution=Distribution("gaussian", mean,
                                          (math.pi / 4, math.pi / 4), 0.13, 0.03),
            ),
            Structure(
                shape="dome", center=(c, c, c - 14.5 * s), radius=17 * s,
                axis=(0.0, 0.0, -1.0),
                distribution=Distribution("gaussian", mean,
                                          (-math.pi / 4, -math.pi / 4), 0.13, 0.03),
            ),
        ],
        background=Distribution("gaussian", mean, (1.2, 0.3), 0.04, 0.015),
        attr_names=["v0", "v1", "v2"],
    )


def gen_rotating_field(size: int = 48, theta0: float = math.pi / 6,
                       dtheta: float = 0.25, carrier_amp: float = 0.35,
                       third_scale: float = 0.6) -> MultivariateVolume:
    """Smooth noise-free field whose local correlation direction rotates with z.

    All attributes ride one linear carrier, so the dominant local direction
    is sharply defined everywhere; its projection onto the (0, 1) pair
    turns slowly with z. The third attribute follows the carrier at a
    different amplitude, which per-attribute normalization rescales without
    harming the conditioning. Useful as a well-conditioned target for
    comparing fitting strategies.
    """
    ax = np.arange(size, dtype=np.float64)
    x, y, z = np.meshgrid(ax, ax, ax, indexing="ij")
    p = carrier_amp * ((x + y + z) / (3.0 * (size - 1)) - 0.5) * 2.0
    theta = theta0 + dtheta * (z / (size - 1) - 0.5)
    a0 = 0.5 + p * np.cos(theta)
    a1 = 0.5 + p * np.sin(theta)
    a2 = 0.5 + third_scale * p
    attrs, ranges = [], []
    for g in (a0, a1, a2):
        norm, rg = normalize_attr(np.clip(g, 0.0, 1.0))
        attrs.append(norm)
        ranges.append(rg)
    return MultivariateVolume(dims=(size, size, size), spacing=(1.0, 1.0, 1.0),
                              attr_names=["v0", "v1", "v2"], attrs=attrs,
                              norm_ranges=ranges)
