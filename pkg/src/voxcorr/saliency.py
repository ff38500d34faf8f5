"""Multivariate saliency field and the octree that skips homogeneous regions.

Saliency is the sum of per-attribute min-max-normalized gradient
magnitudes, low-pass filtered with a separable box kernel sized like the
fitting neighborhood. The octree subdivides where the filtered saliency
range exceeds t_s and assigns each leaf a fitting strategy from its
saliency variance.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np
from scipy import ndimage

from .volume import MultivariateVolume, gradient_magnitude, normalize_attr


@dataclass
class SaliencyField:
    raw: np.ndarray           # S, (nx, ny, nz) >= 0
    filtered: np.ndarray      # S_f after box filtering
    filter_radius: int


def compute_saliency(vol: MultivariateVolume) -> np.ndarray:
    """Sum of per-attribute normalized gradient magnitudes."""
    total = np.zeros(vol.dims, dtype=np.float64)
    for grid in vol.attrs:
        mag = gradient_magnitude(grid, vol.spacing)
        norm, _ = normalize_attr(mag)
        total += norm
    return total


def smooth_saliency(s: np.ndarray, radius: int) -> np.ndarray:
    """Separable box average of width 2*radius+1.

    Boundary windows average only in-bounds voxels (coverage-normalized),
    mirroring how fitting neighborhoods clip at the domain edge; interior
    values are the plain box convolution.
    """
    if radius < 0:
        raise ValueError("radius must be >= 0")
    if radius == 0:
        return s.copy()
    size = 2 * radius + 1
    total = ndimage.uniform_filter(s, size=size, mode="constant", cval=0.0)
    coverage = ndimage.uniform_filter(np.ones_like(s), size=size,
                                      mode="constant", cval=0.0)
    return total / coverage


def build_saliency(vol: MultivariateVolume, radius: int) -> SaliencyField:
    raw = compute_saliency(vol)
    return SaliencyField(raw=raw, filtered=smooth_saliency(raw, radius),
                         filter_radius=radius)


class LeafStrategy(IntEnum):
    HOMOGENEOUS = 0    # variance < t_e: one fit replicated over the leaf
    INTERPOLATE = 1    # variance in [t_e, t_s]: corner fits, frames interpolated
    PER_VOXEL = 2      # variance > t_s (minimum-size leaves only)


@dataclass
class OctreeNode:
    lo: tuple[int, int, int]            # inclusive voxel AABB corner
    size: tuple[int, int, int]
    children: list["OctreeNode"] = field(default_factory=list)
    value_range: float = 0.0            # S_f max - min over the box
    variance: float = 0.0               # S_f variance over the box
    strategy: LeafStrategy | None = None

    @property
    def is_leaf(self) -> bool:
        return not self.children

    @property
    def hi(self) -> tuple[int, int, int]:
        return tuple(l + s for l, s in zip(self.lo, self.size))

    def box(self, grid: np.ndarray) -> np.ndarray:
        x0, y0, z0 = self.lo
        x1, y1, z1 = self.hi
        return grid[x0:x1, y0:y1, z0:z1]


@dataclass
class Octree:
    root: OctreeNode
    t_s: float
    t_e: float
    min_node: int

    def leaves(self) -> list[OctreeNode]:
        out, stack = [], [self.root]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                out.append(node)
            else:
                stack.extend(node.children)
        return out

    def leaf_count(self) -> int:
        return len(self.leaves())

    def strategy_counts(self) -> dict[str, int]:
        counts = {s.name: 0 for s in LeafStrategy}
        for leaf in self.leaves():
            counts[leaf.strategy.name] += 1
        return counts


def build_octree(s_f: np.ndarray, t_s: float, t_e: float, min_node: int = 4) -> Octree:
    """Subdivide on S_f value range; classify leaves by S_f variance.

    A node splits (into 8, at floor midpoints) while its range exceeds t_s
    and every child would keep at least min_node voxels per axis.
    """
    if not (0.0 <= t_e <= t_s):
        raise ValueError(f"need 0 <= t_e <= t_s, got t_e={t_e} t_s={t_s}")
    if min_node < 2:
        raise ValueError("min_node must be >= 2")

    def make(lo: tuple[int, int, int], size: tuple[int, int, int]) -> OctreeNode:
        node = OctreeNode(lo=lo, size=size)
        box = node.box(s_f)
        node.value_range = float(box.max() - box.min())
        node.variance = float(box.var())
        can_split = all(s >= 2 * min_node for s in size)
        if node.value_range > t_s and can_split:
            halves = [(s // 2, s - s // 2) for s in size]
            for dz in (0, 1):
                for dy in (0, 1):
                    for dx in (0, 1):
                        clo = (
                            lo[0] + (halves[0][0] if dx else 0),
                            lo[1] + (halves[1][0] if dy else 0),
                            lo[2] + (halves[2][0] if dz else 0),
                        )
                        csz = (halves[0][dx], halves[1][dy], halves[2][dz])
                        node.children.append(make(clo, csz))
        else:
            if node.variance < t_e:
                node.strategy = LeafStrategy.HOMOGENEOUS
            elif node.variance <= t_s:
                node.strategy = LeafStrategy.INTERPOLATE
            else:
                node.strategy = LeafStrategy.PER_VOXEL
        return node

    root = make((0, 0, 0), tuple(int(d) for d in s_f.shape))
    return Octree(root=root, t_s=t_s, t_e=t_e, min_node=min_node)


def octree_to_arrays(tree: Octree) -> dict[str, np.ndarray]:
    """Flatten to parallel arrays for binary caching."""
    nodes: list[OctreeNode] = []
    stack = [tree.root]
    while stack:
        node = stack.pop()
        nodes.append(node)
        stack.extend(node.children)
    index = {id(n): i for i, n in enumerate(nodes)}
    count = len(nodes)
    lo = np.zeros((count, 3), dtype=np.int32)
    size = np.zeros((count, 3), dtype=np.int32)
    children = np.full((count, 8), -1, dtype=np.int32)
    rng = np.zeros(count, dtype=np.float64)
    var = np.zeros(count, dtype=np.float64)
    strat = np.full(count, -1, dtype=np.int8)
    for i, node in enumerate(nodes):
        lo[i] = node.lo
        size[i] = node.size
        rng[i] = node.value_range
        var[i] = node.variance
        if node.strategy is not None:
            strat[i] = int(node.strategy)
        for j, ch in enumerate(node.children):
            children[i, j] = index[id(ch)]
    return {
        "lo": lo, "size": size, "children": children,
        "value_range": rng, "variance": var, "strategy": strat,
        "params": np.array([tree.t_s, tree.t_e, float(tree.min_node)]),
    }


def octree_from_arrays(arrs: dict[str, np.ndarray]) -> Octree:
    count = arrs["lo"].shape[0]
    nodes = [
        OctreeNode(lo=tuple(int(v) for v in arrs["lo"][i]),
                   size=tuple(int(v) for v in arrs["size"][i]),
                   value_range=float(arrs["value_range"][i]),
                   variance=float(arrs["variance"][i]))
        for i in range(count)
    ]
    for i in range(count):
        kids = [int(c) for c in arrs["children"][i] if c >= 0]
        nodes[i].children = [nodes[c] for c in kids]
        s = int(arrs["strategy"][i])
        if s >= 0:
            nodes[i].strategy = LeafStrategy(s)
    t_s, t_e, min_node = (float(v) for v in arrs["params"])
    return Octree(root=nodes[0], t_s=t_s, t_e=t_e, min_node=int(min_node))
