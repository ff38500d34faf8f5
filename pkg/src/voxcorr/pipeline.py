"""End-to-end precompute pipeline with content-addressed caching.

volume -> saliency/octree -> fit volume -> indexed-point volumes ->
density buffers (raw and KDE-smoothed). Each stage is cached by the
dataset digest plus the parameters it depends on; a re-run with identical
inputs loads everything and performs no fitting work.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .cache import ArtifactCache, artifact_key, dataset_digest
from .density import DensityBuffer, KdeParams, kde_dynamic, splat_volume
from .fitting import FitParams, FitVolume, build_fit_volume
from .indexed import AxisLayout, IndexedPointVolume, build_indexed_volumes
from .saliency import Octree, build_octree, build_saliency
from .volume import MultivariateVolume, load_volume


@dataclass
class PipelineParams:
    t_s: float = 0.03
    t_e: float = 1e-4
    min_node: int = 4
    halfwidth: int = 3
    n_samples: int = 100
    seed: int = 0
    axis_order: tuple[int, ...] | None = None
    do2flat: bool = False
    image_width: int = 900
    image_height: int = 300
    r_max: int = 8
    mass_cap: float = 32.0
    downsample_step: int = 8

    def validate(self) -> None:
        if self.t_e > self.t_s:
            raise ValueError(f"t_e ({self.t_e}) must not exceed t_s ({self.t_s})")
        if self.t_s < 0 or self.t_e < 0:
            raise ValueError("thresholds must be nonnegative")
        if self.min_node < 2:
            raise ValueError("min_node must be >= 2")
        if self.halfwidth < 1:
            raise ValueError("halfwidth must be >= 1")
        if self.n_samples < 4:
            raise ValueError("n_samples must be >= 4")
        KdeParams(r_max=self.r_max, mass_cap=self.mass_cap)

    def to_dict(self) -> dict:
        return {
            "t_s": self.t_s, "t_e": self.t_e, "min_node": self.min_node,
            "halfwidth": self.halfwidth, "n_samples": self.n_samples,
            "seed": self.seed,
            "axis_order": list(self.axis_order) if self.axis_order else None,
            "do2flat": self.do2flat,
            "image_width": self.image_width, "image_height": self.image_height,
            "r_max": self.r_max, "mass_cap": self.mass_cap,
            "downsample_step": self.downsample_step,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineParams":
        p = cls()
        for k, v in d.items():
            if not hasattr(p, k):
                raise ValueError(f"unknown pipeline parameter '{k}'")
            if k == "axis_order" and v is not None:
                v = tuple(int(x) for x in v)
            setattr(p, k, v)
        p.validate()
        return p


@dataclass
class PrecomputeResult:
    volume: MultivariateVolume
    octree: Octree
    fitvol: FitVolume
    ipv: IndexedPointVolume
    raw_buffers: list[DensityBuffer]
    kde_buffers: list[DensityBuffer]
    raw_triple_buffers: list[DensityBuffer] = field(default_factory=list)
    kde_triple_buffers: list[DensityBuffer] = field(default_factory=list)
    keys: dict[str, str] = field(default_factory=dict)
    stats: dict = field(default_factory=dict)


def precompute(descriptor: str | Path, params: PipelineParams,
               cache_dir: str | Path, progress=None) -> PrecomputeResult:
    """Run (or load) every pipeline stage for a dataset descriptor."""
    params.validate()
    report = progress or (lambda frac, msg: None)
    cache = ArtifactCache(cache_dir)
    digest = dataset_digest(descriptor)

    report(0.02, "loading volume")
    vol = load_volume(descriptor)
    if params.axis_order is not None and sorted(params.axis_order) != list(range(vol.m)):
        raise ValueError("axis_order must permute all attributes")

    keys = {}
    keys["octree"] = artifact_key(digest, stage="octree", t_s=params.t_s,
                                  t_e=params.t_e, min_node=params.min_node,
                                  radius=params.halfwidth)
    keys["fit"] = artifact_key(digest, stage="fit", octree=keys["octree"],
                               halfwidth=params.halfwidth,
                               n_samples=params.n_samples, seed=params.seed)
    keys["indexed"] = artifact_key(digest, stage="indexed", fit=keys["fit"],
                                   axis_order=params.axis_order,
                                   do2flat=params.do2flat)
    keys["density"] = artifact_key(digest, stage="density",
                                   indexed=keys["indexed"],
                                   w=params.image_width, h=params.image_height,
                                   r_max=params.r_max, mass_cap=params.mass_cap)

    stats = {"cached": {}, "pca_count": 0}

    report(0.05, "saliency + octree")
    if cache.has("octree", keys["octree"]):
        octree = cache.load_octree(keys["octree"])
        stats["cached"]["octree"] = True
    else:
        sal = build_saliency(vol, radius=params.halfwidth)
        octree = build_octree(sal.filtered, params.t_s, params.t_e, params.min_node)
        cache.save_octree(keys["octree"], octree)
        stats["cached"]["octree"] = False

    report(0.15, "local fitting")
    if cache.has("fit", keys["fit"]):
        fitvol = cache.load_fit(keys["fit"])
        stats["cached"]["fit"] = True
    else:
        fitvol = build_fit_volume(vol, octree, FitParams(
            halfwidth=params.halfwidth, n_samples=params.n_samples,
            seed=params.seed))
        cache.save_fit(keys["fit"], fitvol)
        stats["cached"]["fit"] = False
        stats["pca_count"] = fitvol.stats.get("pca_count", 0)

    report(0.6, "indexed points")
    if cache.has("indexed", keys["indexed"]):
        ipv = cache.load_indexed(keys["indexed"])
        stats["cached"]["indexed"] = True
    else:
        layout = AxisLayout(m=vol.m)
        ipv = build_indexed_volumes(fitvol, layout, do2flat=params.do2flat,
                                    axis_order=params.axis_order)
        cache.save_indexed(keys["indexed"], ipv)
        stats["cached"]["indexed"] = False

    report(0.75, "density estimation")
    kde_params = KdeParams(r_max=params.r_max, mass_cap=params.mass_cap)
    if cache.has("density", keys["density"]):
        stacked = cache.load_density(keys["density"])
        half = len(stacked) // 2
        raw, smooth = stacked[:half], stacked[half:]
        stats["cached"]["density"] = True
    else:
        raw = splat_volume(ipv, params.image_width, params.image_height, "pair")
        raw += splat_volume(ipv, params.image_width, params.image_height, "triple")
        smooth = [kde_dynamic(b, None, kde_params) for b in raw]
        cache.save_density(keys["density"], raw + smooth)
        stats["cached"]["density"] = False

    raw_pairs = [b for b in raw if b.kind == "pair"]
    raw_triples = [b for b in raw if b.kind == "triple"]
    kde_pairs = [b for b in smooth if b.kind == "pair"]
    kde_triples = [b for b in smooth if b.kind == "triple"]

    report(1.0, "done")
    return PrecomputeResult(volume=vol, octree=octree, fitvol=fitvol, ipv=ipv,
                            raw_buffers=raw_pairs, kde_buffers=kde_pairs,
                            raw_triple_buffers=raw_triples,
                            kde_triple_buffers=kde_triples,
                            keys=keys, stats=stats)
