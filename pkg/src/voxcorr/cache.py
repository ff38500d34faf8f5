"""Content-addressed binary caches for pipeline artifacts.

Keys are hashes of the dataset digest plus the parameters that influence
an artifact, so stale caches can never be served and re-running a
pipeline with identical inputs is a no-op.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .density import DensityBuffer, Viewport
from .fitting import FitParams, FitVolume
from .indexed import AxisLayout, IndexedPointVolume
from .saliency import Octree, octree_from_arrays, octree_to_arrays


def dataset_digest(descriptor: str | Path) -> str:
    """Digest of the descriptor text plus any referenced raw files."""
    path = Path(descriptor)
    h = hashlib.sha256()
    desc = json.loads(path.read_text())
    h.update(json.dumps(desc, sort_keys=True).encode())
    for entry in desc.get("attributes", []):
        raw = path.parent / entry["path"]
        if raw.exists():
            h.update(raw.read_bytes())
    return h.hexdigest()


def artifact_key(digest: str, **params) -> str:
    blob = digest + json.dumps(params, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


class ArtifactCache:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def path(self, kind: str, key: str) -> Path:
        return self.root / f"{key}.{kind}.npz"

    def has(self, kind: str, key: str) -> bool:
        return self.path(kind, key).exists()

    # -- octree --
    def save_octree(self, key: str, tree: Octree) -> None:
        np.savez_compressed(self.path("octree", key), **octree_to_arrays(tree))

    def load_octree(self, key: str) -> Octree:
        with np.load(self.path("octree", key)) as z:
            return octree_from_arrays({k: z[k] for k in z.files})

    # -- fit volume --
    def save_fit(self, key: str, fit: FitVolume) -> None:
        np.savez_compressed(
            self.path("fit", key),
            dims=np.asarray(fit.dims), m=np.asarray(fit.m),
            xi=fit.xi, e1=fit.e1, e2=fit.e2, eigenvalues=fit.eigenvalues,
            valid2flat=fit.valid2flat,
            params=np.asarray([fit.params.halfwidth, fit.params.n_samples,
                               fit.params.seed]),
        )

    def load_fit(self, key: str) -> FitVolume:
        with np.load(self.path("fit", key)) as z:
            hw, ns, seed = (int(x) for x in z["params"])
            return FitVolume(
                dims=tuple(int(d) for d in z["dims"]), m=int(z["m"]),
                xi=z["xi"], e1=z["e1"], e2=z["e2"],
                eigenvalues=z["eigenvalues"], valid2flat=z["valid2flat"],
                params=FitParams(halfwidth=hw, n_samples=ns, seed=seed),
                stats={"pca_count": 0, "mode": "cached"},
            )

    # -- indexed point volumes --
    def save_indexed(self, key: str, ipv: IndexedPointVolume) -> None:
        payload = {
            "dims": np.asarray(ipv.dims),
            "axis_order": np.asarray(ipv.axis_order),
            "layout": np.asarray([ipv.layout.m, ipv.layout.d]),
            "pair_u": ipv.pair_u, "pair_v": ipv.pair_v, "pair_skip": ipv.pair_skip,
        }
        if ipv.triple_u is not None:
            payload.update(triple_u=ipv.triple_u, triple_v=ipv.triple_v,
                           triple_skip=ipv.triple_skip)
        np.savez_compressed(self.path("indexed", key), **payload)

    def load_indexed(self, key: str) -> IndexedPointVolume:
        with np.load(self.path("indexed", key)) as z:
            layout = AxisLayout(m=int(z["layout"][0]), d=float(z["layout"][1]))
            has3 = "triple_u" in z.files
            return IndexedPointVolume(
                layout=layout,
                axis_order=tuple(int(a) for a in z["axis_order"]),
                dims=tuple(int(d) for d in z["dims"]),
                pair_u=z["pair_u"], pair_v=z["pair_v"], pair_skip=z["pair_skip"],
                triple_u=z["triple_u"] if has3 else None,
                triple_v=z["triple_v"] if has3 else None,
                triple_skip=z["triple_skip"] if has3 else None,
            )

    # -- density buffers --
    def save_density(self, key: str, buffers: list[DensityBuffer]) -> None:
        payload = {"count": np.asarray(len(buffers))}
        for i, b in enumerate(buffers):
            vp = b.viewport
            payload[f"values_{i}"] = b.values.astype(np.float32)
            payload[f"meta_{i}"] = np.asarray(
                [b.width, b.height, b.subspace, 1.0 if b.kind == "pair" else 2.0,
                 b.total_mass, vp.u0, vp.u1, vp.v0, vp.v1])
        np.savez_compressed(self.path("density", key), **payload)

    def load_density(self, key: str) -> list[DensityBuffer]:
        out = []
        with np.load(self.path("density", key)) as z:
            for i in range(int(z["count"])):
                meta = z[f"meta_{i}"]
                w, h = int(meta[0]), int(meta[1])
                vp = Viewport(u0=float(meta[5]), u1=float(meta[6]),
                              v0=float(meta[7]), v1=float(meta[8]),
                              width=w, height=h)
                out.append(DensityBuffer(
                    width=w, height=h, subspace=int(meta[2]),
                    kind="pair" if meta[3] == 1.0 else "triple",
                    values=z[f"values_{i}"].astype(np.float64),
                    total_mass=float(meta[4]), viewport=vp))
        return out
