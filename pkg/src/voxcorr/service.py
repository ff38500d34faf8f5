"""HTTP studio service: datasets, precompute jobs, densities, brushes, frames.

One writer (transfer-function edits, job control), many readers. Every
edit builds a complete immutable snapshot (classified volume + extinction)
that is swapped in atomically; a frame request renders wholly from one
snapshot, so responses never mix two transfer-function versions.
"""

from __future__ import annotations

import hashlib
import json
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Request, Response

from .classify import (ColorOpacityVolume, LinkIndex, TransferFunctionSet,
                       classify_volume, link_query)
from .density import DensityBuffer, draw_polyline_layer, full_plot_viewport, tone_map
from .pipeline import PipelineParams, PrecomputeResult, precompute
from .render import Camera, ConeParams, RenderParams, image_to_png_bytes, raycast

API = "/api/v1"


@dataclass
class Snapshot:
    tfs: TransferFunctionSet
    tf_hash: str
    covol: ColorOpacityVolume
    _occlusion: dict = field(default_factory=dict)
    _lock: threading.Lock = field(default_factory=threading.Lock)

    def occlusion_grid(self, params: RenderParams) -> np.ndarray:
        from .render import precompute_occlusion

        key = (params.sampling_rate, params.light_dir, params.cone.aperture_deg,
               params.cone.samples, params.cone.reach, params.ambient, params.seed)
        with self._lock:
            if key not in self._occlusion:
                nx, ny, nz = self.covol.dims
                ext = self.covol.extinction.reshape(nz, ny, nx).transpose(2, 1, 0)
                self._occlusion[key] = precompute_occlusion(ext, params)
            return self._occlusion[key]


@dataclass
class Job:
    job_id: str
    state: str = "pending"          # pending | running | done | error
    progress: float = 0.0
    message: str = ""
    error: str = ""


class Session:
    def __init__(self, descriptor: Path, cache_dir: Path):
        self.descriptor = descriptor
        self.cache_dir = cache_dir
        self.params = PipelineParams()
        self.result: PrecomputeResult | None = None
        self.link: LinkIndex | None = None
        self.snapshot: Snapshot | None = None
        self.job: Job | None = None
        self.lock = threading.Lock()

    def info(self) -> dict:
        from .volume import load_volume

        vol = self.result.volume if self.result else load_volume(self.descriptor)
        out = {
            "descriptor": str(self.descriptor),
            "dims": list(vol.dims),
            "spacing": list(vol.spacing),
            "attrs": vol.attr_names,
            "m": vol.m,
            "params": self.params.to_dict(),
            "precomputed": self.result is not None,
            "tf_hash": self.snapshot.tf_hash if self.snapshot else None,
        }
        if self.result:
            layout = self.result.ipv.layout
            out["axis_x"] = layout.axis_x.tolist()
            out["d"] = layout.d
            out["axis_order"] = list(self.result.ipv.axis_order)
            out["pair_count"] = self.result.ipv.n_pairs
            out["triple_count"] = self.result.ipv.n_triples
            out["bands"] = [list(layout.band(s)) for s in range(self.result.ipv.n_pairs)]
        return out

    def apply_tf(self, tfs: TransferFunctionSet) -> Snapshot:
        covol = classify_volume(self.result.ipv, self.result.fitvol, tfs)
        snap = Snapshot(tfs=tfs, tf_hash=tfs.content_hash(), covol=covol)
        self.snapshot = snap
        return snap


def _buffer_hash(buf: DensityBuffer) -> str:
    return hashlib.sha256(np.ascontiguousarray(buf.values).tobytes()).hexdigest()[:16]


def _parse_vec(text: str) -> tuple[float, float, float]:
    parts = [float(x) for x in text.split(",")]
    if len(parts) != 3:
        raise HTTPException(400, f"expected 3 comma-separated floats, got '{text}'")
    return tuple(parts)


def create_app(data_dir: str | Path = ".", cache_dir: str | Path = ".voxcorr-cache",
               frontend_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="voxcorr studio")
    data_dir = Path(data_dir)
    cache_dir = Path(cache_dir)
    state: dict = {"session": None, "jobs": {}}

    def session() -> Session:
        if state["session"] is None:
            raise HTTPException(404, "no dataset loaded")
        return state["session"]

    def ready() -> Session:
        s = session()
        if s.result is None:
            raise HTTPException(400, "dataset not precomputed; POST /precompute first")
        return s

    @app.get(API + "/datasets")
    def list_datasets():
        out = []
        for p in sorted(data_dir.rglob("*.json")):
            try:
                desc = json.loads(p.read_text())
            except (OSError, json.JSONDecodeError):
                continue
            if "attributes" in desc or "synthetic" in desc:
                out.append({"name": p.stem, "path": str(p)})
        return out

    @app.post(API + "/datasets/load")
    def load_dataset(body: dict):
        path = Path(body["path"])
        if not path.is_absolute():
            path = data_dir / path
        if not path.exists():
            raise HTTPException(404, f"descriptor {path} not found")
        state["session"] = Session(path, cache_dir)
        return state["session"].info()

    @app.get(API + "/session")
    def get_session():
        return session().info()

    @app.post(API + "/precompute")
    def start_precompute(body: dict | None = None):
        s = session()
        with s.lock:
            if s.job is not None and s.job.state in ("pending", "running"):
                raise HTTPException(409, "precompute already in progress")
            try:
                if body:
                    s.params = PipelineParams.from_dict({**s.params.to_dict(), **body})
                    s.params.validate()
            except ValueError as exc:
                raise HTTPException(400, str(exc))
            job = Job(job_id=uuid.uuid4().hex[:12], state="running")
            s.job = job
            state["jobs"][job.job_id] = job

        def work():
            try:
                def report(frac, msg):
                    job.progress = float(frac)
                    job.message = msg

                result = precompute(s.descriptor, s.params, s.cache_dir,
                                    progress=report)
                link = LinkIndex.build(result.volume, result.ipv,
                                       step=s.params.downsample_step)
                with s.lock:
                    s.result = result
                    s.link = link
                    s.apply_tf(TransferFunctionSet())
                job.state = "done"
                job.progress = 1.0
            except Exception as exc:  # surfaced through the job endpoint
                job.state = "error"
                job.error = str(exc)

        threading.Thread(target=work, daemon=True).start()
        return {"job_id": job.job_id}

    @app.get(API + "/jobs/{job_id}")
    def job_status(job_id: str):
        job = state["jobs"].get(job_id)
        if job is None:
            raise HTTPException(404, "unknown job")
        return {"job_id": job.job_id, "state": job.state,
                "progress": job.progress, "message": job.message,
                "error": job.error}

    def _buffer(s: Session, kind: str, index: int, smoothed: bool) -> DensityBuffer:
        r = s.result
        groups = {
            ("pair", True): r.kde_buffers, ("pair", False): r.raw_buffers,
            ("triple", True): r.kde_triple_buffers,
            ("triple", False): r.raw_triple_buffers,
        }
        bufs = groups.get((kind, smoothed))
        if bufs is None or index >= len(bufs):
            raise HTTPException(404, f"no {kind} density buffer {index}")
        return bufs[index]

    @app.get(API + "/density/{kind}/{index}.png")
    def density_png(kind: str, index: int, gamma: float = 1.0, smoothed: bool = True):
        s = ready()
        if gamma <= 0:
            raise HTTPException(400, "gamma must be > 0")
        buf = _buffer(s, kind, index, smoothed)
        from PIL import Image
        from io import BytesIO

        rgba = tone_map(buf, gamma=gamma)
        out = BytesIO()
        Image.fromarray(rgba, "RGBA").save(out, format="PNG")
        return Response(out.getvalue(), media_type="image/png",
                        headers={"X-Buffer-Hash": _buffer_hash(buf)})

    @app.get(API + "/density/{kind}/{index}.raw")
    def density_raw(kind: str, index: int, smoothed: bool = True):
        s = ready()
        buf = _buffer(s, kind, index, smoothed)
        data = buf.values.astype("<f4").tobytes()
        vp = buf.viewport
        return Response(data, media_type="application/octet-stream", headers={
            "X-Buffer-Hash": _buffer_hash(buf),
            "X-Width": str(buf.width), "X-Height": str(buf.height),
            "X-Total-Mass": repr(buf.total_mass),
            "X-Viewport": f"{vp.u0},{vp.u1},{vp.v0},{vp.v1}",
        })

    @app.get(API + "/polylines.png")
    def polylines_png(stride: int = 8, colored: bool = False, alpha: float = 0.05):
        s = ready()
        snap = s.snapshot
        vol = s.result.volume
        layout = s.result.ipv.layout
        ids = s.link.ids
        values = vol.stacked().reshape(vol.n_voxels, vol.m, order="F")[ids]
        values = values[:, list(s.result.ipv.axis_order)]
        rgba = None
        if colored:
            pre = snap.covol.rgba[ids]
            a = pre[:, 3:4]
            straight = np.where(a > 0, pre[:, :3] / np.maximum(a, 1e-12), 0.0)
            rgba = np.concatenate([straight, a], axis=1)
        vp = full_plot_viewport(layout)
        img = draw_polyline_layer(values, layout, vp, stroke_alpha=alpha,
                                  rgba_per_line=rgba)
        from PIL import Image
        from io import BytesIO

        out = BytesIO()
        Image.fromarray(img, "RGBA").save(out, format="PNG")
        return Response(out.getvalue(), media_type="image/png",
                        headers={"X-TF-Hash": snap.tf_hash})

    @app.get(API + "/tf")
    def get_tf():
        s = ready()
        snap = s.snapshot
        return Response(snap.tfs.to_json(), media_type="application/json",
                        headers={"X-TF-Hash": snap.tf_hash})

    @app.put(API + "/tf")
    def put_tf(body: dict):
        s = ready()
        try:
            tfs = TransferFunctionSet.from_json(json.dumps(body))
        except (ValueError, KeyError, TypeError) as exc:
            raise HTTPException(400, f"invalid transfer function set: {exc}")
        with s.lock:
            snap = s.apply_tf(tfs)
        return {"hash": snap.tf_hash}

    @app.post(API + "/link")
    def post_link(body: dict):
        s = ready()
        try:
            ids = link_query(
                s.link, layer=body["layer"], shape=body["shape"],
                subspace=int(body.get("subspace", 0)),
                flat=int(body.get("flat", 1)),
                pair=tuple(body["pair"]) if body.get("pair") else None,
            )
        except (KeyError, ValueError) as exc:
            raise HTTPException(400, f"bad link query: {exc}")
        return {"ids": [int(i) for i in ids]}

    @app.get(API + "/splom")
    def splom(i: int = 0, j: int = 1):
        s = ready()
        vol = s.result.volume
        if not (0 <= i < vol.m and 0 <= j < vol.m and i != j):
            raise HTTPException(400, "bad attribute pair")
        snap = s.snapshot
        ids = s.link.ids
        values = vol.stacked().reshape(vol.n_voxels, vol.m, order="F")[ids]
        pre = snap.covol.rgba[ids]
        a = pre[:, 3:4]
        straight = np.where(a > 0, pre[:, :3] / np.maximum(a, 1e-12), 0.0)
        rgba = np.concatenate([straight, a], axis=1)
        return {
            "ids": [int(x) for x in ids],
            "x": values[:, i].tolist(),
            "y": values[:, j].tolist(),
            "rgba": np.round(rgba, 4).tolist(),
            "tf_hash": snap.tf_hash,
        }

    @app.get(API + "/frame.png")
    def frame(eye: str, look_at: str, up: str = "0,0,1", fov: float = 40.0,
              w: int = 192, h: int = 192, rate: float = 0.5,
              shading: str = "occlusion", cone_samples: int = 8,
              cone_reach: float = 16.0, seed: int = 0):
        s = ready()
        snap = s.snapshot  # single atomic read; the whole frame uses this snapshot
        try:
            cam = Camera(eye=_parse_vec(eye), look_at=_parse_vec(look_at),
                         up=_parse_vec(up), fov_deg=fov, width=w, height=h)
            cam.basis()
            params = RenderParams(
                sampling_rate=rate, shading=shading, seed=seed,
                cone=ConeParams(samples=cone_samples, reach=cone_reach))
        except ValueError as exc:
            raise HTTPException(400, str(exc))
        occl = None
        phong_attr = None
        if shading == "occlusion":
            occl = snap.occlusion_grid(params)
        elif shading == "phong":
            phong_attr = s.result.volume.attrs[0]
        else:
            raise HTTPException(400, f"unknown shading '{shading}'")
        img = raycast(snap.covol, cam, params, occlusion_grid=occl,
                      phong_attr=phong_attr)
        return Response(image_to_png_bytes(img), media_type="image/png",
                        headers={"X-TF-Hash": snap.tf_hash})

    if frontend_dir and Path(frontend_dir).exists():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(frontend_dir), html=True))

    return app
