"""Command-line interface: generate data, precompute, export images, serve."""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click
import numpy as np

DEFAULT_CACHE = os.environ.get("VOXCORR_CACHE", ".voxcorr-cache")


def _pipeline_params(kwargs) -> "PipelineParams":
    from .pipeline import PipelineParams

    p = PipelineParams(
        t_s=kwargs["t_s"], t_e=kwargs["t_e"], min_node=kwargs["min_node"],
        halfwidth=kwargs["halfwidth"], n_samples=kwargs["n_samples"],
        seed=kwargs["seed"], do2flat=kwargs["do2flat"],
        image_width=kwargs["width"], image_height=kwargs["height"],
        r_max=kwargs["r_max"], mass_cap=kwargs["mass_cap"],
    )
    if kwargs.get("axis_order"):
        p.axis_order = tuple(int(x) for x in kwargs["axis_order"].split(","))
    try:
        p.validate()
    except ValueError as exc:
        raise click.UsageError(str(exc))
    return p


def _param_options(f):
    for opt in reversed([
        click.option("--t-s", "t_s", type=float, default=0.03, show_default=True),
        click.option("--t-e", "t_e", type=float, default=1e-4, show_default=True),
        click.option("--min-node", type=int, default=4, show_default=True),
        click.option("--halfwidth", type=int, default=3, show_default=True),
        click.option("--n-samples", type=int, default=100, show_default=True),
        click.option("--seed", type=int, default=0, show_default=True),
        click.option("--axis-order", type=str, default=None,
                     help="comma-separated attribute permutation"),
        click.option("--do2flat/--no-do2flat", default=False, show_default=True),
        click.option("--width", type=int, default=900, show_default=True),
        click.option("--height", type=int, default=300, show_default=True),
        click.option("--r-max", type=int, default=8, show_default=True),
        click.option("--mass-cap", type=float, default=32.0, show_default=True),
        click.option("--cache-dir", type=click.Path(), default=DEFAULT_CACHE,
                     show_default=True),
    ]):
        f = opt(f)
    return f


@click.group()
def main():
    """Local-correlation indexed-point studio for multivariate volumes."""


@main.command("gen-synthetic")
@click.option("--preset", type=click.Choice(["three-gaussians", "rotating"]),
              default="three-gaussians", show_default=True)
@click.option("--spec", "spec_path", type=click.Path(exists=True), default=None,
              help="JSON synthetic spec (overrides --preset)")
@click.option("--size", type=int, default=64, show_default=True)
@click.option("--seed", type=int, default=7, show_default=True)
@click.option("-o", "--out", "out_dir", type=click.Path(), required=True)
def gen_synthetic_cmd(preset, spec_path, size, seed, out_dir):
    """Write a synthetic dataset (raw files + descriptor + labels)."""
    from .synthetic import (SyntheticSpec, gen_synthetic, gen_rotating_field,
                            three_gaussian_phantom)
    from .volume import save_raw

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    labels = None
    if spec_path:
        spec = SyntheticSpec.from_dict(json.loads(Path(spec_path).read_text()))
        vol, labels = gen_synthetic(spec, seed)
    elif preset == "three-gaussians":
        spec = three_gaussian_phantom(size)
        vol, labels = gen_synthetic(spec, seed)
    else:
        vol = gen_rotating_field(size)

    entries = []
    for name, grid in zip(vol.attr_names, vol.attrs):
        fname = f"{name}.raw"
        save_raw(grid, out / fname)
        entries.append({"name": name, "path": fname})
    desc = {
        "dims": list(vol.dims),
        "spacing": list(vol.spacing),
        "element_type": "float32le",
        "order": "x-fastest",
        "attributes": entries,
    }
    (out / "dataset.json").write_text(json.dumps(desc, indent=2))
    if labels is not None:
        labels.label.transpose(2, 1, 0).astype("<i4").tofile(out / "labels.raw")
    click.echo(f"wrote {out / 'dataset.json'}")


@main.command()
@click.argument("descriptor", type=click.Path(exists=True))
@_param_options
def precompute(descriptor, cache_dir, **kwargs):
    """Run the full pipeline, writing content-addressed cache artifacts."""
    from .pipeline import precompute as run

    params = _pipeline_params(kwargs)

    def report(frac, msg):
        click.echo(f"[{frac * 100:5.1f}%] {msg}")

    result = run(descriptor, params, cache_dir, progress=report)
    click.echo(f"cache keys: {json.dumps(result.keys)}")
    click.echo(f"stats: {json.dumps(result.stats)}")


@main.command()
@click.argument("descriptor", type=click.Path(exists=True))
@click.option("--subspace", type=int, default=0, show_default=True)
@click.option("--kind", type=click.Choice(["pair", "triple"]), default="pair")
@click.option("--gamma", type=float, default=1.0, show_default=True)
@click.option("--smoothed/--raw", default=True, show_default=True)
@click.option("-o", "--out", "out_path", type=click.Path(), required=True)
@_param_options
def density(descriptor, subspace, kind, gamma, smoothed, out_path,
            cache_dir, **kwargs):
    """Export one subspace's density image as PNG (requires precompute)."""
    from PIL import Image

    from .density import tone_map

    params = _pipeline_params(kwargs)
    result = _load_precomputed(descriptor, params, cache_dir)
    if kind == "pair":
        buffers = result.kde_buffers if smoothed else result.raw_buffers
    else:
        buffers = result.kde_triple_buffers if smoothed else result.raw_triple_buffers
    if subspace >= len(buffers):
        raise click.UsageError(f"subspace {subspace} out of range ({len(buffers)})")
    rgba = tone_map(buffers[subspace], gamma=gamma)
    Image.fromarray(rgba, "RGBA").save(out_path)
    click.echo(f"wrote {out_path}")


@main.command()
@click.argument("descriptor", type=click.Path(exists=True))
@click.option("--tf", "tf_path", type=click.Path(exists=True), required=True)
@click.option("--camera", "camera_path", type=click.Path(exists=True), required=True)
@click.option("--shading", type=click.Choice(["occlusion", "phong"]),
              default="occlusion", show_default=True)
@click.option("--sampling-rate", type=float, default=0.5, show_default=True)
@click.option("-o", "--out", "out_path", type=click.Path(), required=True)
@_param_options
def render(descriptor, tf_path, camera_path, shading, sampling_rate, out_path,
           cache_dir, **kwargs):
    """Classify with a transfer-function file and ray-cast to a PNG."""
    from .classify import TransferFunctionSet, classify_volume
    from .render import Camera, RenderParams, image_to_png_bytes, raycast

    params = _pipeline_params(kwargs)
    result = _load_precomputed(descriptor, params, cache_dir)
    tfs = TransferFunctionSet.from_json(Path(tf_path).read_text())
    cam = Camera.from_dict(json.loads(Path(camera_path).read_text()))
    covol = classify_volume(result.ipv, result.fitvol, tfs)
    rp = RenderParams(sampling_rate=sampling_rate, shading=shading)
    phong_attr = result.volume.attrs[0] if shading == "phong" else None
    img = raycast(covol, cam, rp, phong_attr=phong_attr)
    Path(out_path).write_bytes(image_to_png_bytes(img))
    click.echo(f"wrote {out_path}")


def _load_precomputed(descriptor, params, cache_dir):
    from .cache import ArtifactCache, artifact_key, dataset_digest
    from .pipeline import precompute as run

    cache = ArtifactCache(cache_dir)
    digest = dataset_digest(descriptor)
    octree_key = artifact_key(digest, stage="octree", t_s=params.t_s,
                              t_e=params.t_e, min_node=params.min_node,
                              radius=params.halfwidth)
    fit_key = artifact_key(digest, stage="fit", octree=octree_key,
                           halfwidth=params.halfwidth,
                           n_samples=params.n_samples, seed=params.seed)
    if not cache.has("fit", fit_key):
        raise click.ClickException(
            "no cached artifacts for these parameters; run `voxcorr precompute` first")
    return run(descriptor, params, cache_dir)


@main.command()
@click.option("--data-dir", type=click.Path(), default=".", show_default=True)
@click.option("--cache-dir", type=click.Path(), default=DEFAULT_CACHE,
              show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8710, show_default=True)
def serve(data_dir, cache_dir, host, port):
    """Start the HTTP studio service."""
    import uvicorn

    from .service import create_app

    app = create_app(data_dir=data_dir, cache_dir=cache_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
